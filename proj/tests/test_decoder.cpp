#include "doctest.h"
#include "oracles.hpp"
#include "r3ds/model.hpp"
#include "r3ds/plan.hpp"

using namespace r3ds;

namespace {

DecoderConfig tiny_dec() {
    DecoderConfig d;
    d.seed_channels = 8;
    d.up_channels = {6, 4, 3};
    return d;
}

}  // namespace

TEST_CASE("project_to_volume: shape, zero case and one-hot indexing") {
    ParamStore<double> store;
    VoxelDecoder<double> dec = VoxelDecoder<double>::build(tiny_dec(), 24, store, 5);
    Tensor64 fm = Tensor64::zeros({2, 2, 3, 4});  // flattens to 24
    Tensor64 vol = dec.project(nullptr, store, fm);
    REQUIRE(vol.shape == Shape{2, 8, 4, 4, 4});
    for (double v : vol.data) CHECK(v == 0.0);  // zero features, zero bias

    // one-hot feature selects one projection-matrix row, reshaped (c,z,y,x)
    Tensor64 hot = Tensor64::zeros({1, 2, 3, 4});
    hot.data[7] = 1.0;
    Tensor64 vhot = dec.project(nullptr, store, hot);
    const Tensor64& W = store.value(dec.proj_w);
    for (int64_t o = 0; o < 8 * 64; ++o)
        CHECK(vhot.data[size_t(o)] == doctest::Approx(W.at({7, o})).epsilon(1e-12));
}

TEST_CASE("upsample block: doubling law, zero input pattern, gradient") {
    ParamStore<double> store;
    VoxelDecoder<double> dec = VoxelDecoder<double>::build(tiny_dec(), 24, store, 6);
    Tensor64 x = Tensor64::zeros({2, 8, 4, 4, 4});
    Tensor64 y = dec.upsample(nullptr, store, x, 0, false);
    REQUIRE(y.shape == Shape{2, 6, 8, 8, 8});
    // zero input -> relu(batchnorm(bias)): spatially constant per channel
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t c = 0; c < 6; ++c) {
            double first = y.data[size_t((n * 6 + c) * 512)];
            for (int64_t i = 0; i < 512; ++i)
                CHECK(y.data[size_t((n * 6 + c) * 512 + i)] == first);
        }

    Rng rng = Rng::stream(61, "upg");
    Tensor64 xr = oracle::random_tensor({1, 8, 2, 2, 2}, rng);
    // gradient through conv+bn+relu in eval mode (deterministic stats)
    ParamStore<double> store2;
    VoxelDecoder<double> dec2 = VoxelDecoder<double>::build(tiny_dec(), 24, store2, 7);
    Tensor64& cw = store2.value(dec2.ups[0].conv_w);
    Tensor64& gamma = store2.value(dec2.ups[0].bn_g);
    double err = oracle::grad_check(
        [&](Tape<double>* tp) { return dec2.upsample(tp, store2, xr, 0, false); },
        {&xr, &gamma}, 7, 1e-5);
    CHECK(err < 1e-3);
    (void)cw;
}

TEST_CASE("decode: 32^3 probabilities, zero-weight fixed point") {
    EncoderConfig ec = EncoderConfig::preset("tiny");
    ParamStore<float> store;
    VoxelDecoder<float> dec = VoxelDecoder<float>::build(DecoderConfig::preset("tiny"),
                                                         ec.out_features(), store, 8);
    Rng rng = Rng::stream(62, "dec");
    Tensor32 fm = Tensor32::zeros({1, 2, 2, 128});
    for (float& v : fm.data) v = float(rng.uniform(-1, 1));
    Tensor32 probs = dec.forward(nullptr, store, fm, false);
    REQUIRE(probs.shape == Shape{1, 32, 32, 32});
    for (float v : probs.data) {
        CHECK(v > 0.f);
        CHECK(v < 1.f);
    }

    for (auto& e : store.entries())
        if (e.trainable)
            for (float& v : e.value.data) v = 0.f;
    Tensor32 half = dec.forward(nullptr, store, fm, false);
    for (float v : half.data) CHECK(v == 0.5f);
}

TEST_CASE("decoder ladder and closed-form parameter count") {
    for (const char* preset : {"tiny", "desk", "paper"}) {
        DecoderConfig dc = DecoderConfig::preset(preset);
        std::vector<int> ladder = decoder_ladder(dc);
        CHECK(ladder == std::vector<int>{4, 8, 16, 32});
    }
    // hand count for the desk schedule 64 -> 32 -> 16 -> 8 -> head
    DecoderConfig dc = DecoderConfig::preset("desk");
    int64_t hand = (64 * 32 * 64 + 32 + 2 * 32) + (32 * 16 * 64 + 16 + 2 * 16) +
                   (16 * 8 * 64 + 8 + 2 * 8) + (8 + 1);
    CHECK(decoder_cnn_param_count(dc) == hand);

    // paper-scale figure brackets a ~1.2M decoder
    int64_t paper = decoder_cnn_param_count(DecoderConfig::preset("paper"));
    CHECK(paper >= 600000);
    CHECK(paper <= 2400000);
}

TEST_CASE("decoder has no attention anywhere (architecture assertion)") {
    std::vector<PlanEntry> plan = decoder_param_plan(DecoderConfig::preset("desk"), 512);
    for (const PlanEntry& e : plan) {
        CHECK(e.name.find("attn") == std::string::npos);
        CHECK(e.name.find("mlp") == std::string::npos);
        CHECK(e.name.rfind("dec.", 0) == 0);
    }
}

TEST_CASE("param plan matches the built store exactly (names, shapes, flags)") {
    EncoderConfig ec = EncoderConfig::preset("desk");
    DecoderConfig dc = DecoderConfig::preset("desk");
    Model<float> m = Model<float>::build(ec, dc, 99);
    std::vector<PlanEntry> plan = model_param_plan(ec, dc);
    REQUIRE(plan.size() == m.params.size());
    for (size_t i = 0; i < plan.size(); ++i) {
        CHECK(plan[i].name == m.params.entry(int(i)).name);
        CHECK(plan[i].shape == m.params.entry(int(i)).value.shape);
        CHECK(plan[i].trainable == m.params.entry(int(i)).trainable);
    }
    CHECK(count_total(plan) == m.params.trainable_numel());
}

TEST_CASE("model end-to-end: probabilities and a sampled finite-difference check") {
    EncoderConfig ec = EncoderConfig::preset("tiny");
    ec.image_size = 32;  // small and fast; grid 8 validates
    DecoderConfig dc;
    dc.seed_channels = 6;
    dc.up_channels = {5, 4, 3};
    Model<double> m = Model<double>::build(ec, dc, 31);
    Rng rng = Rng::stream(63, "model");
    Tensor64 img = oracle::random_tensor({1, 3, 32, 32}, rng, 0, 1);
    Tensor64 probs = m.forward(nullptr, img, false);
    REQUIRE(probs.shape == Shape{1, 32, 32, 32});

    Tensor64 target = Tensor64::zeros({1, 32 * 32 * 32});
    for (double& v : target.data) v = rng.next_double() < 0.3 ? 1.0 : 0.0;

    Tape<double> tape;
    std::vector<int> probe_ids;
    for (const char* name : {"enc.stage0.block0.attn.q.weight", "enc.stage2.block0.mlp.fc1.weight",
                             "dec.up1.conv.weight", "dec.head.weight", "dec.proj.weight"})
        probe_ids.push_back(m.params.find(name));
    for (int id : probe_ids) {
        REQUIRE(id >= 0);
        tape.watch(m.params.value(id));
    }
    Tensor64 loss = m.loss(&tape, img, target, false);
    tape.backward(loss);

    auto eval = [&]() { return m.loss(nullptr, img, target, false).data[0]; };
    Rng pick = Rng::stream(64, "probe");
    for (int id : probe_ids) {
        Tensor64& p = m.params.value(id);
        Tensor64 g = tape.grad(p);
        int64_t i = int64_t(pick.next_below(uint64_t(p.numel())));
        double saved = p.data[size_t(i)];
        p.data[size_t(i)] = saved + 1e-4;
        double fp = eval();
        p.data[size_t(i)] = saved - 1e-4;
        double fm = eval();
        p.data[size_t(i)] = saved;
        double numeric = (fp - fm) / 2e-4;
        CHECK(fd_rel_err(g.data[size_t(i)], numeric) < 1e-3);
    }
}
