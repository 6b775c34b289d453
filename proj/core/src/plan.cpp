#include "r3ds/plan.hpp"

#include <cmath>

#include "r3ds/window.hpp"

namespace r3ds {

std::vector<PlanEntry> encoder_param_plan(const EncoderConfig& cfg) {
    cfg.validate();
    std::vector<PlanEntry> plan;
    auto put = [&](std::string name, Shape shape) { plan.push_back({std::move(name), std::move(shape), true}); };

    int64_t pdim = int64_t(cfg.patch_size) * cfg.patch_size * 3;
    put("enc.patch_embed.proj.weight", {pdim, cfg.embed_dim});
    put("enc.patch_embed.proj.bias", {cfg.embed_dim});
    put("enc.patch_embed.norm.gamma", {cfg.embed_dim});
    put("enc.patch_embed.norm.beta", {cfg.embed_dim});
    for (int s = 0; s < 4; ++s) {
        int64_t c = cfg.stage_channels(s);
        int64_t H = cfg.heads[size_t(s)];
        int64_t hidden = int64_t(std::lround(cfg.mlp_ratio * double(c)));
        int M = cfg.stage_window(s);
        for (int j = 0; j < cfg.depths[size_t(s)]; ++j) {
            std::string base = "enc.stage" + std::to_string(s) + ".block" + std::to_string(j) + ".";
            put(base + "norm1.gamma", {c});
            put(base + "norm1.beta", {c});
            put(base + "norm2.gamma", {c});
            put(base + "norm2.beta", {c});
            put(base + "attn.q.weight", {c, c});
            put(base + "attn.q.bias", {c});
            put(base + "attn.k.weight", {c, c});
            put(base + "attn.k.bias", {c});
            put(base + "attn.v.weight", {c, c});
            put(base + "attn.v.bias", {c});
            put(base + "attn.proj.weight", {c, c});
            put(base + "attn.proj.bias", {c});
            if (cfg.variant == AttnVariant::V1BiasTable) {
                put(base + "attn.rel_bias_table", {relative_table_size(M), H});
            } else {
                put(base + "attn.logit_scale", {H});
                put(base + "attn.cpb.fc1.weight", {2, cfg.cpb_hidden});
                put(base + "attn.cpb.fc1.bias", {cfg.cpb_hidden});
                put(base + "attn.cpb.fc2.weight", {cfg.cpb_hidden, H});
            }
            put(base + "mlp.fc1.weight", {c, hidden});
            put(base + "mlp.fc1.bias", {hidden});
            put(base + "mlp.fc2.weight", {hidden, c});
            put(base + "mlp.fc2.bias", {c});
        }
        if (s < 3) {
            std::string base = "enc.stage" + std::to_string(s) + ".merge.";
            put(base + "norm.gamma", {4 * c});
            put(base + "norm.beta", {4 * c});
            put(base + "reduce.weight", {4 * c, 2 * c});
        }
    }
    put("enc.norm.gamma", {cfg.out_channels()});
    put("enc.norm.beta", {cfg.out_channels()});
    return plan;
}

std::vector<PlanEntry> decoder_param_plan(const DecoderConfig& cfg, int64_t in_features) {
    cfg.validate();
    std::vector<PlanEntry> plan;
    int64_t seed_elems = int64_t(cfg.seed_side) * cfg.seed_side * cfg.seed_side;
    plan.push_back({"dec.proj.weight", {in_features, seed_elems * cfg.seed_channels}, true});
    plan.push_back({"dec.proj.bias", {seed_elems * cfg.seed_channels}, true});
    int64_t cin = cfg.seed_channels;
    for (int k = 0; k < 3; ++k) {
        int64_t cout = cfg.up_channels[size_t(k)];
        std::string base = "dec.up" + std::to_string(k) + ".";
        plan.push_back({base + "conv.weight", {cin, cout, 4, 4, 4}, true});
        plan.push_back({base + "conv.bias", {cout}, true});
        plan.push_back({base + "bn.gamma", {cout}, true});
        plan.push_back({base + "bn.beta", {cout}, true});
        plan.push_back({base + "bn.running_mean", {cout}, false});
        plan.push_back({base + "bn.running_var", {cout}, false});
        cin = cout;
    }
    plan.push_back({"dec.head.weight", {cin, 1}, true});
    plan.push_back({"dec.head.bias", {1}, true});
    return plan;
}

std::vector<PlanEntry> model_param_plan(const EncoderConfig& ec, const DecoderConfig& dc) {
    std::vector<PlanEntry> plan = encoder_param_plan(ec);
    std::vector<PlanEntry> dec = decoder_param_plan(dc, ec.out_features());
    plan.insert(plan.end(), dec.begin(), dec.end());
    return plan;
}

std::string param_group(const std::string& name) {
    size_t first = name.find('.');
    if (first == std::string::npos) return name;
    size_t second = name.find('.', first + 1);
    return second == std::string::npos ? name : name.substr(0, second);
}

std::vector<GroupCount> count_by_group(const std::vector<PlanEntry>& plan) {
    std::vector<GroupCount> out;
    for (const PlanEntry& e : plan) {
        if (!e.trainable) continue;
        std::string g = param_group(e.name);
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const GroupCount& gc) { return gc.group == g; });
        if (it == out.end())
            out.push_back({g, e.numel()});
        else
            it->count += e.numel();
    }
    return out;
}

int64_t count_total(const std::vector<PlanEntry>& plan) {
    int64_t n = 0;
    for (const PlanEntry& e : plan)
        if (e.trainable) n += e.numel();
    return n;
}

int64_t decoder_cnn_param_count(const DecoderConfig& cfg) {
    int64_t n = 0;
    int64_t cin = cfg.seed_channels;
    for (int k = 0; k < 3; ++k) {
        int64_t cout = cfg.up_channels[size_t(k)];
        n += cin * cout * 64 + cout;  // transposed conv
        n += 2 * cout;                // batch-norm affine
        cin = cout;
    }
    n += cin * 1 + 1;  // head
    return n;
}

std::vector<StageShape> encoder_schedule(const EncoderConfig& cfg) {
    std::vector<StageShape> out;
    for (int s = 0; s < 4; ++s) {
        int post = std::min(s + 1, 3);
        out.push_back({cfg.base_grid() >> post, cfg.embed_dim << post});
    }
    return out;
}

std::vector<int> decoder_ladder(const DecoderConfig& cfg) {
    return {cfg.seed_side, cfg.seed_side * 2, cfg.seed_side * 4, cfg.seed_side * 8};
}

}  // namespace r3ds
