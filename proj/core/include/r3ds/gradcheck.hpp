#pragma once
#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "r3ds/finitediff.hpp"
#include "r3ds/model.hpp"
#include "r3ds/plan.hpp"
#include "r3ds/synth.hpp"

// Whole-model gradient check: dice loss of the full encoder/decoder stack on
// a synthetic sample, analytic tape gradients vs central finite differences.
// Runs in 64-bit scalars with batch norm in eval mode (frozen stats) so the
// objective is a deterministic pure function of the parameters.

namespace r3ds {

struct GradcheckItem {
    std::string name;
    int64_t index = 0;
    double analytic = 0;
    double numeric = 0;
    double rel_err = 0;
};

struct GradcheckReport {
    double max_rel_err = 0;
    std::vector<GradcheckItem> items;
    std::vector<std::pair<std::string, double>> per_group_max;

    bool pass(double threshold = 1e-3) const { return max_rel_err < threshold; }

    std::string summary() const {
        std::ostringstream os;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-44s %6s %14s %14s %10s\n", "parameter", "idx", "analytic",
                      "numeric", "rel_err");
        os << buf;
        for (const GradcheckItem& it : items) {
            std::snprintf(buf, sizeof buf, "%-44s %6lld %14.6e %14.6e %10.3e\n", it.name.c_str(),
                          static_cast<long long>(it.index), it.analytic, it.numeric, it.rel_err);
            os << buf;
        }
        os << "per-module max relative error:\n";
        for (const auto& [group, err] : per_group_max) {
            std::snprintf(buf, sizeof buf, "  %-20s %10.3e\n", group.c_str(), err);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "max relative error: %.3e\n", max_rel_err);
        os << buf;
        return os.str();
    }
};

// `tamper_param`/`tamper_delta` corrupt one analytic gradient before the
// comparison; the negative-control fixture for testing the checker itself.
inline GradcheckReport run_gradcheck(const FullConfig& cfg, uint64_t seed, int max_coords = 50,
                                     double h = 1e-4, const std::string& tamper_param = "",
                                     double tamper_delta = 0.0) {
    Model<double> model = Model<double>::build(cfg.encoder, cfg.decoder, seed);

    ImageSample sample = gen_sample(seed, 0, cfg.encoder.image_size);
    Tensor64 image = Tensor64::zeros({1, 3, cfg.encoder.image_size, cfg.encoder.image_size});
    for (size_t i = 0; i < sample.image.values.size(); ++i)
        image.data[i] = double(sample.image.values[i]);
    Tensor64 target = Tensor64::zeros({1, sample.voxels.numel()});
    for (size_t i = 0; i < sample.voxels.values.size(); ++i)
        target.data[i] = double(sample.voxels.values[i]);

    // analytic gradients for every parameter in one backward pass
    Tape<double> tape;
    model.params.watch_all(tape);
    Tensor64 loss = model.loss(&tape, image, target, false);
    tape.backward(loss);
    std::vector<Tensor64> grads(model.params.size());
    std::vector<int> trainable_ids;
    for (size_t i = 0; i < model.params.size(); ++i) {
        if (!model.params.entry(int(i)).trainable) continue;
        grads[i] = tape.grad(model.params.entry(int(i)).value);
        trainable_ids.push_back(int(i));
    }
    if (!tamper_param.empty()) {
        int id = model.params.find(tamper_param);
        if (id < 0) throw ContractError("gradcheck: unknown tamper parameter " + tamper_param);
        for (double& v : grads[size_t(id)].data) v += tamper_delta;
    }

    // spread the probe budget across the parameter roster
    int n = int(trainable_ids.size());
    int probes = std::min(max_coords, n);
    std::vector<FdCoord> coords;
    for (int k = 0; k < probes; ++k) {
        int pos = probes > 1 ? int(int64_t(k) * (n - 1) / (probes - 1)) : 0;
        int id = trainable_ids[size_t(pos)];
        Rng rng = Rng::stream(seed, "gradcheck-coord", uint64_t(id));
        int64_t index = int64_t(rng.next_below(uint64_t(model.params.entry(id).value.numel())));
        coords.push_back({id, index});
    }

    auto eval = [&]() { return model.loss(nullptr, image, target, false).data[0]; };
    GradcheckReport rep;
    std::map<std::string, double> group_max;
    for (const FdCoord& c : coords) {
        Tensor64& p = model.params.value(c.param_id);
        double saved = p.data[size_t(c.index)];
        p.data[size_t(c.index)] = saved + h;
        double fp = eval();
        p.data[size_t(c.index)] = saved - h;
        double fm = eval();
        p.data[size_t(c.index)] = saved;
        GradcheckItem it;
        it.name = model.params.entry(c.param_id).name;
        it.index = c.index;
        it.analytic = grads[size_t(c.param_id)].data[size_t(c.index)];
        it.numeric = (fp - fm) / (2 * h);
        it.rel_err = fd_rel_err(it.analytic, it.numeric);
        rep.max_rel_err = std::max(rep.max_rel_err, it.rel_err);
        std::string group = param_group(it.name);
        group_max[group] = std::max(group_max[group], it.rel_err);
        rep.items.push_back(std::move(it));
    }
    rep.per_group_max.assign(group_max.begin(), group_max.end());
    return rep;
}

}  // namespace r3ds
