#pragma once
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "r3ds/params.hpp"

// Central finite-difference gradient checking. The objective must be a
// deterministic pure function of the parameters (stochastic layers pinned to
// eval mode, fixed inputs); evaluations are meant to run in 64-bit scalars.

namespace r3ds {

struct FdRecord {
    std::string param;
    int64_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct FdReport {
    double max_rel_err = 0.0;
    std::vector<FdRecord> records;
};

inline double fd_rel_err(double analytic, double numeric) {
    double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

// Coordinates to probe: (parameter id in the store, flat element index).
struct FdCoord {
    int param_id = 0;
    int64_t index = 0;
};

// `eval` computes the scalar objective from the store's current values;
// `analytic` holds one gradient tensor per probed parameter id.
template <typename S>
FdReport finite_diff_check(ParamStore<S>& store, const std::vector<FdCoord>& coords,
                           const std::function<double()>& eval,
                           const std::function<const TensorT<S>&(int)>& analytic, double h = 1e-4) {
    FdReport rep;
    for (const FdCoord& c : coords) {
        TensorT<S>& p = store.value(c.param_id);
        S saved = p.data[size_t(c.index)];
        p.data[size_t(c.index)] = S(double(saved) + h);
        double fp = eval();
        p.data[size_t(c.index)] = S(double(saved) - h);
        double fm = eval();
        p.data[size_t(c.index)] = saved;
        double numeric = (fp - fm) / (2.0 * h);
        double an = double(analytic(c.param_id).data[size_t(c.index)]);
        FdRecord r{store.entry(c.param_id).name, c.index, an, numeric, fd_rel_err(an, numeric)};
        rep.max_rel_err = std::max(rep.max_rel_err, r.rel_err);
        rep.records.push_back(std::move(r));
    }
    return rep;
}

}  // namespace r3ds
