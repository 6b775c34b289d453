#pragma once
#include <cmath>

#include "r3ds/tensor.hpp"

namespace r3ds {

struct AdamWHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

// First/second moment buffers plus the step counter for one parameter.
template <typename S>
struct AdamWState {
    TensorT<S> m;
    TensorT<S> v;
    int64_t t = 0;

    static AdamWState init(const Shape& shape) {
        return {TensorT<S>::zeros(shape), TensorT<S>::zeros(shape), 0};
    }
};

// One AdamW update. Weight decay is decoupled: the shrink is applied to the
// parameter directly and never enters the moment estimates.
template <typename S>
void adamw_step(TensorT<S>& param, const TensorT<S>& grad, AdamWState<S>& st,
                const AdamWHyper& h) {
    if (param.shape != grad.shape || param.shape != st.m.shape)
        throw ShapeError("adamw_step: parameter " + shape_str(param.shape) + " vs gradient " +
                         shape_str(grad.shape));
    for (const S& g : grad.data)
        if (!std::isfinite(double(g)))
            throw NumericsError("adamw_step: poisoned gradient (NaN/Inf)");

    st.t += 1;
    const S lr = S(h.lr), b1 = S(h.beta1), b2 = S(h.beta2), eps = S(h.eps);
    const S decay = S(1.0 - h.lr * h.weight_decay);
    const S bc1 = S(1.0 - std::pow(h.beta1, double(st.t)));
    const S bc2 = S(1.0 - std::pow(h.beta2, double(st.t)));
    for (size_t i = 0; i < param.data.size(); ++i) {
        S g = grad.data[i];
        param.data[i] *= decay;
        st.m.data[i] = b1 * st.m.data[i] + (S(1) - b1) * g;
        st.v.data[i] = b2 * st.v.data[i] + (S(1) - b2) * g * g;
        S mhat = st.m.data[i] / bc1;
        S vhat = st.v.data[i] / bc2;
        param.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace r3ds
