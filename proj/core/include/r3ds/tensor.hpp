#pragma once
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "r3ds/errors.hpp"

namespace r3ds {

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline Shape row_major_strides(const Shape& s) {
    Shape st(s.size(), 1);
    for (int i = int(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

// Dense row-major n-d array of scalars. Plain value type: copying copies data.
// `node` is a handle onto the tape that recorded this tensor (see tape.hpp);
// -1 means the tensor is a constant as far as autodiff is concerned.
template <typename S>
struct TensorT {
    Shape shape;
    std::vector<S> data;
    int node = -1;
    uint64_t tape_serial = 0;
    bool requires_grad = false;

    TensorT() = default;
    TensorT(Shape sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
        if (int64_t(data.size()) != shape_numel(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        for (int64_t d_ : shape)
            if (d_ <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    }

    static TensorT zeros(Shape sh) {
        int64_t n = shape_numel(sh);
        return TensorT(std::move(sh), std::vector<S>(size_t(n), S(0)));
    }
    static TensorT full(Shape sh, S v) {
        int64_t n = shape_numel(sh);
        return TensorT(std::move(sh), std::vector<S>(size_t(n), v));
    }
    static TensorT scalar(S v) { return TensorT({1}, {v}); }

    int64_t numel() const { return int64_t(data.size()); }
    int ndim() const { return int(shape.size()); }
    int64_t dim(int i) const { return shape[size_t(i < 0 ? i + ndim() : i)]; }

    S& operator[](int64_t i) { return data[size_t(i)]; }
    const S& operator[](int64_t i) const { return data[size_t(i)]; }

    S& at(std::initializer_list<int64_t> idx) {
        int64_t off = 0, k = 0;
        Shape st = row_major_strides(shape);
        for (int64_t i : idx) off += i * st[size_t(k++)];
        return data[size_t(off)];
    }
    const S& at(std::initializer_list<int64_t> idx) const {
        return const_cast<TensorT*>(this)->at(idx);
    }

    TensorT reshaped(Shape sh) const {
        if (shape_numel(sh) != numel())
            throw ShapeError("cannot reshape " + shape_str(shape) + " to " + shape_str(sh));
        TensorT out = *this;
        out.shape = std::move(sh);
        out.node = -1;
        out.tape_serial = 0;
        return out;
    }

    template <typename T2>
    TensorT<T2> cast() const {
        TensorT<T2> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = T2(data[i]);
        return out;
    }
};

using Tensor32 = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename S>
inline void ensure_finite(const TensorT<S>& t, const char* where) {
    for (const S& v : t.data)
        if (!std::isfinite(double(v)))
            throw NumericsError(std::string("non-finite value in ") + where);
}

// NumPy-style right-aligned broadcast of two shapes.
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* who) {
    size_t n = std::max(a.size(), b.size());
    Shape out(n);
    for (size_t i = 0; i < n; ++i) {
        int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError(std::string(who) + ": cannot broadcast " + shape_str(a) + " with " +
                             shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

}  // namespace r3ds
