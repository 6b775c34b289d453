#pragma once
#include <atomic>
#include <functional>
#include <utility>
#include <vector>

#include "r3ds/tensor.hpp"

namespace r3ds {

// Reverse-mode autodiff tape. Operations append nodes in execution order, so
// node ids are already a topological order; backward walks ids in reverse and
// fires each node's rule at most once. A tape is single-writer: one thread
// records one forward pass and runs its backward. Tensors remember which tape
// issued their node id (tape_serial), so handles from a discarded tape are
// ignored instead of silently linking into a fresh one.
template <typename S>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const TensorT<S>&)>;

    Tape() : serial_(next_serial()) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    uint64_t serial() const { return serial_; }
    int size() const { return int(nodes_.size()); }

    // Register a leaf (parameter). Gradients accumulate at leaves; unused
    // leaves read back as zeros.
    int watch(TensorT<S>& t) {
        t.node = push(t.shape, {}, nullptr);
        t.tape_serial = serial_;
        t.requires_grad = true;
        return t.node;
    }

    // Record an op output. `parents` are tape node ids of the inputs that
    // need gradient; `fn` routes the output gradient to them via accum().
    void record(TensorT<S>& out, std::vector<int> parents, BackwardFn fn) {
        out.node = push(out.shape, std::move(parents), std::move(fn));
        out.tape_serial = serial_;
        out.requires_grad = true;
    }

    // Node id of `t` on *this* tape, or -1 if it is a constant here.
    int node_of(const TensorT<S>& t) const {
        return (t.tape_serial == serial_ && t.node >= 0 && t.node < size()) ? t.node : -1;
    }

    void accum(int node, const TensorT<S>& delta) {
        ensure_finite(delta, "backward gradient");
        if (delta.numel() != shape_numel(nodes_[size_t(node)].shape))
            throw ContractError("accum: gradient size does not match node shape");
        TensorT<S>& g = grads_[size_t(node)];
        if (g.data.empty()) {
            g = delta;
            g.shape = nodes_[size_t(node)].shape;
            return;
        }
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += delta.data[i];
    }

    // Run reverse accumulation from a scalar loss recorded on this tape.
    void backward(const TensorT<S>& loss) {
        int root = node_of(loss);
        if (root < 0) throw ContractError("backward: loss is not recorded on this tape");
        if (loss.numel() != 1) throw ContractError("backward: loss must be a scalar");
        ensure_finite(loss, "loss");
        accum(root, TensorT<S>::scalar(S(1)));
        for (int id = root; id >= 0; --id) {
            Node& n = nodes_[size_t(id)];
            TensorT<S>& g = grads_[size_t(id)];
            if (g.data.empty() || !n.backward) continue;
            n.backward(*this, g);
        }
    }

    // Gradient of a leaf/op output; zeros if the loss never touched it.
    TensorT<S> grad(int node) const {
        const TensorT<S>& g = grads_[size_t(node)];
        if (g.data.empty()) return TensorT<S>::zeros(nodes_[size_t(node)].shape);
        return g;
    }

    TensorT<S> grad(const TensorT<S>& t) const {
        int id = node_of(t);
        if (id < 0) throw ContractError("grad: tensor is not on this tape");
        return grad(id);
    }

private:
    struct Node {
        Shape shape;
        std::vector<int> parents;
        BackwardFn backward;
    };

    int push(Shape shape, std::vector<int> parents, BackwardFn fn) {
        nodes_.push_back({std::move(shape), std::move(parents), std::move(fn)});
        grads_.emplace_back();
        return int(nodes_.size()) - 1;
    }

    static uint64_t next_serial() {
        static std::atomic<uint64_t> n{1};
        return n.fetch_add(1);
    }

    std::vector<Node> nodes_;
    std::vector<TensorT<S>> grads_;
    uint64_t serial_;
};

}  // namespace r3ds
