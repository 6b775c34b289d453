#pragma once
#include <string>
#include <unordered_map>
#include <vector>

#include "r3ds/rng.hpp"
#include "r3ds/tape.hpp"
#include "r3ds/tensor.hpp"

namespace r3ds {

// Named parameter registry. Entries keep registration order (checkpoint and
// optimizer iteration order); initialization draws from a PRNG stream keyed
// by the parameter name, so values do not depend on registration order.
// Non-trainable entries are buffers (e.g. batch-norm running stats): they are
// checkpointed but excluded from gradients, the optimizer and param counts.
template <typename S>
class ParamStore {
public:
    struct Entry {
        std::string name;
        TensorT<S> value;
        bool trainable = true;
    };

    int add(std::string name, TensorT<S> value, bool trainable = true) {
        if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
        int id = int(entries_.size());
        index_.emplace(name, id);
        entries_.push_back({std::move(name), std::move(value), trainable});
        return id;
    }

    int find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? -1 : it->second;
    }

    TensorT<S>& value(int id) { return entries_[size_t(id)].value; }
    const TensorT<S>& value(int id) const { return entries_[size_t(id)].value; }
    TensorT<S>& value(const std::string& name) {
        int id = find(name);
        if (id < 0) throw ContractError("unknown parameter: " + name);
        return entries_[size_t(id)].value;
    }
    const Entry& entry(int id) const { return entries_[size_t(id)]; }
    size_t size() const { return entries_.size(); }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    int64_t trainable_numel() const {
        int64_t n = 0;
        for (const Entry& e : entries_)
            if (e.trainable) n += e.value.numel();
        return n;
    }

    // Put every trainable parameter on the tape as a leaf.
    void watch_all(Tape<S>& tape) {
        for (Entry& e : entries_)
            if (e.trainable) tape.watch(e.value);
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
};

// --- seeded initializers ------------------------------------------------------

template <typename S>
TensorT<S> init_trunc_normal(uint64_t seed, const std::string& name, Shape shape, double stddev) {
    Rng rng = Rng::stream(seed, name);
    TensorT<S> t = TensorT<S>::zeros(std::move(shape));
    for (S& v : t.data) v = S(rng.truncated_normal(stddev));
    return t;
}

template <typename S>
TensorT<S> init_normal(uint64_t seed, const std::string& name, Shape shape, double stddev) {
    Rng rng = Rng::stream(seed, name);
    TensorT<S> t = TensorT<S>::zeros(std::move(shape));
    for (S& v : t.data) v = S(rng.normal() * stddev);
    return t;
}

}  // namespace r3ds
