#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "sgr/error.hpp"
#include "sgr/tape.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

// Named parameter tensors with a stable insertion order. The order fixes the
// layout of gradient vectors, optimizer state and checkpoints.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor init) {
        require(!index_.count(name), "ParamStore: duplicate parameter " + name);
        index_[name] = static_cast<int>(names_.size());
        names_.push_back(name);
        values_.push_back(std::move(init));
        return values_.back();
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor& get(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), "ParamStore: unknown parameter " + name);
        return values_[it->second];
    }

    const Tensor& get(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "ParamStore: unknown parameter " + name);
        return values_[it->second];
    }

    int index_of(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "ParamStore: unknown parameter " + name);
        return it->second;
    }

    size_t count() const { return names_.size(); }
    const std::string& name(size_t i) const { return names_[i]; }
    Tensor& value(size_t i) { return values_[i]; }
    const Tensor& value(size_t i) const { return values_[i]; }

    size_t scalar_count() const {
        size_t n = 0;
        for (const Tensor& t : values_) n += t.size();
        return n;
    }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
    std::vector<Tensor> values_;
};

// All parameters of a store registered on one tape, addressable by name.
struct BoundParams {
    Tape* tape = nullptr;
    const ParamStore* store = nullptr;
    std::vector<Tape::Val> vals;

    Tape::Val operator[](const std::string& name) const {
        return vals[store->index_of(name)];
    }
};

inline BoundParams bind_params(Tape& tape, const ParamStore& store, bool requires_grad = true) {
    BoundParams bp;
    bp.tape = &tape;
    bp.store = &store;
    bp.vals.reserve(store.count());
    for (size_t i = 0; i < store.count(); ++i)
        bp.vals.push_back(tape.leaf(store.value(i), requires_grad));
    return bp;
}

// Gradients aligned with store order, available after tape.backward().
inline std::vector<Tensor> collect_gradients(const Tape& tape, const BoundParams& bp) {
    std::vector<Tensor> out;
    out.reserve(bp.vals.size());
    for (Tape::Val v : bp.vals) out.push_back(tape.grad(v));
    return out;
}

} // namespace sgr
