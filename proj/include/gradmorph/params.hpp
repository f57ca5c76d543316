#pragma once

#include <string>
#include <vector>

#include "gradmorph/tensor.hpp"

namespace gradmorph {

// Ordered, named parameter collection. Order is the architecture build
// order and is the canonical order for checkpoints, optimizer state and
// gradient accumulation.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    Tensor& add(const std::string& name, Tensor t) {
        names.push_back(name);
        tensors.push_back(std::move(t));
        return tensors.back();
    }

    std::size_t count() const { return tensors.size(); }

    std::int64_t total_elements() const {
        std::int64_t n = 0;
        for (const Tensor& t : tensors) n += t.size();
        return n;
    }

    const Tensor* find(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return &tensors[i];
        return nullptr;
    }

    bool all_finite() const {
        for (const Tensor& t : tensors)
            if (!t.all_finite()) return false;
        return true;
    }

    bool operator==(const ParamSet& o) const {
        if (names != o.names) return false;
        for (std::size_t i = 0; i < tensors.size(); ++i)
            if (tensors[i].shape != o.tensors[i].shape || tensors[i].data != o.tensors[i].data) return false;
        return true;
    }
};

// Zero tensors shaped like the given parameters, for gradient accumulation.
std::vector<Tensor> zeros_like(const ParamSet& params);

}  // namespace gradmorph
