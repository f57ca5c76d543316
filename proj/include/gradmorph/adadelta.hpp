#pragma once

#include <vector>

#include "gradmorph/params.hpp"
#include "gradmorph/tensor.hpp"

namespace gradmorph {

// Accumulator-form Adadelta:
//   E[g^2]  <- rho E[g^2]  + (1-rho) g^2
//   dx       = -(sqrt(E[dx^2]+eps) / sqrt(E[g^2]+eps)) g
//   E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
//   param   += dx
struct AdadeltaState {
    double rho = 0.95;
    double epsilon = 1e-6;
    std::vector<Tensor> grad_sq;   // E[g^2], parallel to the ParamSet
    std::vector<Tensor> delta_sq;  // E[dx^2]

    static AdadeltaState for_params(const ParamSet& params, double rho = 0.95, double epsilon = 1e-6);
    bool initialized() const { return !grad_sq.empty(); }
};

// In-place update of params from grads; grads must be shaped like params.
void adadelta_step(ParamSet& params, const std::vector<Tensor>& grads, AdadeltaState& state);

}  // namespace gradmorph
