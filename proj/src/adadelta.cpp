#include "gradmorph/adadelta.hpp"

#include <cmath>

#include "gradmorph/errors.hpp"

namespace gradmorph {

std::vector<Tensor> zeros_like(const ParamSet& params) {
    std::vector<Tensor> out;
    out.reserve(params.count());
    for (const Tensor& t : params.tensors) out.push_back(Tensor::zeros(t.shape));
    return out;
}

AdadeltaState AdadeltaState::for_params(const ParamSet& params, double rho, double epsilon) {
    AdadeltaState s;
    s.rho = rho;
    s.epsilon = epsilon;
    s.grad_sq = zeros_like(params);
    s.delta_sq = zeros_like(params);
    return s;
}

void adadelta_step(ParamSet& params, const std::vector<Tensor>& grads, AdadeltaState& state) {
    if (grads.size() != params.count() || state.grad_sq.size() != params.count())
        throw ContractViolation("adadelta_step: parameter/gradient/state count mismatch");
    for (std::size_t i = 0; i < params.count(); ++i) {
        Tensor& p = params.tensors[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g))
            throw ContractViolation("adadelta_step: gradient shape " + g.shape_str() + " != param '" +
                                    params.names[i] + "' shape " + p.shape_str());
        Tensor& eg = state.grad_sq[i];
        Tensor& ed = state.delta_sq[i];
        for (std::int64_t j = 0; j < p.size(); ++j) {
            const double gv = g[j];
            eg[j] = state.rho * eg[j] + (1.0 - state.rho) * gv * gv;
            const double dx = -(std::sqrt(ed[j] + state.epsilon) / std::sqrt(eg[j] + state.epsilon)) * gv;
            ed[j] = state.rho * ed[j] + (1.0 - state.rho) * dx * dx;
            p[j] += dx;
        }
    }
}

}  // namespace gradmorph
