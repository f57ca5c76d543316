#include "gradmorph/binding.hpp"

#include <cmath>

#include "gradmorph/errors.hpp"
#include "gradmorph/rng.hpp"

namespace gradmorph {

BoundParams bind_params(TapeGraph& tape, const ParamSet& params, bool trainable) {
    BoundParams bp;
    bp.values.reserve(params.count());
    for (const Tensor& t : params.tensors)
        bp.values.push_back(trainable ? tape.leaf(t) : tape.constant(t));
    return bp;
}

void accumulate_param_grads(TapeGraph& tape, const BoundParams& bound, std::vector<Tensor>& acc) {
    if (acc.size() != bound.values.size())
        throw ContractViolation("accumulate_param_grads: accumulator count mismatch");
    for (std::size_t i = 0; i < bound.values.size(); ++i) {
        const Tensor g = tape.gradient(bound.values[i]);
        Tensor& a = acc[i];
        for (std::int64_t j = 0; j < a.size(); ++j) a[j] += g[j];
    }
}

ParamSet init_he_params(const std::vector<ConvSpec>& layers, std::uint64_t seed) {
    ParamSet params;
    Rng rng(seed);
    for (const ConvSpec& l : layers) {
        const double fan_in = static_cast<double>(l.in_ch) * l.k * l.k;
        const double stddev = std::sqrt(2.0 / fan_in);
        Tensor w({l.out_ch, l.in_ch, l.k, l.k});
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
        params.add(l.name + ".w", std::move(w));
        params.add(l.name + ".b", Tensor::zeros({l.out_ch}));
    }
    return params;
}

Value conv_layer(TapeGraph& tape, const BoundParams& bound, std::size_t& idx, Value x, bool with_relu) {
    Value w = bound.values[idx++];
    Value b = bound.values[idx++];
    Value y = tape.conv2d(x, w, b, Padding::Same);
    return with_relu ? tape.relu(y) : y;
}

std::int64_t conv_param_count(const std::vector<ConvSpec>& layers) {
    std::int64_t n = 0;
    for (const ConvSpec& l : layers)
        n += static_cast<std::int64_t>(l.out_ch) * l.in_ch * l.k * l.k + l.out_ch;
    return n;
}

}  // namespace gradmorph
