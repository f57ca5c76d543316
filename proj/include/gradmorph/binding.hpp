#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradmorph/params.hpp"
#include "gradmorph/tape.hpp"

namespace gradmorph {

// Parameters registered on a tape, parallel to ParamSet order.
struct BoundParams {
    std::vector<Value> values;
};

// trainable=true registers leaves (gradients flow), false registers
// constants (inference / input-only gradients).
BoundParams bind_params(TapeGraph& tape, const ParamSet& params, bool trainable);

// After backward(), add each bound parameter's gradient into acc (shaped
// like the ParamSet).
void accumulate_param_grads(TapeGraph& tape, const BoundParams& bound, std::vector<Tensor>& acc);

// Conv layer in build order; each contributes "<name>.w" then "<name>.b"
// to the ParamSet. The same table drives init, forward and parameter
// counting for both networks.
struct ConvSpec {
    std::string name;
    int in_ch;
    int out_ch;
    int k;  // square kernel side
};

// He fan-in init (weights ~ N(0, sqrt(2/fan_in)), zero biases),
// reproducible from the seed.
ParamSet init_he_params(const std::vector<ConvSpec>& layers, std::uint64_t seed);

// Consumes the next conv layer (weight + bias) from the bound params.
Value conv_layer(TapeGraph& tape, const BoundParams& bound, std::size_t& idx, Value x, bool with_relu);

std::int64_t conv_param_count(const std::vector<ConvSpec>& layers);

}  // namespace gradmorph
