#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradmorph/adadelta.hpp"
#include "gradmorph/binding.hpp"
#include "gradmorph/params.hpp"
#include "gradmorph/sample.hpp"
#include "gradmorph/tape.hpp"
#include "gradmorph/tensor.hpp"

namespace gradmorph {

struct SegNetConfig {
    int depth = 3;           // down/up levels
    int base_channels = 8;   // channels at the first level
    int num_classes = 2;     // L
    int input_channels = 1;  // C

    void validate() const;
    int spatial_multiple() const { return 1 << depth; }
};

struct SegModel {
    SegNetConfig config;
    ParamSet params;
};

std::vector<ConvSpec> segnet_layers(const SegNetConfig& cfg);

// He fan-in init, reproducible from the seed.
SegModel build_segnet(const SegNetConfig& cfg, std::uint64_t seed);

// Encoder-decoder forward producing pre-softmax logits [L,H,W].
// Differentiable w.r.t. the image and, when bound trainable, the params.
Value segnet_forward(TapeGraph& tape, const SegNetConfig& cfg, const BoundParams& bound, Value image);
// Convenience overload binding params as constants.
Value segnet_forward(TapeGraph& tape, const SegModel& model, Value image);

// Plain (tape-internal) logits f(I; theta).
Tensor seg_logits(const SegModel& model, const Tensor& image);

// Per-pixel argmax over channels, ties toward the lower label index.
LabelMap argmax_channels(const Tensor& logits);
LabelMap predict(const SegModel& model, const Tensor& image);

// Per-pixel cross-entropy training with Adadelta. Returns the per-epoch
// mean loss curve; zero epochs leaves the model bit-identical.
std::vector<double> train_segmentation(SegModel& model, const SampleSet& dataset, int epochs, int batch_size,
                                       AdadeltaState& opt, std::uint64_t seed);

}  // namespace gradmorph
