#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gradmorph/adadelta.hpp"
#include "gradmorph/binding.hpp"
#include "gradmorph/metrics.hpp"
#include "gradmorph/params.hpp"
#include "gradmorph/tape.hpp"
#include "gradmorph/tensor.hpp"

namespace gradmorph {

// Dense encoder-decoder image-to-image network that adds its predicted
// change onto the input, with a linear output head (outputs are unbounded;
// learned perturbations can be negative).
struct TranslatorConfig {
    int blocks = 2;            // dense blocks per side
    int growth_channels = 8;   // channels added per dense layer
    int layers_per_block = 3;
    int input_channels = 1;
    // final activation is linear by construction (not configurable)

    void validate() const;
    int spatial_multiple() const { return 1 << blocks; }
};

struct TranslatorModel {
    TranslatorConfig config;
    ParamSet params;
};

// (input image, target image) training pairs: (I, I + delta_I).
using ImagePair = std::pair<Tensor, Tensor>;
using ImagePairSet = std::vector<ImagePair>;

std::vector<ConvSpec> translator_layers(const TranslatorConfig& cfg);

TranslatorModel build_translator(const TranslatorConfig& cfg, std::uint64_t seed);

Value translator_forward(TapeGraph& tape, const TranslatorConfig& cfg, const BoundParams& bound, Value image);
Value translator_forward(TapeGraph& tape, const TranslatorModel& model, Value image);

// Same-shape output, unbounded range.
Tensor translate(const TranslatorModel& model, const Tensor& image);

// Minimizes (1 - SSIM) + lambda*L1 between network output and target with
// Adadelta. Returns the per-epoch mean loss curve.
std::vector<double> train_translator(TranslatorModel& model, const ImagePairSet& pairs,
                                     const TranslationLossConfig& loss_cfg, int epochs, int batch_size,
                                     AdadeltaState& opt, std::uint64_t seed);

// Per-pair SSIM(translate(I), target) with mean +/- standard error;
// quantifies how much of the target perturbation survives reconstruction.
MetricsReport reconstruction_fidelity(const TranslatorModel& model, const ImagePairSet& pairs,
                                      const TranslationLossConfig& cfg = {});

}  // namespace gradmorph
