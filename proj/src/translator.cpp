#include "gradmorph/translator.hpp"

#include <algorithm>

#include "gradmorph/errors.hpp"
#include "gradmorph/rng.hpp"

namespace gradmorph {

void TranslatorConfig::validate() const {
    if (blocks < 1) throw ContractViolation("translator: blocks must be >= 1");
    if (growth_channels < 1) throw ContractViolation("translator: growth_channels must be >= 1");
    if (layers_per_block < 1) throw ContractViolation("translator: layers_per_block must be >= 1");
    if (input_channels < 1) throw ContractViolation("translator: input_channels must be >= 1");
}

// Channel plan: a stem puts the image at `growth` channels. Each encoder
// block grows by layers*growth via dense concatenation, compresses by half
// with a 1x1 conv, then pools. The decoder mirrors this: upsample, 3x3 conv
// down to the encoder-side width, dense growth, 1x1 compress back. The head
// is a 3x3 conv back to the input channel count, added onto the input image
// (the network predicts the additive change), with no squashing activation.
std::vector<ConvSpec> translator_layers(const TranslatorConfig& cfg) {
    cfg.validate();
    std::vector<ConvSpec> layers;
    const int g = cfg.growth_channels;

    layers.push_back({"stem", cfg.input_channels, g, 3});
    std::vector<int> enc_in;  // channels entering each encoder block
    int ch = g;
    for (int b = 0; b < cfg.blocks; ++b) {
        enc_in.push_back(ch);
        const std::string p = "enc" + std::to_string(b) + ".";
        for (int l = 0; l < cfg.layers_per_block; ++l) {
            layers.push_back({p + "dense" + std::to_string(l), ch, g, 3});
            ch += g;
        }
        const int compressed = std::max(1, ch / 2);
        layers.push_back({p + "compress", ch, compressed, 1});
        ch = compressed;  // then pooled
    }
    for (int b = 0; b < cfg.blocks; ++b) {
        const int target = enc_in[static_cast<std::size_t>(cfg.blocks - 1 - b)];
        const std::string p = "dec" + std::to_string(b) + ".";
        layers.push_back({p + "up", ch, target, 3});
        ch = target;
        for (int l = 0; l < cfg.layers_per_block; ++l) {
            layers.push_back({p + "dense" + std::to_string(l), ch, g, 3});
            ch += g;
        }
        layers.push_back({p + "compress", ch, target, 1});
        ch = target;
    }
    layers.push_back({"head", ch, cfg.input_channels, 3});
    return layers;
}

TranslatorModel build_translator(const TranslatorConfig& cfg, std::uint64_t seed) {
    TranslatorModel m;
    m.config = cfg;
    m.params = init_he_params(translator_layers(cfg), seed);
    return m;
}

namespace {

// One dense block: each layer convolves the running concatenation and its
// output is appended to it.
Value dense_block(TapeGraph& t, const BoundParams& bound, std::size_t& idx, Value x, int layers) {
    for (int l = 0; l < layers; ++l) {
        Value y = conv_layer(t, bound, idx, x, true);
        x = t.concat_channels(x, y);
    }
    return x;
}

}  // namespace

Value translator_forward(TapeGraph& tape, const TranslatorConfig& cfg, const BoundParams& bound, Value image) {
    cfg.validate();
    const Tensor& img = image.tensor();
    if (img.rank() != 3 || img.dim(0) != cfg.input_channels)
        throw ContractViolation("translator: expected image [" + std::to_string(cfg.input_channels) +
                                ",H,W], got " + img.shape_str());
    const int mult = cfg.spatial_multiple();
    if (img.dim(1) % mult != 0 || img.dim(2) % mult != 0)
        throw ContractViolation("translator: spatial dims must be divisible by " + std::to_string(mult) +
                                ", got " + img.shape_str());

    std::size_t idx = 0;
    Value x = conv_layer(tape, bound, idx, image, true);  // stem
    for (int b = 0; b < cfg.blocks; ++b) {
        x = dense_block(tape, bound, idx, x, cfg.layers_per_block);
        x = conv_layer(tape, bound, idx, x, true);  // compress
        x = tape.maxpool2d(x);
    }
    for (int b = 0; b < cfg.blocks; ++b) {
        x = tape.upsample_nearest(x);
        x = conv_layer(tape, bound, idx, x, true);  // up
        x = dense_block(tape, bound, idx, x, cfg.layers_per_block);
        x = conv_layer(tape, bound, idx, x, true);  // compress
    }
    Value head = conv_layer(tape, bound, idx, x, false);
    return tape.linear(tape.add(image, head));
}

Value translator_forward(TapeGraph& tape, const TranslatorModel& model, Value image) {
    const BoundParams bound = bind_params(tape, model.params, false);
    return translator_forward(tape, model.config, bound, image);
}

Tensor translate(const TranslatorModel& model, const Tensor& image) {
    TapeGraph tape;
    Value img = tape.constant(image);
    return translator_forward(tape, model, img).tensor();
}

std::vector<double> train_translator(TranslatorModel& model, const ImagePairSet& pairs,
                                     const TranslationLossConfig& loss_cfg, int epochs, int batch_size,
                                     AdadeltaState& opt, std::uint64_t seed) {
    if (pairs.empty()) throw ContractViolation("train_translator: no training pairs");
    if (batch_size < 1) throw ContractViolation("train_translator: batch_size must be >= 1");
    loss_cfg.validate();
    for (const ImagePair& p : pairs)
        if (!p.first.same_shape(p.second) || p.first.shape != pairs.front().first.shape)
            throw ContractViolation("train_translator: pair shapes must be uniform, got " + p.first.shape_str() +
                                    " / " + p.second.shape_str());
    if (!opt.initialized()) opt = AdadeltaState::for_params(model.params, opt.rho, opt.epsilon);

    std::vector<double> curve;
    Rng rng(seed);
    std::vector<int> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - pos);
            std::vector<Tensor> grad_acc = zeros_like(model.params);
            for (std::size_t b = 0; b < take; ++b) {
                const ImagePair& pair = pairs[static_cast<std::size_t>(order[pos + b])];
                TapeGraph tape;
                const BoundParams bound = bind_params(tape, model.params, true);
                Value img = tape.constant(pair.first);
                Value out = translator_forward(tape, model.config, bound, img);
                Value target = tape.constant(pair.second);
                Value loss = translation_loss_on(tape, out, target, loss_cfg);
                epoch_loss += loss.tensor()[0];
                tape.backward(loss);
                accumulate_param_grads(tape, bound, grad_acc);
            }
            const double inv = 1.0 / static_cast<double>(take);
            for (Tensor& g : grad_acc)
                for (std::int64_t j = 0; j < g.size(); ++j) g[j] *= inv;
            adadelta_step(model.params, grad_acc, opt);
            pos += take;
        }
        curve.push_back(epoch_loss / static_cast<double>(pairs.size()));
        if (!model.params.all_finite())
            throw DataError("train_translator: non-finite parameters after epoch " + std::to_string(epoch));
    }
    return curve;
}

MetricsReport reconstruction_fidelity(const TranslatorModel& model, const ImagePairSet& pairs,
                                      const TranslationLossConfig& cfg) {
    std::vector<MetricRow> rows;
    rows.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        MetricRow row;
        row.id = "pair_" + std::to_string(i);
        row.ssim = ssim(translate(model, pairs[i].first), pairs[i].second, cfg);
        rows.push_back(std::move(row));
    }
    return build_metrics_report(std::move(rows));
}

}  // namespace gradmorph
