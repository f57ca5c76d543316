#include "gradmorph/segnet.hpp"

#include <cmath>

#include "gradmorph/errors.hpp"
#include "gradmorph/rng.hpp"

namespace gradmorph {

// ---------------------------------------------------------------------------
// architecture
// ---------------------------------------------------------------------------

void SegNetConfig::validate() const {
    if (depth < 1) throw ContractViolation("segnet: depth must be >= 1, got " + std::to_string(depth));
    if (base_channels < 1) throw ContractViolation("segnet: base_channels must be >= 1");
    if (num_classes < 2) throw ContractViolation("segnet: num_classes must be >= 2, got " + std::to_string(num_classes));
    if (input_channels < 1) throw ContractViolation("segnet: input_channels must be >= 1");
}

std::vector<ConvSpec> segnet_layers(const SegNetConfig& cfg) {
    cfg.validate();
    std::vector<ConvSpec> layers;
    const auto ch = [&](int lvl) { return cfg.base_channels << lvl; };

    int prev = cfg.input_channels;
    for (int lvl = 0; lvl < cfg.depth; ++lvl) {
        const std::string p = "enc" + std::to_string(lvl) + ".";
        layers.push_back({p + "conv1", prev, ch(lvl), 3});
        layers.push_back({p + "conv2", ch(lvl), ch(lvl), 3});
        prev = ch(lvl);
    }
    layers.push_back({"bottleneck.conv1", prev, ch(cfg.depth), 3});
    layers.push_back({"bottleneck.conv2", ch(cfg.depth), ch(cfg.depth), 3});
    prev = ch(cfg.depth);
    for (int lvl = cfg.depth - 1; lvl >= 0; --lvl) {
        const std::string p = "dec" + std::to_string(lvl) + ".";
        layers.push_back({p + "up", prev, ch(lvl), 3});
        layers.push_back({p + "conv1", 2 * ch(lvl), ch(lvl), 3});
        layers.push_back({p + "conv2", ch(lvl), ch(lvl), 3});
        prev = ch(lvl);
    }
    layers.push_back({"head", cfg.base_channels, cfg.num_classes, 1});
    return layers;
}

SegModel build_segnet(const SegNetConfig& cfg, std::uint64_t seed) {
    SegModel m;
    m.config = cfg;
    m.params = init_he_params(segnet_layers(cfg), seed);
    return m;
}

Value segnet_forward(TapeGraph& tape, const SegNetConfig& cfg, const BoundParams& bound, Value image) {
    cfg.validate();
    const Tensor& img = image.tensor();
    if (img.rank() != 3 || img.dim(0) != cfg.input_channels)
        throw ContractViolation("segnet: expected image [" + std::to_string(cfg.input_channels) +
                                ",H,W], got " + img.shape_str());
    const int mult = cfg.spatial_multiple();
    if (img.dim(1) % mult != 0 || img.dim(2) % mult != 0)
        throw ContractViolation("segnet: spatial dims must be divisible by " + std::to_string(mult) + ", got " +
                                img.shape_str());

    std::size_t idx = 0;
    std::vector<Value> skips;
    Value x = image;
    for (int lvl = 0; lvl < cfg.depth; ++lvl) {
        x = conv_layer(tape, bound, idx, x, true);
        x = conv_layer(tape, bound, idx, x, true);
        skips.push_back(x);
        x = tape.maxpool2d(x);
    }
    x = conv_layer(tape, bound, idx, x, true);
    x = conv_layer(tape, bound, idx, x, true);
    for (int lvl = cfg.depth - 1; lvl >= 0; --lvl) {
        x = tape.upsample_nearest(x);
        x = conv_layer(tape, bound, idx, x, true);
        x = tape.concat_channels(skips[static_cast<std::size_t>(lvl)], x);
        x = conv_layer(tape, bound, idx, x, true);
        x = conv_layer(tape, bound, idx, x, true);
    }
    Value logits = conv_layer(tape, bound, idx, x, false);
    return tape.linear(logits);
}

Value segnet_forward(TapeGraph& tape, const SegModel& model, Value image) {
    const BoundParams bound = bind_params(tape, model.params, false);
    return segnet_forward(tape, model.config, bound, image);
}

Tensor seg_logits(const SegModel& model, const Tensor& image) {
    TapeGraph tape;
    Value img = tape.constant(image);
    return segnet_forward(tape, model, img).tensor();
}

LabelMap argmax_channels(const Tensor& logits) {
    if (logits.rank() != 3) throw ContractViolation("argmax_channels: expected rank-3 logits, got " + logits.shape_str());
    const int l = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    LabelMap out(h, w);
    for (std::int64_t p = 0; p < plane; ++p) {
        int best = 0;
        double bv = logits[p];
        for (int c = 1; c < l; ++c) {
            const double v = logits[c * plane + p];
            if (v > bv) {  // strict: ties stay at the lower label
                bv = v;
                best = c;
            }
        }
        out.labels[static_cast<std::size_t>(p)] = best;
    }
    return out;
}

LabelMap predict(const SegModel& model, const Tensor& image) {
    return argmax_channels(seg_logits(model, image));
}

std::vector<double> train_segmentation(SegModel& model, const SampleSet& dataset, int epochs, int batch_size,
                                       AdadeltaState& opt, std::uint64_t seed) {
    if (dataset.empty()) throw ContractViolation("train_segmentation: dataset is empty");
    if (batch_size < 1) throw ContractViolation("train_segmentation: batch_size must be >= 1");
    for (const Sample& s : dataset)
        if (s.mask.max_label() >= model.config.num_classes)
            throw DataError("train_segmentation: sample '" + s.id + "' has label " +
                            std::to_string(s.mask.max_label()) + " >= num_classes " +
                            std::to_string(model.config.num_classes));
    if (!opt.initialized()) opt = AdadeltaState::for_params(model.params, opt.rho, opt.epsilon);

    std::vector<double> curve;
    Rng rng(seed);
    std::vector<int> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - pos);
            std::vector<Tensor> grad_acc = zeros_like(model.params);
            for (std::size_t b = 0; b < take; ++b) {
                const Sample& s = dataset[static_cast<std::size_t>(order[pos + b])];
                TapeGraph tape;
                const BoundParams bound = bind_params(tape, model.params, true);
                Value img = tape.constant(s.image);
                Value logits = segnet_forward(tape, model.config, bound, img);
                Value loss = tape.softmax_cross_entropy(logits, s.mask);
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
        curve.push_back(epoch_loss / static_cast<double>(dataset.size()));
        if (!model.params.all_finite())
            throw DataError("train_segmentation: non-finite parameters after epoch " + std::to_string(epoch));
    }
    return curve;
}

}  // namespace gradmorph
