#include "gradmorph/perturb.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "gradmorph/errors.hpp"
#include "gradmorph/metrics.hpp"

namespace gradmorph {

void PerturbConfig::validate() const {
    if (gamma <= 0.0) throw ContractViolation("perturb: gamma must be > 0");
    if (max_iters < 1) throw ContractViolation("perturb: max_iters must be >= 1");
    if (dice_tolerance <= 0.0 || dice_tolerance > 1.0)
        throw ContractViolation("perturb: dice_tolerance must be in (0,1]");
}

std::string to_string(PerturbTermination t) {
    switch (t) {
        case PerturbTermination::Tolerance: return "tolerance";
        case PerturbTermination::MaxIters: return "max_iters";
        case PerturbTermination::AlreadyCorrect: return "already_correct";
    }
    return "unknown";
}

LogitFn segnet_logit_fn(const SegModel& model) {
    return [&model](TapeGraph& tape, Value image) { return segnet_forward(tape, model, image); };
}

double objective_g(const Tensor& logits, const LabelMap& current_pred, const LabelMap& gt) {
    if (logits.rank() != 3)
        throw ContractViolation("objective_g: expected rank-3 logits, got " + logits.shape_str());
    const int l = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    if (current_pred.height != h || current_pred.width != w || gt.height != h || gt.width != w)
        throw ContractViolation("objective_g: label map shape does not match logits " + logits.shape_str());
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    double acc = 0.0;
    for (std::int64_t p = 0; p < plane; ++p) {
        const int lp = current_pred.labels[static_cast<std::size_t>(p)];
        const int lg = gt.labels[static_cast<std::size_t>(p)];
        if (lp < 0 || lp >= l || lg < 0 || lg >= l)
            throw ContractViolation("objective_g: label out of range [0," + std::to_string(l) + ")");
        acc += logits[lp * plane + p] - logits[lg * plane + p];
    }
    return acc;
}

PerturbStep perturbation_step(const LogitFn& logits_fn, const Tensor& image_k, const LabelMap& gt, double gamma) {
    if (gamma <= 0.0) throw ContractViolation("perturbation_step: gamma must be > 0");
    if (!image_k.all_finite()) throw ContractViolation("perturbation_step: image contains non-finite values");

    TapeGraph tape;
    Value image = tape.leaf(image_k);
    Value logits = logits_fn(tape, image);
    // current prediction recomputed at I^(k): correct pixels contribute 0
    const LabelMap pred = argmax_channels(logits.tensor());
    Value g = tape.label_gap_sum(logits, pred, gt);

    PerturbStep step;
    step.g_value = g.tensor()[0];
    step.dice = dice(pred, gt, 1);

    tape.backward(g);
    Tensor delta = tape.gradient(image);
    step.delta_linf = delta.linf();

    if (step.delta_linf == 0.0) {
        step.zero_gradient = true;
        step.next_image = image_k;
        step.delta_prime = Tensor::zeros(image_k.shape);
        return step;
    }

    step.zero_gradient = false;
    Tensor delta_prime(delta.shape);
    for (std::int64_t i = 0; i < delta.size(); ++i) delta_prime[i] = delta[i] / step.delta_linf;
    Tensor next(image_k.shape);
    for (std::int64_t i = 0; i < next.size(); ++i) next[i] = image_k[i] - gamma * delta_prime[i];
    step.delta_prime = std::move(delta_prime);
    step.next_image = std::move(next);
    return step;
}

PerturbStep perturbation_step(const SegModel& model, const Tensor& image_k, const LabelMap& gt, double gamma) {
    return perturbation_step(segnet_logit_fn(model), image_k, gt, gamma);
}

PerturbResult compute_perturbation(const LogitFn& logits_fn, const Tensor& image, const LabelMap& gt,
                                   const PerturbConfig& cfg) {
    cfg.validate();

    PerturbResult res;
    res.delta_total = Tensor::zeros(image.shape);
    Tensor current = image;

    bool stopped = false;
    for (int k = 0; k < cfg.max_iters && !stopped; ++k) {
        PerturbStep step;
        try {
            step = perturbation_step(logits_fn, current, gt, cfg.gamma);
        } catch (const ContractViolation& e) {
            throw DataError("compute_perturbation: aborted at iteration " + std::to_string(k) + ": " + e.what());
        }

        if (step.dice >= cfg.dice_tolerance) {
            res.trace.push_back({k, step.g_value, step.dice, 0.0});
            res.terminated_by = k == 0 ? PerturbTermination::AlreadyCorrect : PerturbTermination::Tolerance;
            stopped = true;
            break;
        }

        res.trace.push_back({k, step.g_value, step.dice, step.delta_linf});
        if (step.zero_gradient) {
            // stuck below tolerance with a vanished gradient: give up
            res.terminated_by = PerturbTermination::MaxIters;
            stopped = true;
            break;
        }

        for (std::int64_t i = 0; i < res.delta_total.size(); ++i)
            res.delta_total[i] -= cfg.gamma * step.delta_prime[i];
        // keep current == image + delta_total bitwise
        for (std::int64_t i = 0; i < current.size(); ++i) current[i] = image[i] + res.delta_total[i];
        if (!current.all_finite())
            throw DataError("compute_perturbation: non-finite image after iteration " + std::to_string(k));
    }
    if (!stopped) res.terminated_by = PerturbTermination::MaxIters;

    res.perturbed_image = Tensor(image.shape);
    for (std::int64_t i = 0; i < image.size(); ++i) res.perturbed_image[i] = image[i] + res.delta_total[i];

    {
        TapeGraph tape;
        Value img = tape.constant(res.perturbed_image);
        res.final_pred = argmax_channels(logits_fn(tape, img).tensor());
        res.final_dice = dice(res.final_pred, gt, 1);
    }
    return res;
}

PerturbResult compute_perturbation(const SegModel& model, const Tensor& image, const LabelMap& gt,
                                   const PerturbConfig& cfg) {
    return compute_perturbation(segnet_logit_fn(model), image, gt, cfg);
}

double BatchPerturbSummary::mean_final_dice() const {
    double acc = 0.0;
    int n = 0;
    for (const BatchPerturbItem& item : items)
        if (item.ok) {
            acc += item.result.final_dice;
            ++n;
        }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

BatchPerturbSummary batch_perturb(const SegModel& model, const SampleSet& dataset, const PerturbConfig& cfg,
                                  int threads) {
    cfg.validate();
    BatchPerturbSummary summary;
    summary.items.resize(dataset.size());

    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(dataset.size())));

    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= dataset.size()) return;
            BatchPerturbItem& item = summary.items[i];
            item.id = dataset[i].id;
            try {
                item.result = compute_perturbation(model, dataset[i].image, dataset[i].mask, cfg);
                item.ok = true;
            } catch (const std::exception& e) {
                item.ok = false;
                item.error = e.what();
            }
        }
    };

    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    for (const BatchPerturbItem& item : summary.items)
        if (!item.ok) ++summary.failures;
    return summary;
}

}  // namespace gradmorph
