#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gradmorph/sample.hpp"
#include "gradmorph/segnet.hpp"
#include "gradmorph/tape.hpp"
#include "gradmorph/tensor.hpp"

namespace gradmorph {

struct PerturbConfig {
    double gamma = 1.0;            // step scale
    int max_iters = 100;           // K
    double dice_tolerance = 0.995; // early-stop threshold vs ground truth

    void validate() const;
};

enum class PerturbTermination { Tolerance, MaxIters, AlreadyCorrect };
std::string to_string(PerturbTermination t);

struct PerturbTraceRow {
    int iteration;      // k
    double objective;   // G at I^(k)
    double dice;        // Dice(predict(I^(k)), gt)
    double delta_linf;  // L_inf of the raw gradient delta^(k); 0 when no step taken
};

struct PerturbResult {
    Tensor delta_total;     // accumulated perturbation
    Tensor perturbed_image; // original + delta_total
    std::vector<PerturbTraceRow> trace;
    PerturbTermination terminated_by = PerturbTermination::MaxIters;
    double final_dice = 0.0;   // Dice of the final image's prediction
    LabelMap final_pred;       // prediction on the final image
};

// Builds pre-softmax logits for an image value on a tape; lets the engine
// run against any differentiable model.
using LogitFn = std::function<Value(TapeGraph&, Value image)>;
LogitFn segnet_logit_fn(const SegModel& model);

// Sum over pixels of (logit at current predicted label - logit at ground
// truth label). Non-negative whenever pred is the argmax of the logits.
double objective_g(const Tensor& logits, const LabelMap& current_pred, const LabelMap& gt);

struct PerturbStep {
    Tensor next_image;
    Tensor delta_prime;    // gradient normalized to unit L_inf; zeros if converged
    double g_value;        // objective at image_k
    double delta_linf;     // L_inf of the raw gradient
    double dice;           // Dice(pred(image_k), gt)
    bool zero_gradient;    // raw gradient vanished (converged or stuck)
};

// One update: delta = grad_I G, delta' = delta / ||delta||_inf,
// image_{k+1} = image_k - gamma * delta' (descent on G).
PerturbStep perturbation_step(const LogitFn& logits, const Tensor& image_k, const LabelMap& gt, double gamma);
PerturbStep perturbation_step(const SegModel& model, const Tensor& image_k, const LabelMap& gt, double gamma);

PerturbResult compute_perturbation(const LogitFn& logits, const Tensor& image, const LabelMap& gt,
                                   const PerturbConfig& cfg);
PerturbResult compute_perturbation(const SegModel& model, const Tensor& image, const LabelMap& gt,
                                   const PerturbConfig& cfg);

struct BatchPerturbItem {
    std::string id;
    bool ok = false;
    PerturbResult result;  // valid when ok
    std::string error;     // set when !ok
};

struct BatchPerturbSummary {
    std::vector<BatchPerturbItem> items;  // dataset order
    int failures = 0;
    // Mean final Dice over successful samples.
    double mean_final_dice() const;
};

// Per-sample compute_perturbation; failures are recorded and the rest
// continue. threads=0 picks the hardware count. Results are assembled in
// dataset order and are independent of the thread count.
BatchPerturbSummary batch_perturb(const SegModel& model, const SampleSet& dataset, const PerturbConfig& cfg,
                                  int threads = 0);

}  // namespace gradmorph
