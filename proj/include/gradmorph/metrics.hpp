#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gradmorph/tape.hpp"
#include "gradmorph/tensor.hpp"

namespace gradmorph {

// --- overlap metrics (binary foreground convention) -----------------------

// 2|P n G| / (|P| + |G|); 1.0 when both masks are empty.
double dice(const LabelMap& pred, const LabelMap& gt, int positive_class = 1);
// FP / (FP + TN); 0.0 on an empty denominator.
double fpr(const LabelMap& pred, const LabelMap& gt, int positive_class = 1);
// FN / (FN + TP); 0.0 on an empty denominator.
double fnr(const LabelMap& pred, const LabelMap& gt, int positive_class = 1);

// --- structural similarity -------------------------------------------------

struct TranslationLossConfig {
    double lambda = 1.0;        // L1 weight
    int ssim_window = 8;        // uniform square window, stride 1
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
    double dynamic_range = 1.0;  // R in C1=(k1 R)^2, C2=(k2 R)^2

    void validate() const;
};

// Mean over per-channel sliding windows of
// [(2 mu_a mu_b + C1)(2 cov + C2)] / [(mu_a^2 + mu_b^2 + C1)(var_a + var_b + C2)].
double ssim(const Tensor& a, const Tensor& b, const TranslationLossConfig& cfg = {});
// Same computation recorded on a tape (all inputs as Values).
Value ssim_on(TapeGraph& tape, Value a, Value b, const TranslationLossConfig& cfg);

double l1_mean(const Tensor& a, const Tensor& b);

// (1 - ssim(output, target)) + lambda * l1_mean(output, target), recorded on
// the tape so gradients flow into `output`.
Value translation_loss_on(TapeGraph& tape, Value output, Value target, const TranslationLossConfig& cfg);
double translation_loss(const Tensor& output, const Tensor& target, const TranslationLossConfig& cfg);

// --- distribution estimates -------------------------------------------------

// 0.9 min(sigma, IQR/1.34) n^(-1/5); throws on degenerate samples.
double silverman_bandwidth(const std::vector<double>& samples);
// Gaussian KDE evaluated on the grid.
std::vector<double> gaussian_kde(const std::vector<double>& samples, const std::vector<double>& grid);
// Evenly spaced grid spanning min-3h .. max+3h.
std::vector<double> kde_default_grid(const std::vector<double>& samples, int points = 256);

// --- report assembly ---------------------------------------------------------

struct Aggregate {
    double mean = 0.0;
    double stderr_val = 0.0;  // sample stddev / sqrt(n); 0 when n < 2
    int n = 0;
};
Aggregate aggregate(const std::vector<double>& values);

struct MetricRow {
    std::string id;
    std::optional<double> dice;
    std::optional<double> fpr;
    std::optional<double> fnr;
    std::optional<double> ssim;
};

struct KdeCurve {
    std::vector<double> grid;
    std::vector<double> density;
};

struct MetricsReport {
    std::vector<MetricRow> rows;
    std::map<std::string, Aggregate> aggregates;  // keyed by metric name
    std::map<std::string, KdeCurve> kde;          // degenerate metrics omitted
};

MetricsReport build_metrics_report(std::vector<MetricRow> rows, int kde_grid_points = 256);

}  // namespace gradmorph
