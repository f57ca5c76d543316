#include "gradmorph/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "gradmorph/errors.hpp"

namespace gradmorph {

namespace {

struct Confusion {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

Confusion confusion(const LabelMap& pred, const LabelMap& gt, int positive_class, const char* op) {
    if (!pred.same_shape(gt))
        throw ContractViolation(std::string(op) + ": shape mismatch " + std::to_string(pred.height) + "x" +
                                std::to_string(pred.width) + " vs " + std::to_string(gt.height) + "x" +
                                std::to_string(gt.width));
    Confusion c;
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        const bool p = pred.labels[i] == positive_class;
        const bool g = gt.labels[i] == positive_class;
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

}  // namespace

double dice(const LabelMap& pred, const LabelMap& gt, int positive_class) {
    const Confusion c = confusion(pred, gt, positive_class, "dice");
    const std::int64_t denom = 2 * c.tp + c.fp + c.fn;  // |P| + |G|
    if (denom == 0) return 1.0;                         // both masks empty: perfect agreement
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double fpr(const LabelMap& pred, const LabelMap& gt, int positive_class) {
    const Confusion c = confusion(pred, gt, positive_class, "fpr");
    const std::int64_t denom = c.fp + c.tn;
    if (denom == 0) return 0.0;
    return static_cast<double>(c.fp) / static_cast<double>(denom);
}

double fnr(const LabelMap& pred, const LabelMap& gt, int positive_class) {
    const Confusion c = confusion(pred, gt, positive_class, "fnr");
    const std::int64_t denom = c.fn + c.tp;
    if (denom == 0) return 0.0;
    return static_cast<double>(c.fn) / static_cast<double>(denom);
}

// ---------------------------------------------------------------------------
// SSIM / translation loss
// ---------------------------------------------------------------------------

void TranslationLossConfig::validate() const {
    if (lambda < 0.0) throw ContractViolation("translation loss: lambda must be >= 0");
    if (ssim_window < 2) throw ContractViolation("translation loss: ssim_window must be >= 2");
    if (dynamic_range <= 0.0) throw ContractViolation("translation loss: dynamic_range must be > 0");
    if (ssim_k1 <= 0.0 || ssim_k2 <= 0.0) throw ContractViolation("translation loss: k1, k2 must be > 0");
}

Value ssim_on(TapeGraph& t, Value a, Value b, const TranslationLossConfig& cfg) {
    cfg.validate();
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    if (!ta.same_shape(tb))
        throw ContractViolation("ssim: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    if (ta.rank() != 3) throw ContractViolation("ssim: expected rank-3 images, got " + ta.shape_str());
    if (ta.dim(1) < cfg.ssim_window || ta.dim(2) < cfg.ssim_window)
        throw ContractViolation("ssim: image " + ta.shape_str() + " smaller than window " +
                                std::to_string(cfg.ssim_window));

    const double c1 = (cfg.ssim_k1 * cfg.dynamic_range) * (cfg.ssim_k1 * cfg.dynamic_range);
    const double c2 = (cfg.ssim_k2 * cfg.dynamic_range) * (cfg.ssim_k2 * cfg.dynamic_range);
    const int w = cfg.ssim_window;

    Value mu_a = t.window_mean(a, w);
    Value mu_b = t.window_mean(b, w);
    Value e_aa = t.window_mean(t.mul(a, a), w);
    Value e_bb = t.window_mean(t.mul(b, b), w);
    Value e_ab = t.window_mean(t.mul(a, b), w);

    Value mu_ab = t.mul(mu_a, mu_b);
    Value var_a = t.sub(e_aa, t.mul(mu_a, mu_a));
    Value var_b = t.sub(e_bb, t.mul(mu_b, mu_b));
    Value cov = t.sub(e_ab, mu_ab);

    Value num = t.mul(t.add_scalar(t.mul_scalar(mu_ab, 2.0), c1), t.add_scalar(t.mul_scalar(cov, 2.0), c2));
    Value den = t.mul(t.add_scalar(t.add(t.mul(mu_a, mu_a), t.mul(mu_b, mu_b)), c1),
                      t.add_scalar(t.add(var_a, var_b), c2));
    return t.mean(t.div(num, den));
}

double ssim(const Tensor& a, const Tensor& b, const TranslationLossConfig& cfg) {
    TapeGraph t;
    return ssim_on(t, t.constant(a), t.constant(b), cfg).tensor()[0];
}

double l1_mean(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ContractViolation("l1_mean: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

Value translation_loss_on(TapeGraph& t, Value output, Value target, const TranslationLossConfig& cfg) {
    Value structural = t.add_scalar(t.mul_scalar(ssim_on(t, output, target, cfg), -1.0), 1.0);
    Value l1 = t.mean(t.abs(t.sub(output, target)));
    return t.add(structural, t.mul_scalar(l1, cfg.lambda));
}

double translation_loss(const Tensor& output, const Tensor& target, const TranslationLossConfig& cfg) {
    TapeGraph t;
    return translation_loss_on(t, t.constant(output), t.constant(target), cfg).tensor()[0];
}

// ---------------------------------------------------------------------------
// kernel density estimation
// ---------------------------------------------------------------------------

namespace {
// type-7 linear interpolation quantile, q in [0,1]
double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}
}  // namespace

double silverman_bandwidth(const std::vector<double>& samples) {
    const std::size_t n = samples.size();
    if (n < 2) throw ContractViolation("gaussian_kde: need at least 2 samples, got " + std::to_string(n));
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= static_cast<double>(n - 1);
    const double sigma = std::sqrt(var);
    if (sigma == 0.0) throw ContractViolation("gaussian_kde: degenerate distribution (zero variance)");

    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    // IQR can collapse to 0 on clustered samples even with sigma > 0
    const double spread = iqr > 0.0 ? std::min(sigma, iqr / 1.34) : sigma;
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

std::vector<double> gaussian_kde(const std::vector<double>& samples, const std::vector<double>& grid) {
    const double h = silverman_bandwidth(samples);
    const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * 3.14159265358979323846));
    std::vector<double> density(grid.size(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double acc = 0.0;
        for (double s : samples) {
            const double z = (grid[i] - s) / h;
            acc += std::exp(-0.5 * z * z);
        }
        density[i] = acc * norm;
    }
    return density;
}

std::vector<double> kde_default_grid(const std::vector<double>& samples, int points) {
    const double h = silverman_bandwidth(samples);
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    const double lo = *mn - 3.0 * h, hi = *mx + 3.0 * h;
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
        grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    return grid;
}

// ---------------------------------------------------------------------------
// report assembly
// ---------------------------------------------------------------------------

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    a.n = static_cast<int>(values.size());
    if (values.empty()) return a;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    a.mean = mean;
    if (values.size() >= 2) {
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size() - 1);
        a.stderr_val = std::sqrt(var) / std::sqrt(static_cast<double>(values.size()));
    }
    return a;
}

MetricsReport build_metrics_report(std::vector<MetricRow> rows, int kde_grid_points) {
    MetricsReport report;
    report.rows = std::move(rows);

    const auto collect = [&](auto getter) {
        std::vector<double> vals;
        for (const MetricRow& r : report.rows)
            if (const auto& v = getter(r)) vals.push_back(*v);
        return vals;
    };
    const std::vector<std::pair<std::string, std::vector<double>>> metrics = {
        {"dice", collect([](const MetricRow& r) { return r.dice; })},
        {"fpr", collect([](const MetricRow& r) { return r.fpr; })},
        {"fnr", collect([](const MetricRow& r) { return r.fnr; })},
        {"ssim", collect([](const MetricRow& r) { return r.ssim; })},
    };
    for (const auto& [name, vals] : metrics) {
        if (vals.empty()) continue;
        report.aggregates[name] = aggregate(vals);
        try {
            KdeCurve curve;
            curve.grid = kde_default_grid(vals, kde_grid_points);
            curve.density = gaussian_kde(vals, curve.grid);
            report.kde[name] = std::move(curve);
        } catch (const ContractViolation&) {
            // degenerate metric (constant values): no KDE curve for it
        }
    }
    return report;
}

}  // namespace gradmorph
