#pragma once

// Independent references used by the unit and acceptance suites. Everything
// here is written in the most direct form possible (per-element loops,
// textbook formulas) and deliberately shares no code with the library
// implementations it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "gradmorph/metrics.hpp"
#include "gradmorph/rng.hpp"
#include "gradmorph/tape.hpp"
#include "gradmorph/tensor.hpp"

namespace oracles {

using gradmorph::LabelMap;
using gradmorph::Padding;
using gradmorph::Rng;
using gradmorph::TapeGraph;
using gradmorph::Tensor;
using gradmorph::Value;

// --- random inputs -----------------------------------------------------------

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

inline LabelMap random_labels(int h, int w, int num_classes, Rng& rng) {
    LabelMap m(h, w);
    for (int& l : m.labels) l = static_cast<int>(rng.uniform_int(0, num_classes - 1));
    return m;
}

// --- finite-difference gradient checking -------------------------------------

using GraphBuilder = std::function<Value(TapeGraph&, Value)>;

struct FdReport {
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

// Reduces the builder's output to a scalar with fixed random weights, then
// compares the tape gradient against central differences at sampled
// coordinates. Relative error uses max(|a|,|fd|) with a tiny absolute
// floor so near-zero gradients do not divide by zero.
inline FdReport fd_check(const GraphBuilder& build, const Tensor& x0, Rng& rng, int coords = 20,
                         double h = 1e-5) {
    Tensor weights;  // created on the first evaluation, then reused
    bool have_weights = false;

    const auto eval = [&](const Tensor& x, Tensor* grad_out) {
        TapeGraph tape;
        Value leaf = tape.leaf(x);
        Value out = build(tape, leaf);
        Value scalar{};
        if (out.tensor().size() == 1) {
            scalar = out;
        } else {
            if (!have_weights) {
                weights = random_tensor(out.tensor().shape, rng, -1.0, 1.0);
                have_weights = true;
            }
            scalar = tape.sum(tape.mul(out, tape.constant(weights)));
        }
        const double v = scalar.tensor()[0];
        if (grad_out) {
            tape.backward(scalar);
            *grad_out = tape.gradient(leaf);
        }
        return v;
    };

    Tensor analytic;
    eval(x0, &analytic);

    FdReport report;
    for (int c = 0; c < coords; ++c) {
        const auto idx = rng.uniform_int(0, x0.size() - 1);
        Tensor xp = x0, xm = x0;
        xp[idx] += h;
        xm[idx] -= h;
        const double fd = (eval(xp, nullptr) - eval(xm, nullptr)) / (2.0 * h);
        const double a = analytic[idx];
        const double diff = std::fabs(a - fd);
        const double rel = diff <= 1e-9 ? 0.0 : diff / std::max({std::fabs(a), std::fabs(fd), 1e-12});
        report.max_rel_err = std::max(report.max_rel_err, rel);
        ++report.coords_checked;
    }
    return report;
}

// --- brute-force layer references ----------------------------------------------

// Cross-correlation written as six explicit loops with per-pixel bounds checks.
inline Tensor conv2d_reference(const Tensor& in, const Tensor& k, const Tensor& b, Padding pad) {
    const int ci = in.dim(0), h = in.dim(1), w = in.dim(2);
    const int co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const int ph = pad == Padding::Same ? (kh - 1) / 2 : 0;
    const int pw = pad == Padding::Same ? (kw - 1) / 2 : 0;
    const int ho = pad == Padding::Same ? h : h - kh + 1;
    const int wo = pad == Padding::Same ? w : w - kw + 1;

    Tensor out({co, ho, wo});
    for (int o = 0; o < co; ++o)
        for (int y = 0; y < ho; ++y)
            for (int x = 0; x < wo; ++x) {
                double acc = b[o];
                for (int i = 0; i < ci; ++i)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = y + ky - ph;
                            const int ix = x + kx - pw;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += in.at(i, iy, ix) * k.at4(o, i, ky, kx);
                        }
                out.at(o, y, x) = acc;
            }
    return out;
}

inline Tensor maxpool_reference(const Tensor& in) {
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor out({c, h / 2, w / 2});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h / 2; ++y)
            for (int x = 0; x < w / 2; ++x) {
                double m = in.at(ch, 2 * y, 2 * x);
                m = std::max(m, in.at(ch, 2 * y, 2 * x + 1));
                m = std::max(m, in.at(ch, 2 * y + 1, 2 * x));
                m = std::max(m, in.at(ch, 2 * y + 1, 2 * x + 1));
                out.at(ch, y, x) = m;
            }
    return out;
}

inline Tensor upsample_reference(const Tensor& in) {
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x) out.at(ch, y, x) = in.at(ch, y / 2, x / 2);
    return out;
}

// --- SSIM reference: direct per-window two-pass formula ------------------------

inline double ssim_reference(const Tensor& a, const Tensor& b, int window, double k1, double k2, double range) {
    const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    const double c1 = (k1 * range) * (k1 * range);
    const double c2 = (k2 * range) * (k2 * range);
    const double n = static_cast<double>(window) * window;

    double total = 0.0;
    int windows = 0;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y + window <= h; ++y)
            for (int x = 0; x + window <= w; ++x) {
                double mu_a = 0.0, mu_b = 0.0;
                for (int dy = 0; dy < window; ++dy)
                    for (int dx = 0; dx < window; ++dx) {
                        mu_a += a.at(ch, y + dy, x + dx);
                        mu_b += b.at(ch, y + dy, x + dx);
                    }
                mu_a /= n;
                mu_b /= n;
                double var_a = 0.0, var_b = 0.0, cov = 0.0;
                for (int dy = 0; dy < window; ++dy)
                    for (int dx = 0; dx < window; ++dx) {
                        const double da = a.at(ch, y + dy, x + dx) - mu_a;
                        const double db = b.at(ch, y + dy, x + dx) - mu_b;
                        var_a += da * da;
                        var_b += db * db;
                        cov += da * db;
                    }
                var_a /= n;
                var_b /= n;
                cov /= n;
                total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                         ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                ++windows;
            }
    return total / static_cast<double>(windows);
}

// --- confusion-matrix counting oracle -------------------------------------------

struct ConfusionCounts {
    long long tp = 0, fp = 0, tn = 0, fn = 0;
};

inline ConfusionCounts count_confusion(const LabelMap& pred, const LabelMap& gt, int positive) {
    ConfusionCounts c;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            const bool p = pred.at(y, x) == positive;
            const bool g = gt.at(y, x) == positive;
            if (p && g)
                ++c.tp;
            else if (p)
                ++c.fp;
            else if (g)
                ++c.fn;
            else
                ++c.tn;
        }
    return c;
}

inline double dice_reference(const LabelMap& pred, const LabelMap& gt, int positive) {
    const ConfusionCounts c = count_confusion(pred, gt, positive);
    const long long denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double fpr_reference(const LabelMap& pred, const LabelMap& gt, int positive) {
    const ConfusionCounts c = count_confusion(pred, gt, positive);
    return c.fp + c.tn == 0 ? 0.0 : static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
}

inline double fnr_reference(const LabelMap& pred, const LabelMap& gt, int positive) {
    const ConfusionCounts c = count_confusion(pred, gt, positive);
    return c.fn + c.tp == 0 ? 0.0 : static_cast<double>(c.fn) / static_cast<double>(c.fn + c.tp);
}

// Trapezoidal integral of a sampled curve.
inline double trapezoid(const std::vector<double>& xs, const std::vector<double>& ys) {
    double acc = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    return acc;
}

}  // namespace oracles
