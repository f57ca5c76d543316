#include <doctest.h>

#include <cmath>

#include "gradmorph/errors.hpp"
#include "gradmorph/metrics.hpp"
#include "gradmorph/rng.hpp"
#include "support/oracles.hpp"

using namespace gradmorph;
using oracles::fd_check;
using oracles::random_tensor;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("dice basics") {
    LabelMap a(4, 4, 0), b(4, 4, 0);
    for (int i = 0; i < 4; ++i) a.labels[static_cast<std::size_t>(i)] = 1;

    CHECK(dice(a, a, 1) == 1.0);

    LabelMap disjoint(4, 4, 0);
    for (int i = 4; i < 8; ++i) disjoint.labels[static_cast<std::size_t>(i)] = 1;
    CHECK(dice(a, disjoint, 1) == 0.0);

    // P covers exactly half of G and nothing else, |P| = |G|/2 -> 2/3
    LabelMap g(4, 4, 0), p(4, 4, 0);
    for (int i = 0; i < 8; ++i) g.labels[static_cast<std::size_t>(i)] = 1;
    for (int i = 0; i < 4; ++i) p.labels[static_cast<std::size_t>(i)] = 1;
    CHECK(dice(p, g, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    CHECK(dice(b, b, 1) == 1.0);       // both empty
    CHECK(dice(b, g, 1) == 0.0);       // empty vs nonempty
    CHECK_THROWS_AS(dice(a, LabelMap(3, 4, 0), 1), ContractViolation);
}

TEST_CASE("fpr and fnr basics") {
    LabelMap gt(4, 4, 0);
    for (int i = 0; i < 8; ++i) gt.labels[static_cast<std::size_t>(i)] = 1;

    CHECK(fpr(gt, gt, 1) == 0.0);
    CHECK(fnr(gt, gt, 1) == 0.0);

    const LabelMap all_pos(4, 4, 1);
    CHECK(fpr(all_pos, gt, 1) == 1.0);
    CHECK(fnr(all_pos, gt, 1) == 0.0);

    // empty denominators
    CHECK(fpr(all_pos, all_pos, 1) == 0.0);  // no negatives in gt
    const LabelMap none(4, 4, 0);
    CHECK(fnr(none, none, 1) == 0.0);  // no positives in gt
}

TEST_CASE("overlap metrics match the confusion-matrix loop oracle") {
    Rng rng(83);
    for (int trial = 0; trial < 200; ++trial) {
        const LabelMap p = oracles::random_labels(16, 16, 2, rng);
        const LabelMap g = oracles::random_labels(16, 16, 2, rng);
        CHECK(dice(p, g, 1) == oracles::dice_reference(p, g, 1));
        CHECK(fpr(p, g, 1) == oracles::fpr_reference(p, g, 1));
        CHECK(fnr(p, g, 1) == oracles::fnr_reference(p, g, 1));
        // ranges and symmetry
        CHECK(dice(p, g, 1) >= 0.0);
        CHECK(dice(p, g, 1) <= 1.0);
        CHECK(dice(p, g, 1) == dice(g, p, 1));
        CHECK(fpr(p, g, 1) >= 0.0);
        CHECK(fpr(p, g, 1) <= 1.0);
        CHECK(fnr(p, g, 1) >= 0.0);
        CHECK(fnr(p, g, 1) <= 1.0);
    }
}

// --- ssim -----------------------------------------------------------------------

TEST_CASE("ssim of an image with itself is 1 within 1e-12") {
    Rng rng(87);
    const Tensor x = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
    CHECK(std::fabs(ssim(x, x) - 1.0) <= 1e-12);
}

TEST_CASE("ssim is symmetric and bounded") {
    Rng rng(89);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor a = random_tensor({1, 12, 12}, rng, 0.0, 1.0);
        const Tensor b = random_tensor({1, 12, 12}, rng, 0.0, 1.0);
        const double s = ssim(a, b);
        CHECK(s == ssim(b, a));
        CHECK(std::fabs(s) <= 1.0);
    }
}

TEST_CASE("ssim matches the direct-formula reference within 1e-10") {
    Rng rng(91);
    TranslationLossConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        const Tensor b = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        const double got = ssim(a, b, cfg);
        const double ref = oracles::ssim_reference(a, b, cfg.ssim_window, cfg.ssim_k1, cfg.ssim_k2,
                                                   cfg.dynamic_range);
        CHECK(std::fabs(got - ref) <= 1e-10);
    }
}

TEST_CASE("ssim rejects images smaller than the window") {
    Rng rng(93);
    CHECK_THROWS_AS(ssim(random_tensor({1, 4, 4}, rng), random_tensor({1, 4, 4}, rng)), ContractViolation);
}

TEST_CASE("l1_mean basics and loop oracle") {
    Rng rng(95);
    const Tensor x = random_tensor({2, 5, 5}, rng);
    CHECK(l1_mean(x, x) == 0.0);
    CHECK(l1_mean(Tensor({1}, std::vector<double>{0.0}), Tensor({1}, std::vector<double>{3.0})) == 3.0);

    const Tensor y = random_tensor({2, 5, 5}, rng);
    double expect = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) expect += std::fabs(x[i] - y[i]);
    CHECK(l1_mean(x, y) == doctest::Approx(expect / 50.0).epsilon(1e-12));
}

// --- translation loss -----------------------------------------------------------

TEST_CASE("translation loss is zero iff output equals target") {
    Rng rng(97);
    const Tensor x = random_tensor({1, 8, 8}, rng, 0.0, 1.0);
    TranslationLossConfig cfg;
    CHECK(translation_loss(x, x, cfg) == 0.0);
    const Tensor y = random_tensor({1, 8, 8}, rng, 0.0, 1.0);
    CHECK(translation_loss(x, y, cfg) > 0.0);
}

TEST_CASE("lambda 0 reduces the loss to 1 - ssim") {
    Rng rng(101);
    const Tensor a = random_tensor({1, 10, 10}, rng, 0.0, 1.0);
    const Tensor b = random_tensor({1, 10, 10}, rng, 0.0, 1.0);
    TranslationLossConfig cfg;
    cfg.lambda = 0.0;
    CHECK(translation_loss(a, b, cfg) == doctest::Approx(1.0 - ssim(a, b, cfg)).epsilon(1e-12));
}

TEST_CASE("translation loss gradient passes finite differences on a 1x8x8 pair") {
    Rng rng(103);
    const Tensor target = random_tensor({1, 8, 8}, rng, 0.0, 1.0);
    const Tensor out0 = random_tensor({1, 8, 8}, rng, 0.0, 1.0);
    TranslationLossConfig cfg;
    const auto rep = fd_check(
        [&](TapeGraph& t, Value out) { return translation_loss_on(t, out, t.constant(target), cfg); }, out0, rng);
    CHECK(rep.max_rel_err < 1e-4);
}

// --- kde -------------------------------------------------------------------------

TEST_CASE("kde rejects degenerate samples") {
    CHECK_THROWS_AS(silverman_bandwidth({0.0, 0.0, 0.0}), ContractViolation);
    CHECK_THROWS_AS(silverman_bandwidth({1.0}), ContractViolation);
    CHECK_THROWS_AS(gaussian_kde({2.0, 2.0}, {0.0, 1.0}), ContractViolation);
}

TEST_CASE("kde of symmetric samples is symmetric about 0") {
    const std::vector<double> samples{-1.0, 1.0};
    std::vector<double> grid;
    for (int i = -20; i <= 20; ++i) grid.push_back(0.1 * i);
    const std::vector<double> d = gaussian_kde(samples, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(d[i] >= 0.0);
        CHECK(d[i] == doctest::Approx(d[grid.size() - 1 - i]).epsilon(1e-12));
    }
}

TEST_CASE("kde of standard normal samples is near the true mode and integrates to 1") {
    Rng rng(107);
    std::vector<double> samples(1000);
    for (double& s : samples) s = rng.normal();

    const std::vector<double> at_zero = gaussian_kde(samples, {0.0});
    const double truth = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
    CHECK(std::fabs(at_zero[0] - truth) <= 0.15 * truth);

    const std::vector<double> grid = kde_default_grid(samples, 512);
    const std::vector<double> density = gaussian_kde(samples, grid);
    for (double v : density) CHECK(v >= 0.0);
    CHECK(std::fabs(oracles::trapezoid(grid, density) - 1.0) <= 0.01);
}

// --- aggregation -----------------------------------------------------------------

TEST_CASE("aggregate matches a direct two-pass computation to 1e-12") {
    Rng rng(109);
    std::vector<double> values(37);
    for (double& v : values) v = rng.uniform(-5.0, 5.0);

    const Aggregate a = aggregate(values);
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size() - 1);
    const double se = std::sqrt(var) / std::sqrt(static_cast<double>(values.size()));

    CHECK(std::fabs(a.mean - mean) <= 1e-12);
    CHECK(std::fabs(a.stderr_val - se) <= 1e-12);
    CHECK(a.n == 37);

    const Aggregate single = aggregate({2.5});
    CHECK(single.mean == 2.5);
    CHECK(single.stderr_val == 0.0);
}

TEST_CASE("metrics report aggregates present metrics and skips degenerate KDE") {
    std::vector<MetricRow> rows(3);
    for (int i = 0; i < 3; ++i) {
        rows[static_cast<std::size_t>(i)].id = "r" + std::to_string(i);
        rows[static_cast<std::size_t>(i)].dice = 0.5 + 0.1 * i;
        rows[static_cast<std::size_t>(i)].fpr = 0.25;  // constant -> degenerate KDE
    }
    const MetricsReport rep = build_metrics_report(rows);
    CHECK(rep.aggregates.at("dice").n == 3);
    CHECK(rep.aggregates.at("fpr").mean == 0.25);
    CHECK(rep.aggregates.count("ssim") == 0);
    CHECK(rep.kde.count("dice") == 1);
    CHECK(rep.kde.count("fpr") == 0);
}

TEST_SUITE_END();
