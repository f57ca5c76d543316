#include <doctest.h>

#include <cmath>

#include "gradmorph/errors.hpp"
#include "gradmorph/rng.hpp"
#include "gradmorph/tape.hpp"
#include "gradmorph/tensor.hpp"
#include "support/oracles.hpp"

using namespace gradmorph;
using oracles::fd_check;
using oracles::random_tensor;

TEST_SUITE_BEGIN("tape");

TEST_CASE("tensor shape and data must agree") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>{1.0}), ContractViolation);
    CHECK_THROWS_AS(Tensor({0, 3}), ContractViolation);
    Tensor t({2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(t.size() == 4);
    CHECK(t.linf() == 4.0);
    CHECK(t.all_finite());
    t[1] = std::nan("");
    CHECK_FALSE(t.all_finite());
}

// --- conv2d ------------------------------------------------------------------

TEST_CASE("conv2d on zero input returns the bias everywhere") {
    TapeGraph t;
    Rng rng(7);
    Value in = t.constant(Tensor::zeros({1, 3, 3}));
    Value k = t.constant(random_tensor({2, 1, 3, 3}, rng));
    Value b = t.constant(Tensor({2}, std::vector<double>{0.5, -1.25}));
    const Tensor out = t.conv2d(in, k, b, Padding::Same).tensor();
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            CHECK(out.at(0, y, x) == 0.5);
            CHECK(out.at(1, y, x) == -1.25);
        }
}

TEST_CASE("conv2d 1x1 scalar case multiplies") {
    TapeGraph t;
    Value in = t.constant(Tensor({1, 1, 1}, std::vector<double>{2.0}));
    Value k = t.constant(Tensor({1, 1, 1, 1}, std::vector<double>{3.0}));
    Value b = t.constant(Tensor::zeros({1}));
    CHECK(t.conv2d(in, k, b, Padding::Same).tensor()[0] == 6.0);
}

TEST_CASE("conv2d matches the six-nested-loop reference") {
    Rng rng(11);
    const Tensor in = random_tensor({2, 8, 8}, rng);
    const Tensor k = random_tensor({4, 2, 3, 3}, rng);
    const Tensor b = random_tensor({4}, rng);
    for (const Padding pad : {Padding::Same, Padding::Valid}) {
        TapeGraph t;
        const Tensor out = t.conv2d(t.constant(in), t.constant(k), t.constant(b), pad).tensor();
        const Tensor ref = oracles::conv2d_reference(in, k, b, pad);
        REQUIRE(out.shape == ref.shape);
        for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d rejects inconsistent shapes") {
    TapeGraph t;
    Rng rng(3);
    Value in = t.constant(random_tensor({2, 4, 4}, rng));
    Value k_badc = t.constant(random_tensor({1, 3, 3, 3}, rng));
    Value k_even = t.constant(random_tensor({1, 2, 2, 2}, rng));
    Value b = t.constant(Tensor::zeros({1}));
    CHECK_THROWS_AS(t.conv2d(in, k_badc, b, Padding::Same), ContractViolation);
    CHECK_THROWS_AS(t.conv2d(in, k_even, b, Padding::Same), ContractViolation);
}

TEST_CASE("conv2d gradients pass finite differences") {
    Rng rng(13);
    const Tensor x0 = random_tensor({2, 6, 6}, rng);
    const Tensor k = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({3}, rng);

    auto rep = fd_check(
        [&](TapeGraph& t, Value x) { return t.conv2d(x, t.constant(k), t.constant(b), Padding::Same); }, x0, rng);
    CHECK(rep.max_rel_err < 1e-6);

    rep = fd_check([&](TapeGraph& t, Value kk) { return t.conv2d(t.constant(x0), kk, t.constant(b), Padding::Same); },
                   k, rng);
    CHECK(rep.max_rel_err < 1e-6);

    rep = fd_check([&](TapeGraph& t, Value bb) { return t.conv2d(t.constant(x0), t.constant(k), bb, Padding::Same); },
                   b, rng);
    CHECK(rep.max_rel_err < 1e-6);
}

// --- maxpool -------------------------------------------------------------------

TEST_CASE("maxpool picks the window maximum") {
    TapeGraph t;
    Value in = t.constant(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
    CHECK(t.maxpool2d(in).tensor()[0] == 4.0);
}

TEST_CASE("maxpool on a constant routes gradient to the first window element") {
    TapeGraph t;
    Value in = t.leaf(Tensor::full({1, 4, 4}, 0.75));
    Value out = t.maxpool2d(in);
    t.backward(t.sum(out));
    const Tensor g = t.gradient(in);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(g.at(0, y, x) == ((y % 2 == 0 && x % 2 == 0) ? 1.0 : 0.0));
}

TEST_CASE("maxpool matches the loop reference and rejects odd dims") {
    Rng rng(17);
    const Tensor in = random_tensor({1, 8, 8}, rng);
    TapeGraph t;
    const Tensor out = t.maxpool2d(t.constant(in)).tensor();
    const Tensor ref = oracles::maxpool_reference(in);
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == ref[i]);

    TapeGraph t2;
    CHECK_THROWS_AS(t2.maxpool2d(t2.constant(random_tensor({1, 3, 4}, rng))), ContractViolation);
}

TEST_CASE("maxpool gradient passes finite differences") {
    Rng rng(19);
    const Tensor x0 = random_tensor({2, 6, 6}, rng);  // distinct values, ties have measure zero
    const auto rep = fd_check([](TapeGraph& t, Value x) { return t.maxpool2d(x); }, x0, rng);
    CHECK(rep.max_rel_err < 1e-4);
}

// --- upsample -------------------------------------------------------------------

TEST_CASE("upsample replicates pixels into 2x2 blocks") {
    TapeGraph t;
    Value in = t.constant(Tensor({1, 1, 1}, std::vector<double>{5.0}));
    const Tensor out = t.upsample_nearest(in).tensor();
    REQUIRE(out.shape == std::vector<int>{1, 2, 2});
    for (std::int64_t i = 0; i < 4; ++i) CHECK(out[i] == 5.0);
}

TEST_CASE("upsample gradient of sum is the replication count") {
    TapeGraph t;
    Rng rng(23);
    Value in = t.leaf(random_tensor({1, 3, 3}, rng));
    t.backward(t.sum(t.upsample_nearest(in)));
    const Tensor g = t.gradient(in);
    for (std::int64_t i = 0; i < g.size(); ++i) CHECK(g[i] == 4.0);
}

TEST_CASE("upsample matches the loop reference") {
    Rng rng(29);
    const Tensor in = random_tensor({3, 4, 4}, rng);
    TapeGraph t;
    const Tensor out = t.upsample_nearest(t.constant(in)).tensor();
    const Tensor ref = oracles::upsample_reference(in);
    REQUIRE(out.shape == ref.shape);
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == ref[i]);
}

// --- concat ---------------------------------------------------------------------

TEST_CASE("concat stacks channels in order and slices back exactly") {
    TapeGraph t;
    Rng rng(30);
    const Tensor ta = random_tensor({1, 2, 2}, rng);
    const Tensor tb = random_tensor({1, 2, 2}, rng);
    const Tensor out = t.concat_channels(t.constant(ta), t.constant(tb)).tensor();
    REQUIRE(out.shape == std::vector<int>{2, 2, 2});
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            CHECK(out.at(0, y, x) == ta.at(0, y, x));
            CHECK(out.at(1, y, x) == tb.at(0, y, x));
        }
    TapeGraph t2;
    CHECK_THROWS_AS(
        t2.concat_channels(t2.constant(Tensor::zeros({1, 2, 2})), t2.constant(Tensor::zeros({1, 3, 2}))),
        ContractViolation);
}

TEST_CASE("concat gradient splits between inputs (finite differences, h=1e-6)") {
    Rng rng(31);
    const Tensor a0 = random_tensor({2, 3, 3}, rng);
    const Tensor b0 = random_tensor({1, 3, 3}, rng);
    auto rep = fd_check(
        [&](TapeGraph& t, Value x) { return t.concat_channels(x, t.constant(b0)); }, a0, rng, 20, 1e-6);
    CHECK(rep.max_rel_err < 1e-6);
    rep = fd_check([&](TapeGraph& t, Value x) { return t.concat_channels(t.constant(a0), x); }, b0, rng, 20, 1e-6);
    CHECK(rep.max_rel_err < 1e-6);
}

// --- activations -----------------------------------------------------------------

TEST_CASE("relu, sigmoid and linear basics") {
    TapeGraph t;
    Value x = t.constant(Tensor({3}, std::vector<double>{-1, 0, 2}));
    const Tensor r = t.relu(x).tensor();
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 2.0);
    CHECK(t.sigmoid(t.constant(Tensor::scalar(0.0))).tensor()[0] == 0.5);
    const Tensor id = t.linear(x).tensor();
    CHECK(id[0] == -1.0);
    CHECK(id[2] == 2.0);
}

TEST_CASE("elementwise gradients pass finite differences") {
    Rng rng(37);
    // keep relu/abs inputs away from the kink at 0
    Tensor x0({2, 5, 5});
    for (std::int64_t i = 0; i < x0.size(); ++i) {
        const double v = rng.uniform(0.2, 1.0);
        x0[i] = rng.uniform() < 0.5 ? -v : v;
    }

    CHECK(fd_check([](TapeGraph& t, Value x) { return t.relu(x); }, x0, rng).max_rel_err < 1e-4);
    CHECK(fd_check([](TapeGraph& t, Value x) { return t.abs(x); }, x0, rng).max_rel_err < 1e-4);
    CHECK(fd_check([](TapeGraph& t, Value x) { return t.sigmoid(x); }, x0, rng).max_rel_err < 1e-6);
    CHECK(fd_check([](TapeGraph& t, Value x) { return t.linear(x); }, x0, rng).max_rel_err < 1e-6);
    CHECK(fd_check([](TapeGraph& t, Value x) { return t.mul_scalar(t.add_scalar(x, 0.7), -2.5); }, x0, rng)
              .max_rel_err < 1e-6);

    Rng rng2(38);
    const Tensor other = random_tensor({2, 5, 5}, rng2, 0.5, 1.5);  // away from 0 for div
    CHECK(fd_check([&](TapeGraph& t, Value x) { return t.add(x, t.constant(other)); }, x0, rng).max_rel_err < 1e-6);
    CHECK(fd_check([&](TapeGraph& t, Value x) { return t.sub(t.constant(other), x); }, x0, rng).max_rel_err < 1e-6);
    CHECK(fd_check([&](TapeGraph& t, Value x) { return t.mul(x, t.constant(other)); }, x0, rng).max_rel_err < 1e-6);
    CHECK(fd_check([&](TapeGraph& t, Value x) { return t.div(t.constant(other), x); }, x0, rng).max_rel_err < 1e-6);
    CHECK(fd_check([&](TapeGraph& t, Value x) { return t.div(x, t.constant(other)); }, x0, rng).max_rel_err < 1e-6);
    CHECK(fd_check([](TapeGraph& t, Value x) { return t.mean(x); }, x0, rng).max_rel_err < 1e-6);
}

// --- softmax ---------------------------------------------------------------------

TEST_CASE("softmax over equal logits is uniform") {
    TapeGraph t;
    const Tensor out = t.softmax_channels(t.constant(Tensor::full({4, 2, 2}, 3.7))).tensor();
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax is stable for huge logit gaps") {
    TapeGraph t;
    Tensor logits({2, 1, 1});
    logits[0] = 1000.0;
    logits[1] = 0.0;
    const Tensor out = t.softmax_channels(t.constant(logits)).tensor();
    CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.all_finite());
}

TEST_CASE("softmax channel sums are 1 within 1e-12") {
    Rng rng(41);
    const Tensor logits = random_tensor({5, 6, 6}, rng, -4.0, 4.0);
    TapeGraph t;
    const Tensor out = t.softmax_channels(t.constant(logits)).tensor();
    const std::int64_t plane = 36;
    for (std::int64_t p = 0; p < plane; ++p) {
        double s = 0.0;
        for (int c = 0; c < 5; ++c) s += out[c * plane + p];
        CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("softmax Jacobian passes finite differences on a 3x2x2 input") {
    Rng rng(43);
    const Tensor x0 = random_tensor({3, 2, 2}, rng, -2.0, 2.0);
    const auto rep = fd_check([](TapeGraph& t, Value x) { return t.softmax_channels(x); }, x0, rng);
    CHECK(rep.max_rel_err < 1e-6);
}

// --- window_mean -------------------------------------------------------------------

TEST_CASE("window_mean matches a direct sliding-window average") {
    Rng rng(47);
    const Tensor in = random_tensor({2, 7, 9}, rng);
    const int w = 3;
    TapeGraph t;
    const Tensor out = t.window_mean(t.constant(in), w).tensor();
    REQUIRE(out.shape == std::vector<int>{2, 5, 7});
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 7; ++x) {
                double acc = 0.0;
                for (int dy = 0; dy < w; ++dy)
                    for (int dx = 0; dx < w; ++dx) acc += in.at(c, y + dy, x + dx);
                CHECK(out.at(c, y, x) == doctest::Approx(acc / 9.0).epsilon(1e-12));
            }
}

TEST_CASE("window_mean gradient passes finite differences") {
    Rng rng(53);
    const Tensor x0 = random_tensor({1, 6, 6}, rng);
    const auto rep = fd_check([](TapeGraph& t, Value x) { return t.window_mean(x, 3); }, x0, rng);
    CHECK(rep.max_rel_err < 1e-6);
}

// --- scalar heads -------------------------------------------------------------------

TEST_CASE("label_gap_sum value and gradient") {
    Rng rng(59);
    const Tensor logits = random_tensor({3, 4, 4}, rng);
    const LabelMap pred = oracles::random_labels(4, 4, 3, rng);
    const LabelMap gt = oracles::random_labels(4, 4, 3, rng);

    TapeGraph t;
    const double g = t.label_gap_sum(t.constant(logits), pred, gt).tensor()[0];
    double expect = 0.0;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) expect += logits.at(pred.at(y, x), y, x) - logits.at(gt.at(y, x), y, x);
    CHECK(g == doctest::Approx(expect).epsilon(1e-12));

    const auto rep = fd_check([&](TapeGraph& tt, Value x) { return tt.label_gap_sum(x, pred, gt); }, logits, rng);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("softmax_cross_entropy value and gradient") {
    Rng rng(61);
    const Tensor logits = random_tensor({2, 4, 4}, rng, -2.0, 2.0);
    const LabelMap labels = oracles::random_labels(4, 4, 2, rng);

    TapeGraph t;
    const double loss = t.softmax_cross_entropy(t.constant(logits), labels).tensor()[0];

    // naive per-pixel -log softmax
    double expect = 0.0;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const double a = logits.at(0, y, x), b = logits.at(1, y, x);
            const double z = std::exp(a) + std::exp(b);
            expect += -std::log(std::exp(logits.at(labels.at(y, x), y, x)) / z);
        }
    expect /= 16.0;
    CHECK(loss == doctest::Approx(expect).epsilon(1e-10));

    const auto rep =
        fd_check([&](TapeGraph& tt, Value x) { return tt.softmax_cross_entropy(x, labels); }, logits, rng);
    CHECK(rep.max_rel_err < 1e-6);

    LabelMap bad = labels;
    bad.labels[0] = 7;
    TapeGraph t2;
    CHECK_THROWS_AS(t2.softmax_cross_entropy(t2.constant(logits), bad), ContractViolation);
}

// --- backward ----------------------------------------------------------------------

TEST_CASE("backward of sum gives all ones; of a dot gives the other factor") {
    Rng rng(67);
    TapeGraph t;
    Value x = t.leaf(random_tensor({2, 3, 3}, rng));
    const auto grads = t.backward(t.sum(x));
    REQUIRE(grads.size() == 1);
    for (const auto& [leaf, g] : grads)
        for (std::int64_t i = 0; i < g.size(); ++i) CHECK(g[i] == 1.0);

    TapeGraph t2;
    const Tensor w = random_tensor({4}, rng);
    Value x2 = t2.leaf(random_tensor({4}, rng));
    t2.backward(t2.sum(t2.mul(x2, t2.constant(w))));
    const Tensor g = t2.gradient(x2);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(g[i] == w[i]);
}

TEST_CASE("backward rejects a non-scalar root") {
    TapeGraph t;
    Value x = t.leaf(Tensor::zeros({2, 2}));
    CHECK_THROWS_AS(t.backward(x), ContractViolation);
}

TEST_CASE("unreached leaves get zero gradients") {
    TapeGraph t;
    Value used = t.leaf(Tensor::full({2}, 1.0));
    Value unused = t.leaf(Tensor::full({3}, 1.0));
    const auto grads = t.backward(t.sum(used));
    CHECK(grads.at(unused.node).linf() == 0.0);
    CHECK(grads.at(used.node).linf() == 1.0);
}

TEST_CASE("forward and backward are deterministic") {
    const auto run = [] {
        Rng rng(71);
        TapeGraph t;
        Value x = t.leaf(random_tensor({1, 8, 8}, rng));
        Value k = t.leaf(random_tensor({2, 1, 3, 3}, rng));
        Value y = t.conv2d(x, k, t.constant(Tensor::zeros({2})), Padding::Same);
        Value loss = t.mean(t.mul(t.relu(y), t.sigmoid(y)));
        t.backward(loss);
        return std::make_pair(loss.tensor()[0], t.gradient(x).data);
    };
    const auto [v1, g1] = run();
    const auto [v2, g2] = run();
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_SUITE_END();
