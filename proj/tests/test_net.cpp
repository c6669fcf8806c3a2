// Forward/loss/gradient contracts for the differentiable network core,
// checked against hand arithmetic and finite differences.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "distillforge/net.hpp"
#include "distillforge/rng.hpp"
#include "oracles.hpp"

using namespace distillforge;
using diffnet::Activation;
using diffnet::Batch;
using diffnet::LabelSet;
using diffnet::NetworkSpec;

namespace {

std::vector<double> rvec(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

Matrix<double> rmat(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Matrix<double> m(rows, cols);
    for (auto& x : m.data) x = scale * rng.normal();
    return m;
}

Batch<double> random_hard_batch(const NetworkSpec& spec, int rows, std::uint64_t seed) {
    Batch<double> b;
    b.inputs = rmat(rows, spec.input_dim(), seed);
    Rng rng(seed + 1);
    std::vector<int> y(rows);
    for (auto& v : y) v = static_cast<int>(rng.below(spec.classes));
    b.labels = LabelSet<double>::hard_of(std::move(y));
    return b;
}

Batch<double> random_soft_batch(const NetworkSpec& spec, int rows, std::uint64_t seed) {
    Batch<double> b;
    b.inputs = rmat(rows, spec.input_dim(), seed);
    Matrix<double> logits = rmat(rows, spec.classes, seed + 1);
    Matrix<double> soft(rows, spec.classes);
    kernels::row_softmax(logits.data.data(), soft.data.data(), rows, spec.classes);
    b.labels = LabelSet<double>::soft_of(std::move(soft));
    return b;
}

}  // namespace

TEST_CASE("zero parameters give zero logits") {
    auto spec = NetworkSpec::mlp(5, {4}, 3);
    std::vector<double> params(spec.param_count(), 0.0);
    const auto logits = diffnet::forward(spec, std::span<const double>(params), rmat(6, 5, 1));
    for (double v : logits.data) CHECK(v == 0.0);
}

TEST_CASE("identity single layer maps basis to basis") {
    auto spec = NetworkSpec::mlp(4, {}, 4);
    std::vector<double> params(spec.param_count(), 0.0);
    for (int i = 0; i < 4; ++i) params[i * 4 + i] = 1.0;  // weights row-major [in][out]
    Matrix<double> e2(1, 4, 0.0);
    e2.at(0, 2) = 1.0;
    const auto logits = diffnet::forward(spec, std::span<const double>(params), e2);
    for (int j = 0; j < 4; ++j) CHECK(logits.at(0, j) == (j == 2 ? 1.0 : 0.0));
}

TEST_CASE("two-layer forward matches the hand oracle") {
    const int in = 7, hidden = 5, classes = 3;
    auto spec = NetworkSpec::mlp(in, {hidden}, classes, Activation::tanh);
    const auto params = rvec(spec.param_count(), 21, 0.7);
    const auto x = rmat(1, in, 22);

    const diffnet::ParamLayout lay(spec);
    const std::vector<double> w1(params.begin(), params.begin() + lay.layer[0].w_len);
    const std::vector<double> b1(params.begin() + lay.layer[0].b_off,
                                 params.begin() + lay.layer[0].b_off + lay.layer[0].b_len);
    const std::vector<double> w2(params.begin() + lay.layer[1].w_off,
                                 params.begin() + lay.layer[1].w_off + lay.layer[1].w_len);
    const std::vector<double> b2(params.begin() + lay.layer[1].b_off,
                                 params.begin() + lay.layer[1].b_off + lay.layer[1].b_len);
    const auto want = oracles::mlp2_logits_by_hand(
        std::vector<double>(x.data.begin(), x.data.end()), in, w1, b1, hidden, w2, b2, classes);

    const auto got = diffnet::forward(spec, std::span<const double>(params), x);
    for (int c = 0; c < classes; ++c)
        CHECK(std::abs(got.at(0, c) - want[c]) <= 1e-12);
}

TEST_CASE("uniform logits cost ln(C)") {
    for (int classes : {2, 5, 17}) {
        Matrix<double> logits(3, classes, 1.25);
        LabelSet<double> labels = LabelSet<double>::hard_of({0, classes - 1, classes / 2});
        CHECK(diffnet::cross_entropy(logits, labels) ==
              doctest::Approx(std::log(classes)).epsilon(1e-12));
    }
}

TEST_CASE("soft target equal to the softmax gives the entropy") {
    const auto logits = rmat(4, 6, 31);
    Matrix<double> soft(4, 6);
    kernels::row_softmax(logits.data.data(), soft.data.data(), 4, 6);
    double entropy = 0.0;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 6; ++c) entropy -= soft.at(r, c) * std::log(soft.at(r, c));
    entropy /= 4.0;
    CHECK(diffnet::cross_entropy(logits, LabelSet<double>::soft_of(soft)) ==
          doctest::Approx(entropy).epsilon(1e-12));
}

TEST_CASE("logits [2,0] with label 0") {
    Matrix<double> logits(1, 2, 0.0);
    logits.at(0, 0) = 2.0;
    const double want = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
    CHECK(diffnet::cross_entropy(logits, LabelSet<double>::hard_of({0})) ==
          doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("soft rows must sum to one") {
    Matrix<double> bad(1, 3, 0.4);  // sums to 1.2
    Matrix<double> logits(1, 3, 0.0);
    CHECK_THROWS_AS(diffnet::cross_entropy(logits, LabelSet<double>::soft_of(bad)),
                    ValidationError);
    Matrix<double> neg(1, 3, 0.0);
    neg.at(0, 0) = 1.5;
    neg.at(0, 1) = -0.5;
    CHECK_THROWS_AS(diffnet::cross_entropy(logits, LabelSet<double>::soft_of(neg)),
                    ValidationError);
}

TEST_CASE("loss is invariant to a per-row logit shift") {
    auto logits = rmat(5, 4, 41);
    const auto labels = LabelSet<double>::hard_of({0, 1, 2, 3, 1});
    const double base = diffnet::cross_entropy(logits, labels);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 4; ++c) logits.at(r, c) += 7.5 + r;
    CHECK(std::abs(diffnet::cross_entropy(logits, labels) - base) <= 1e-9);
}

TEST_CASE("gradient vanishes when targets equal predictions") {
    auto spec = NetworkSpec::mlp(6, {5}, 4);
    const auto params = rvec(spec.param_count(), 51, 0.5);
    Batch<double> b;
    b.inputs = rmat(3, 6, 52);
    const auto logits = diffnet::forward(spec, std::span<const double>(params), b.inputs);
    Matrix<double> soft(3, 4);
    kernels::row_softmax(logits.data.data(), soft.data.data(), 3, 4);
    b.labels = LabelSet<double>::soft_of(soft);
    const auto g = diffnet::grad(spec, std::span<const double>(params), b);
    double norm = 0.0;
    for (double v : g) norm += v * v;
    CHECK(std::sqrt(norm) < 1e-8);
}

TEST_CASE("gradient matches central finite differences") {
    for (auto act : {Activation::tanh, Activation::relu}) {
        auto spec = NetworkSpec::mlp(5, {6}, 3, act);
        const auto params = rvec(spec.param_count(), 61, 0.6);
        const auto batch = random_hard_batch(spec, 3, 62);

        const auto got = diffnet::grad(spec, std::span<const double>(params), batch);
        const auto want = oracles::fd_grad(
            [&](const std::vector<double>& p) {
                const auto z = diffnet::forward(spec, std::span<const double>(p), batch.inputs);
                return diffnet::cross_entropy(z, batch.labels);
            },
            params, 1e-5);
        CHECK(oracles::max_rel_err(got, want, 1e-6) <= 1e-6);
    }
}

TEST_CASE("conv network gradient matches finite differences") {
    auto spec = NetworkSpec::convnet(2, 4, 4, {3}, 3, Activation::tanh);
    const auto params = rvec(spec.param_count(), 71, 0.4);
    const auto batch = random_hard_batch(spec, 2, 72);

    const auto got = diffnet::grad(spec, std::span<const double>(params), batch);
    const auto want = oracles::fd_grad(
        [&](const std::vector<double>& p) {
            const auto z = diffnet::forward(spec, std::span<const double>(p), batch.inputs);
            return diffnet::cross_entropy(z, batch.labels);
        },
        params, 1e-5);
    CHECK(oracles::max_rel_err(got, want, 1e-6) <= 1e-6);
}

TEST_CASE("duplicating every row leaves the mean gradient unchanged") {
    auto spec = NetworkSpec::mlp(4, {4}, 3);
    const auto params = rvec(spec.param_count(), 81, 0.5);
    const auto batch = random_hard_batch(spec, 3, 82);

    Batch<double> doubled;
    doubled.inputs = Matrix<double>(6, 4);
    std::vector<int> y(6);
    for (int r = 0; r < 6; ++r) {
        const int src = r % 3;
        std::copy(batch.inputs.row(src), batch.inputs.row(src) + 4, doubled.inputs.row(r));
        y[r] = batch.labels.hard[src];
    }
    doubled.labels = LabelSet<double>::hard_of(y);

    const auto g1 = diffnet::grad(spec, std::span<const double>(params), batch);
    const auto g2 = diffnet::grad(spec, std::span<const double>(params), doubled);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(g1[i] - g2[i]) <= 1e-12);
}

TEST_CASE("hard labels equal one-hot soft labels in the gradient") {
    auto spec = NetworkSpec::mlp(5, {4}, 4);
    const auto params = rvec(spec.param_count(), 91, 0.5);
    auto hard = random_hard_batch(spec, 4, 92);

    Batch<double> soft;
    soft.inputs = hard.inputs;
    soft.labels = LabelSet<double>::soft_of(diffnet::one_hot<double>(hard.labels.hard, 4));

    const auto g1 = diffnet::grad(spec, std::span<const double>(params), hard);
    const auto g2 = diffnet::grad(spec, std::span<const double>(params), soft);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(g1[i] - g2[i]) <= 1e-10);
}

TEST_CASE("non-finite parameters are rejected") {
    auto spec = NetworkSpec::mlp(3, {}, 2);
    std::vector<double> params(spec.param_count(), 0.0);
    params[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(diffnet::forward(spec, std::span<const double>(params), rmat(1, 3, 7)),
                    NumericError);
    std::vector<double> wrong(spec.param_count() + 1, 0.0);
    CHECK_THROWS_AS(diffnet::forward(spec, std::span<const double>(wrong), rmat(1, 3, 7)),
                    ShapeError);
}

// ----------------------------------------------------- second-order products

TEST_CASE("hvp matches finite differences of the gradient") {
    for (bool soft : {false, true}) {
        auto spec = NetworkSpec::mlp(4, {5}, 3, Activation::tanh);
        const auto params = rvec(spec.param_count(), 101, 0.5);
        const auto batch = soft ? random_soft_batch(spec, 3, 102)
                                : random_hard_batch(spec, 3, 102);
        const auto v = rvec(spec.param_count(), 103);

        const auto mso = diffnet::grad_and_hvp(spec, std::span<const double>(params), batch,
                                               std::span<const double>(v));

        // plain gradient agrees with grad()
        const auto g = diffnet::grad(spec, std::span<const double>(params), batch);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i] - mso.grad[i]) <= 1e-14);

        // (grad(p + h v) - grad(p - h v)) / 2h ~= H v
        const double h = 1e-6;
        std::vector<double> pp = params, pm = params;
        for (std::size_t i = 0; i < pp.size(); ++i) {
            pp[i] += h * v[i];
            pm[i] -= h * v[i];
        }
        const auto gp = diffnet::grad(spec, std::span<const double>(pp), batch);
        const auto gm = diffnet::grad(spec, std::span<const double>(pm), batch);
        std::vector<double> want(gp.size());
        for (std::size_t i = 0; i < want.size(); ++i) want[i] = (gp[i] - gm[i]) / (2.0 * h);
        CHECK(oracles::max_rel_err(mso.hvp, want, 1e-5) <= 1e-4);
    }
}

TEST_CASE("mixed input product matches finite differences over pixels") {
    auto spec = NetworkSpec::mlp(3, {4}, 3, Activation::tanh);
    const auto params = rvec(spec.param_count(), 111, 0.5);
    auto batch = random_hard_batch(spec, 2, 112);
    const auto v = rvec(spec.param_count(), 113);

    const auto mso = diffnet::grad_and_hvp(spec, std::span<const double>(params), batch,
                                           std::span<const double>(v));

    // s(X) = <grad(theta; X), v>; FD over each input entry
    auto s_of = [&](const Matrix<double>& inputs) {
        Batch<double> b{inputs, batch.labels};
        const auto g = diffnet::grad(spec, std::span<const double>(params), b);
        double s = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * v[i];
        return s;
    };
    const double h = 1e-6;
    for (int r = 0; r < batch.inputs.rows; ++r)
        for (int c = 0; c < batch.inputs.cols; ++c) {
            Matrix<double> xp = batch.inputs, xm = batch.inputs;
            xp.at(r, c) += h;
            xm.at(r, c) -= h;
            const double want = (s_of(xp) - s_of(xm)) / (2.0 * h);
            CHECK(oracles::rel_err(mso.dinputs.at(r, c), want, 1e-5) <= 1e-4);
        }
}

TEST_CASE("mixed label product matches finite differences over label logits") {
    auto spec = NetworkSpec::mlp(3, {4}, 3, Activation::tanh);
    const auto params = rvec(spec.param_count(), 121, 0.5);
    const int rows = 2;
    Matrix<double> lambda = rmat(rows, 3, 122);
    Matrix<double> inputs = rmat(rows, 3, 123);
    const auto v = rvec(spec.param_count(), 124);

    auto batch_of = [&](const Matrix<double>& lam) {
        Matrix<double> soft(rows, 3);
        kernels::row_softmax(lam.data.data(), soft.data.data(), rows, 3);
        Batch<double> b;
        b.inputs = inputs;
        b.labels = LabelSet<double>::soft_of(std::move(soft));
        return b;
    };
    auto s_of = [&](const Matrix<double>& lam) {
        const auto g = diffnet::grad(spec, std::span<const double>(params), batch_of(lam));
        double s = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * v[i];
        return s;
    };

    const auto mso = diffnet::grad_and_hvp(spec, std::span<const double>(params), batch_of(lambda),
                                           std::span<const double>(v));
    // chain rule through Y = softmax(lambda): grad_and_hvp reports d<g,v>/dY
    // already pushed through the softmax, so compare against FD over lambda.
    const double h = 1e-6;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < 3; ++c) {
            Matrix<double> lp = lambda, lm = lambda;
            lp.at(r, c) += h;
            lm.at(r, c) -= h;
            const double want = (s_of(lp) - s_of(lm)) / (2.0 * h);
            CHECK(oracles::rel_err(mso.dlabel_logits.at(r, c), want, 1e-5) <= 1e-4);
        }
}

TEST_CASE("hvp on a conv stack matches finite differences") {
    auto spec = NetworkSpec::convnet(1, 3, 3, {2}, 2, Activation::tanh);
    const auto params = rvec(spec.param_count(), 131, 0.4);
    const auto batch = random_hard_batch(spec, 2, 132);
    const auto v = rvec(spec.param_count(), 133);

    const auto mso = diffnet::grad_and_hvp(spec, std::span<const double>(params), batch,
                                           std::span<const double>(v));
    const double h = 1e-6;
    std::vector<double> pp = params, pm = params;
    for (std::size_t i = 0; i < pp.size(); ++i) {
        pp[i] += h * v[i];
        pm[i] -= h * v[i];
    }
    const auto gp = diffnet::grad(spec, std::span<const double>(pp), batch);
    const auto gm = diffnet::grad(spec, std::span<const double>(pm), batch);
    std::vector<double> want(gp.size());
    for (std::size_t i = 0; i < want.size(); ++i) want[i] = (gp[i] - gm[i]) / (2.0 * h);
    CHECK(oracles::max_rel_err(mso.hvp, want, 1e-5) <= 1e-4);
}

TEST_CASE("seeded init is reproducible and scaled") {
    auto spec = NetworkSpec::mlp(64, {32}, 10);
    const auto a = diffnet::init_params<double>(spec, 7);
    const auto b = diffnet::init_params<double>(spec, 7);
    CHECK(a == b);
    const auto c = diffnet::init_params<double>(spec, 8);
    CHECK(a != c);
    // final-layer bias stays zero
    const diffnet::ParamLayout lay(spec);
    for (std::size_t i = 0; i < lay.layer[1].b_len; ++i)
        CHECK(a[lay.layer[1].b_off + i] == 0.0);
}
