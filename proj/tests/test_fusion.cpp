#include <doctest.h>

#include "ddat/fusion.hpp"
#include "ddat/metrics.hpp"
#include "helpers.hpp"

using namespace ddat;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_SUITE("fusion") {
  TEST_CASE("exact affine recovery") {
    std::mt19937_64 rng(1);
    const VectorXd gold = testing::random_vector(rng, 100);
    std::vector<VectorXd> s{gold};
    auto m = fit_slr(s, gold);
    CHECK(m.intercept == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(m.coefficients(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m.fitted_on == "dev");
    s[0] = (gold.array() - 1.0) / 2.0;
    m = fit_slr(s, gold);
    CHECK(m.intercept == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m.coefficients(0) == doctest::Approx(2.0).epsilon(1e-9));
  }

  TEST_CASE("collinear streams fall back to ridge") {
    std::mt19937_64 rng(2);
    const VectorXd gold = testing::random_vector(rng, 200);
    const VectorXd a = 0.8 * gold + testing::random_vector(rng, 200, 0.3);
    std::vector<VectorXd> twin{a, a};
    std::vector<VectorXd> single{a};
    const auto m = fit_slr(twin, gold);
    CHECK(m.used_ridge);
    CHECK(m.coefficients(0) == doctest::Approx(m.coefficients(1)).epsilon(1e-9));
    const VectorXd fused = apply_slr(m, twin);
    const VectorXd plain = apply_slr(fit_slr(single, gold), single);
    CHECK((fused - plain).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_THROWS_AS(fit_slr(twin, gold, FusionOptions{1e-6, false}), std::runtime_error);
  }

  TEST_CASE("apply checks and identities") {
    FusionModel m;
    m.coefficients = VectorXd::Ones(1);
    std::mt19937_64 rng(3);
    const VectorXd s = testing::random_vector(rng, 10);
    std::vector<VectorXd> one{s};
    CHECK(apply_slr(m, one) == s);
    m.coefficients = VectorXd::Constant(2, 0.5);
    std::vector<VectorXd> both{s, s};
    CHECK((apply_slr(m, both) - s).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(apply_slr(m, one), std::invalid_argument);
  }

  TEST_CASE("fused dev ccc dominates every stream") {
    std::mt19937_64 rng(4);
    const VectorXd gold = testing::random_vector(rng, 1000);
    std::vector<VectorXd> streams;
    for (int i = 0; i < 4; ++i)
      streams.push_back(0.3 * (i + 1) * gold + testing::random_vector(rng, 1000, 0.5 + 0.2 * i));
    const auto m = fit_slr(streams, gold);
    const double fused = ccc(apply_slr(m, streams), gold).ccc;
    for (const auto& s : streams) CHECK(fused >= ccc(s, gold).ccc - 1e-9);
  }

  TEST_CASE("dynamic tuning") {
    std::mt19937_64 rng(5);
    const VectorXd gold = testing::random_vector(rng, 500);
    const VectorXd pred = gold + testing::random_vector(rng, 500, 0.3);
    const VectorXd d = gold - pred;
    const auto exact = fit_dynamic_tuning(pred, d, gold);
    CHECK(exact.intercept == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(exact.coefficients(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(*exact.difficulty_coefficient == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((apply_dynamic_tuning(exact, pred, d) - gold).cwiseAbs().maxCoeff() < 1e-9);

    const auto zero = fit_dynamic_tuning(pred, VectorXd::Zero(500), gold);
    std::vector<VectorXd> one{pred};
    const auto slr = fit_slr(one, gold);
    CHECK(zero.intercept == doctest::Approx(slr.intercept).epsilon(1e-6));
    CHECK(zero.coefficients(0) == doctest::Approx(slr.coefficients(0)).epsilon(1e-6));
    CHECK(*zero.difficulty_coefficient == doctest::Approx(0.0).epsilon(1e-9));

    FusionModel plain;
    plain.coefficients = VectorXd::Ones(1);
    CHECK_THROWS_AS(apply_dynamic_tuning(plain, pred, d), std::invalid_argument);
  }

  TEST_CASE("contribution shares") {
    std::mt19937_64 rng(6);
    const VectorXd a = testing::random_vector(rng, 400);
    VectorXd b = testing::random_vector(rng, 400);
    // Match b's spread to a's so the shares depend on the coefficients only.
    const auto sd = [](const VectorXd& v) { return std::sqrt((v.array() - v.mean()).square().mean()); };
    b *= sd(a) / sd(b);
    FusionModel m;
    m.coefficients.resize(2);
    m.coefficients << 2.0, -1.0;
    std::vector<VectorXd> s{a, b};
    const VectorXd share = contribution_analysis(m, s);
    CHECK(share(0) == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
    CHECK(share(1) == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
    CHECK(share.sum() == doctest::Approx(100.0));
    m.coefficients << 1.0, 1.0;
    CHECK(contribution_analysis(m, s)(0) == doctest::Approx(50.0).epsilon(1e-12));
    FusionModel single;
    single.coefficients = VectorXd::Constant(1, 0.3);
    std::vector<VectorXd> one{a};
    CHECK(contribution_analysis(single, one)(0) == doctest::Approx(100.0));
    m.coefficients.setZero();
    CHECK_THROWS_AS(contribution_analysis(m, s), std::invalid_argument);
  }
}
