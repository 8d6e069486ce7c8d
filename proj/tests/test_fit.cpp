#include <catch2/catch_amalgamated.hpp>
#include <vector>

#include "msm/fit.hpp"

using namespace msm;

namespace {

std::vector<CurveSample> exact_curve(const LinkGeometry& g, int n, double t_end) {
  std::vector<CurveSample> samples;
  for (int i = 1; i <= n; ++i) {
    const double t = t_end * i / n;
    samples.push_back({t, hitting_probability(t, g)});
  }
  return samples;
}

}  // namespace

TEST_CASE("fit recovers the closed-form coefficients from an exact curve") {
  const LinkGeometry g{4.0, 2.0, 50.0};
  const auto samples = exact_curve(g, 50, 0.2);
  const FitResult fit = fit_control_coefficients(samples, g.distance, g.radius, g.diffusion);
  CHECK(fit.coefficients.b1 == Catch::Approx(1.0).margin(1e-3));
  CHECK(fit.coefficients.b2 == Catch::Approx(0.5).margin(1e-3));
  CHECK(fit.coefficients.b3 == Catch::Approx(0.5).margin(1e-3));
  CHECK(fit.rmse < 1e-6);
}

TEST_CASE("fit recovers perturbed coefficients") {
  const ControlCoefficients truth{1.35, 0.58, 0.42};
  std::vector<CurveSample> samples;
  for (int i = 1; i <= 60; ++i) {
    const double t = 0.25 * i / 60;
    samples.push_back({t, model_probability(t, 6.0, 2.0, 50.0, truth)});
  }
  const FitResult fit = fit_control_coefficients(samples, 6.0, 2.0, 50.0);
  CHECK(fit.coefficients.b1 == Catch::Approx(truth.b1).margin(2e-3));
  CHECK(fit.coefficients.b2 == Catch::Approx(truth.b2).margin(2e-3));
  CHECK(fit.coefficients.b3 == Catch::Approx(truth.b3).margin(2e-3));
  CHECK(fit.coefficients.in_sanity_box());
}

TEST_CASE("degenerate input curves fail loudly") {
  std::vector<CurveSample> zero;
  for (int i = 1; i <= 40; ++i) zero.push_back({0.01 * i, 0.0});
  CHECK_THROWS_AS(fit_control_coefficients(zero, 4.0, 2.0, 50.0), FitFailureError);

  // Too few samples.
  std::vector<CurveSample> tiny(zero.begin(), zero.begin() + 5);
  CHECK_THROWS_AS(fit_control_coefficients(tiny, 4.0, 2.0, 50.0), FitFailureError);

  // A curve the model cannot reach within the ceiling.
  std::vector<CurveSample> hostile;
  for (int i = 1; i <= 40; ++i) hostile.push_back({0.01 * i, (i % 2) ? 0.9 : 0.1});
  CHECK_THROWS_AS(fit_control_coefficients(hostile, 4.0, 2.0, 50.0), FitFailureError);
}

TEST_CASE("fit requires a decade of time span") {
  const LinkGeometry g{4.0, 2.0, 50.0};
  std::vector<CurveSample> narrow;
  for (int i = 0; i < 20; ++i) {
    const double t = 0.1 + 0.01 * i;  // spans 0.1..0.29 only
    narrow.push_back({t, hitting_probability(t, g)});
  }
  CHECK_THROWS_AS(fit_control_coefficients(narrow, g.distance, g.radius, g.diffusion),
                  FitFailureError);
}
