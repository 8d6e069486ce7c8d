#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "msm/channel.hpp"
#include "msm/errors.hpp"

namespace msm {

struct CurveSample {
  double t = 0.0;  // s
  double p = 0.0;  // cumulative hit probability
};

struct FitResult {
  ControlCoefficients coefficients;
  double rmse = 0.0;
  int iterations = 0;
};

namespace detail {

constexpr std::array<double, 3> kFitLower = {1e-3, 1e-3, 1e-3};
constexpr std::array<double, 3> kFitUpper = {2.0, 1.5, 1.5};

inline std::array<double, 3> clamp_to_box(std::array<double, 3> b) {
  for (int i = 0; i < 3; ++i) b[i] = std::clamp(b[i], kFitLower[i], kFitUpper[i]);
  return b;
}

// Residuals r_i = model(t_i) - p_i and the analytic Jacobian. With
// u = d / ((4D)^b2 t^b3) and A = b1 Rr/(d+Rr):
//   d model/d b1 = model / b1
//   d model/d b2 = A (2/sqrt(pi)) exp(-u^2) u ln(4D)
//   d model/d b3 = A (2/sqrt(pi)) exp(-u^2) u ln(t)
struct FitProblem {
  std::span<const CurveSample> samples;
  double dist, radius, diffusion;

  double residual(const std::array<double, 3>& b, std::size_t i) const {
    const ControlCoefficients c{b[0], b[1], b[2]};
    return model_probability(samples[i].t, dist, radius, diffusion, c) - samples[i].p;
  }

  void jacobian_row(const std::array<double, 3>& b, std::size_t i,
                    std::array<double, 3>& row) const {
    const double t = samples[i].t;
    const double amp = b[0] * radius / (dist + radius);
    const double scale = std::pow(4.0 * diffusion, b[1]) * std::pow(t, b[2]);
    const double u = dist / scale;
    const double kernel = amp * (2.0 / std::sqrt(M_PI)) * std::exp(-u * u) * u;
    row[0] = (radius / (dist + radius)) * std::erfc(u);
    row[1] = kernel * std::log(4.0 * diffusion);
    row[2] = kernel * std::log(t);
  }

  double sum_squares(const std::array<double, 3>& b) const {
    double s = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double r = residual(b, i);
      s += r * r;
    }
    return s;
  }
};

// Damped Gauss-Newton (Levenberg-Marquardt) on the 3-parameter model with
// projection onto the sanity box after each step.
inline FitResult levenberg_marquardt(const FitProblem& prob, std::array<double, 3> b,
                                     int max_iterations = 200) {
  b = clamp_to_box(b);
  double lambda = 1e-3;
  double cost = prob.sum_squares(b);
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    // Normal equations (J^T J + lambda diag) delta = -J^T r.
    double jtj[3][3] = {};
    double jtr[3] = {};
    std::array<double, 3> row{};
    for (std::size_t i = 0; i < prob.samples.size(); ++i) {
      prob.jacobian_row(b, i, row);
      const double r = prob.residual(b, i);
      for (int a = 0; a < 3; ++a) {
        jtr[a] += row[a] * r;
        for (int c = 0; c < 3; ++c) jtj[a][c] += row[a] * row[c];
      }
    }
    bool improved = false;
    for (int attempt = 0; attempt < 12 && !improved; ++attempt) {
      double m[3][3];
      for (int a = 0; a < 3; ++a)
        for (int c = 0; c < 3; ++c)
          m[a][c] = jtj[a][c] + (a == c ? lambda * (jtj[a][a] + 1e-12) : 0.0);
      // Solve the 3x3 system by Gaussian elimination with partial pivoting.
      double rhs[3] = {-jtr[0], -jtr[1], -jtr[2]};
      bool singular = false;
      int perm[3] = {0, 1, 2};
      for (int col = 0; col < 3 && !singular; ++col) {
        int pivot = col;
        for (int r2 = col + 1; r2 < 3; ++r2)
          if (std::abs(m[perm[r2]][col]) > std::abs(m[perm[pivot]][col])) pivot = r2;
        std::swap(perm[col], perm[pivot]);
        const double diag = m[perm[col]][col];
        if (std::abs(diag) < 1e-300) {
          singular = true;
          break;
        }
        for (int r2 = col + 1; r2 < 3; ++r2) {
          const double f = m[perm[r2]][col] / diag;
          for (int c2 = col; c2 < 3; ++c2) m[perm[r2]][c2] -= f * m[perm[col]][c2];
          rhs[perm[r2]] -= f * rhs[perm[col]];
        }
      }
      std::array<double, 3> delta{};
      if (!singular) {
        for (int col = 2; col >= 0; --col) {
          double v = rhs[perm[col]];
          for (int c2 = col + 1; c2 < 3; ++c2) v -= m[perm[col]][c2] * delta[c2];
          delta[col] = v / m[perm[col]][col];
        }
        const std::array<double, 3> trial =
            clamp_to_box({b[0] + delta[0], b[1] + delta[1], b[2] + delta[2]});
        const double trial_cost = prob.sum_squares(trial);
        if (trial_cost < cost) {
          const double gain = cost - trial_cost;
          b = trial;
          cost = trial_cost;
          lambda = std::max(lambda * 0.3, 1e-12);
          improved = true;
          if (gain < 1e-18 * (1.0 + cost)) {
            return {{b[0], b[1], b[2]},
                    std::sqrt(cost / static_cast<double>(prob.samples.size())), iter + 1};
          }
        }
      }
      if (!improved) lambda *= 4.0;
    }
    if (!improved) break;  // stuck: lambda exhausted
  }
  return {{b[0], b[1], b[2]}, std::sqrt(cost / static_cast<double>(prob.samples.size())),
          iter};
}

}  // namespace detail

// Least-squares fit of the control coefficients to a cumulative hitting
// curve. Multi-start local descent anchored at the closed-form point
// (1, 0.5, 0.5) plus deterministic perturbed starts; the best local
// optimum wins. Throws FitFailureError for degenerate input or when the
// residual exceeds the ceiling.
inline FitResult fit_control_coefficients(std::span<const CurveSample> samples,
                                          double dist, double radius, double diffusion,
                                          double rmse_ceiling = 1e-2) {
  if (samples.size() < 10)
    throw FitFailureError("need at least 10 curve samples");
  double tmin = std::numeric_limits<double>::infinity();
  double tmax = 0.0;
  double pmax = 0.0;
  for (const auto& s : samples) {
    if (!(s.t > 0.0) || !std::isfinite(s.p))
      throw FitFailureError("curve samples must have t > 0 and finite p");
    tmin = std::min(tmin, s.t);
    tmax = std::max(tmax, s.t);
    pmax = std::max(pmax, s.p);
  }
  if (tmax < 10.0 * tmin)
    throw FitFailureError("curve must span at least one decade in t");
  if (pmax <= 1e-9)
    throw FitFailureError("degenerate curve: no hits to fit");

  const detail::FitProblem prob{samples, dist, radius, diffusion};
  const std::array<std::array<double, 3>, 9> starts = {{
      {1.0, 0.5, 0.5},
      {1.25, 0.5, 0.5},
      {0.75, 0.5, 0.5},
      {1.0, 0.625, 0.5},
      {1.0, 0.375, 0.5},
      {1.0, 0.5, 0.625},
      {1.0, 0.5, 0.375},
      {1.25, 0.625, 0.625},
      {0.75, 0.375, 0.375},
  }};
  FitResult best;
  best.rmse = std::numeric_limits<double>::infinity();
  for (const auto& start : starts) {
    const FitResult r = detail::levenberg_marquardt(prob, start);
    if (r.rmse < best.rmse) best = r;
  }
  if (!(best.rmse <= rmse_ceiling))
    throw FitFailureError("fit residual " + std::to_string(best.rmse) +
                          " exceeds ceiling " + std::to_string(rmse_ceiling));
  return best;
}

}  // namespace msm
