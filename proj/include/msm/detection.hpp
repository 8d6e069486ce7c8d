#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "msm/channel.hpp"
#include "msm/errors.hpp"
#include "msm/modulation.hpp"

namespace msm {

struct GaussianComponent {
  double mean = 0.0;
  double variance = 1.0;
  int label = 0;  // symbol (or bit, for the 4x4 second stage)
};

// Crossing point of two Gaussian densities. Solving the log-density
// equality gives A g^2 + B g + C = 0 with
//   A = v1 - v2
//   B = 2 (m1 v2 - m2 v1)
//   C = m2^2 v1 - m1^2 v2 - v1 v2 ln(v1 / v2)
// Equal variances collapse to the linear solution (the midpoint). With
// distinct variances the root between the two means is the decision
// boundary; if no root lies between them, the positive root is returned.
inline double gaussian_intersection(const GaussianComponent& a, const GaussianComponent& b) {
  const double m1 = a.mean, m2 = b.mean, v1 = a.variance, v2 = b.variance;
  if (!(v1 > 0.0) || !(v2 > 0.0))
    throw DegenerateInputError("component variances must be positive");
  if (m1 == m2 && v1 == v2)
    throw DegenerateInputError("identical distributions have no crossing");

  const double qa = v1 - v2;
  const double qb = 2.0 * (m1 * v2 - m2 * v1);
  const double qc = m2 * m2 * v1 - m1 * m1 * v2 - v1 * v2 * std::log(v1 / v2);

  if (std::abs(qa) <= 1e-12 * std::max(v1, v2)) {
    return -qc / qb;
  }
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) throw DegenerateInputError("densities do not cross");
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (qb + std::copysign(sq, qb));
  double roots[2];
  int count = 0;
  if (qa != 0.0) roots[count++] = q / qa;
  if (q != 0.0) roots[count++] = qc / q;
  if (count == 2 && roots[0] > roots[1]) std::swap(roots[0], roots[1]);

  const double lo = std::min(m1, m2), hi = std::max(m1, m2);
  for (int i = 0; i < count; ++i)
    if (roots[i] >= lo && roots[i] <= hi) return roots[i];
  for (int i = count - 1; i >= 0; --i)
    if (roots[i] > 0.0) return roots[i];
  return roots[count - 1];
}

// Sorted decision boundaries plus the symbol each region maps to. Regions
// are (-inf, g1], (g1, g2], ...: an observation equal to a threshold falls
// into the lower region.
struct ThresholdSet {
  std::vector<double> thresholds;
  std::vector<int> region_labels;

  int classify(double x) const {
    std::size_t r = 0;
    while (r < thresholds.size() && x > thresholds[r]) ++r;
    return region_labels[r];
  }
};

// Thresholds between adjacent components in mean order; each region keeps
// the label of the component whose mean it contains.
inline ThresholdSet build_thresholds(std::vector<GaussianComponent> components) {
  if (components.size() < 2)
    throw DegenerateInputError("need at least two components");
  std::stable_sort(components.begin(), components.end(),
                   [](const GaussianComponent& a, const GaussianComponent& b) {
                     return a.mean < b.mean;
                   });
  double scale = 1.0;
  for (const auto& c : components) scale = std::max(scale, std::abs(c.mean));
  ThresholdSet set;
  for (std::size_t i = 0; i + 1 < components.size(); ++i) {
    if (components[i + 1].mean - components[i].mean <= 1e-9 * scale)
      throw DegenerateInputError("overlap-collapse: adjacent component means coincide");
    set.thresholds.push_back(gaussian_intersection(components[i], components[i + 1]));
  }
  for (std::size_t i = 0; i + 1 < set.thresholds.size(); ++i)
    if (!(set.thresholds[i] < set.thresholds[i + 1]))
      throw DegenerateInputError("thresholds are not strictly increasing");
  for (const auto& c : components) set.region_labels.push_back(c.label);
  return set;
}

// Marginalized one-slot interference seen by a receiver when the previous
// symbol is uniform over the alphabet:
//   mean = (1/|A|)   sum_s x_s p2(tx_s)
//   var  = (1/|A|^2) sum_s x_s p2(tx_s)(1 - p2(tx_s))
struct IsiStatistics {
  double mean = 0.0;
  double variance = 0.0;
};

inline IsiStatistics isi_statistics(const std::vector<double>& p2, const Alphabet& alphabet) {
  IsiStatistics isi;
  const int n = alphabet.size();
  for (int sym = 0; sym < n; ++sym) {
    const double p = p2[alphabet.transmitter[sym]];
    isi.mean += alphabet.level[sym] * p;
    isi.variance += alphabet.level[sym] * p * (1.0 - p);
  }
  isi.mean /= n;
  isi.variance /= static_cast<double>(n) * n;
  return isi;
}

// Detection components for schemes that threshold a raw molecule count
// (2x1 MSM, SISO BCSK, QCSK): one Gaussian per symbol with the ISI
// marginalized into mean and variance.
inline std::vector<GaussianComponent> marginal_count_components(
    const std::vector<double>& p1, const Alphabet& alphabet, const IsiStatistics& isi) {
  std::vector<GaussianComponent> comps;
  for (int sym = 0; sym < alphabet.size(); ++sym) {
    const double p = p1[alphabet.transmitter[sym]];
    const double x = alphabet.level[sym];
    comps.push_back({x * p + isi.mean, x * p * (1.0 - p) + isi.variance, sym});
  }
  return comps;
}

// Matched-filter data: the mean channel matrix, its exact inverse, and the
// named scalars of the 2x2 (K, C1, C2) and 4x4 (c11..c14, det) analyses.
struct MfDetectorCoefficients {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd inverse;
  double determinant = 0.0;
  std::vector<double> class_p1;  // slot-1 probability per distance class

  double k_factor = 0.0;  // 2x2: 1 / (p1^2 - p2^2)
  double c1 = 0.0;        // 2x2: (p1 - p2) mu_I
  double c2 = 0.0;        // 2x2: (p1^2 + p2^2) sigma_I^2
  std::array<double, 4> cofactors{};  // 4x4: c11..c14

  Eigen::PartialPivLU<Eigen::MatrixXd> lu;

  int dimension() const { return static_cast<int>(mean.rows()); }
  double row_sum() const { return mean.row(0).sum(); }
  Eigen::VectorXd solve(const Eigen::VectorXd& y) const { return lu.solve(y); }
};

inline MfDetectorCoefficients make_mf_detector(const MeanChannelMatrix& mean,
                                               const IsiStatistics& isi) {
  if (mean.entries.rows() != mean.entries.cols())
    throw SingularMatrixError("matched filter needs a square channel matrix");
  if (numerical_rank(mean.entries) < mean.entries.rows())
    throw SingularMatrixError("mean channel matrix is rank deficient");
  MfDetectorCoefficients coeffs;
  coeffs.mean = mean.entries;
  coeffs.inverse = mean.entries.inverse();
  coeffs.determinant = mean.entries.determinant();
  coeffs.class_p1 = mean.class_probabilities;
  coeffs.lu = Eigen::PartialPivLU<Eigen::MatrixXd>(mean.entries);
  if (mean.entries.rows() == 2) {
    const double p1 = mean.entries(0, 0), p2 = mean.entries(0, 1);
    coeffs.k_factor = 1.0 / (p1 * p1 - p2 * p2);
    coeffs.c1 = (p1 - p2) * isi.mean;
    coeffs.c2 = (p1 * p1 + p2 * p2) * isi.variance;
  } else if (mean.entries.rows() == 4) {
    for (int m = 0; m < 4; ++m)
      coeffs.cofactors[m] = coeffs.inverse(0, m) * coeffs.determinant;
  }
  return coeffs;
}

// Exact linear solve of H_bar y_hat = y.
inline Eigen::VectorXd mf_transform(const Eigen::VectorXd& y,
                                    const MfDetectorCoefficients& coeffs) {
  if (y.size() != coeffs.mean.rows())
    throw SingularMatrixError("observation dimension does not match the channel matrix");
  return coeffs.solve(y);
}

// Closed-form Normal statistics of the MF output at one receiver given the
// active transmitter and concentration bit. Because H_inv H = I the mean
// collapses to L_b [receiver == tx] plus the ISI pass-through.
inline GaussianComponent mf_output_stat(const MfDetectorCoefficients& coeffs, int receiver,
                                        int tx, int bit, const MoleculeBudget& budget,
                                        const IsiStatistics& isi) {
  const double level = budget.level(bit);
  const int n = coeffs.dimension();
  double mean = (receiver == tx ? level : 0.0) + isi.mean * coeffs.inverse.row(receiver).sum();
  double var = 0.0;
  for (int m = 0; m < n; ++m) {
    const double w = coeffs.inverse(receiver, m);
    const double p = coeffs.mean(m, tx);
    var += w * w * (level * p * (1.0 - p) + isi.variance);
  }
  return {mean, var, (tx << 1) | bit};
}

// Variance accounting for the diversity statistics y_sub / y_sum. kExact
// propagates the correlation between the MF outputs (they share the same
// receiver counts), so the residual ISI variance survives in y_sub.
// kPaperIsiRemoved treats the outputs as independent and additionally
// drops the ISI variance from y_sub, reproducing the published analysis.
enum class VarianceMode { kExact, kPaperIsiRemoved };

// Per-symbol Gaussian components of the scheme's decision statistic:
// y_sub = y_hat(1) - y_hat(2) for 2x2 (four components, symbol labels) and
// y_sum = sum_n y_hat(n) for 4x4 (two components, bit labels). The ISI
// mean cancels exactly in y_sub; in y_sum it passes through scaled by the
// common row sum.
inline std::vector<GaussianComponent> decision_stat_components(
    Scheme scheme, const MfDetectorCoefficients& coeffs, double level0, double level1,
    const IsiStatistics& isi, VarianceMode mode = VarianceMode::kExact) {
  std::vector<GaussianComponent> comps;
  if (scheme == Scheme::k2x2) {
    const double p1 = coeffs.mean(0, 0), p2 = coeffs.mean(0, 1);
    const double k = coeffs.k_factor;
    const double binom = p1 * (1.0 - p1) + p2 * (1.0 - p2);
    for (int sym = 0; sym < 4; ++sym) {
      const int tx = sym >> 1;
      const double level = (sym & 1) ? level1 : level0;
      const double mean = (tx == 0 ? level : -level);
      double var;
      if (mode == VarianceMode::kExact) {
        const double gain = k * (p1 + p2);
        var = gain * gain * (level * binom + 2.0 * isi.variance);
      } else {
        var = k * k * (p1 * p1 + p2 * p2) * level * binom;
      }
      comps.push_back({mean, var, sym});
    }
  } else if (scheme == Scheme::k4x4) {
    const double s = coeffs.row_sum();
    double binom = 0.0;
    for (double p : coeffs.class_p1) binom += p * (1.0 - p);
    double inv_sq = 0.0;
    for (double c : coeffs.cofactors) inv_sq += c * c;
    inv_sq /= coeffs.determinant * coeffs.determinant;
    for (int bit = 0; bit < 2; ++bit) {
      const double level = bit ? level1 : level0;
      const double mean = level + 4.0 * isi.mean / s;
      const double inner = level * binom + 4.0 * isi.variance;
      const double var = mode == VarianceMode::kExact ? inner / (s * s) : inv_sq * inner;
      comps.push_back({mean, var, bit});
    }
  } else {
    throw ConfigError("decision statistics apply to the 2x2 and 4x4 schemes");
  }
  return comps;
}

inline std::vector<GaussianComponent> detector_output_stats(
    Scheme scheme, const MfDetectorCoefficients& coeffs, const MoleculeBudget& budget,
    const IsiStatistics& isi, VarianceMode mode = VarianceMode::kExact) {
  return decision_stat_components(scheme, coeffs, budget.level(0), budget.level(1), isi,
                                  mode);
}

// --- scheme detectors ---------------------------------------------------

// 2x1 (and SISO/QCSK): region lookup on the raw molecule count.
inline int detect_2x1(double count, const ThresholdSet& thresholds) {
  return thresholds.classify(count);
}

struct Detector2x2 {
  MfDetectorCoefficients coeffs;
  ThresholdSet thresholds;

  Detector2x2(MfDetectorCoefficients c, const MoleculeBudget& budget,
              const IsiStatistics& isi, VarianceMode mode = VarianceMode::kExact)
      : coeffs(std::move(c)),
        thresholds(build_thresholds(
            detector_output_stats(Scheme::k2x2, coeffs, budget, isi, mode))) {}

  int detect(const Eigen::VectorXd& y) const {
    const Eigen::VectorXd yhat = coeffs.solve(y);
    return thresholds.classify(yhat(0) - yhat(1));
  }
};

struct Detector4x4 {
  MfDetectorCoefficients coeffs;
  ThresholdSet bit_threshold;

  Detector4x4(MfDetectorCoefficients c, const MoleculeBudget& budget,
              const IsiStatistics& isi, VarianceMode mode = VarianceMode::kExact)
      : coeffs(std::move(c)),
        bit_threshold(build_thresholds(
            detector_output_stats(Scheme::k4x4, coeffs, budget, isi, mode))) {}

  int detect(const Eigen::VectorXd& y) const {
    // Step 1: the receiver with the most raw molecules names the
    // transmitter (ties go to the lowest index).
    int tx = 0;
    for (int i = 1; i < 4; ++i)
      if (y(i) > y(tx)) tx = i;
    // Step 2: threshold the summed MF output for the concentration bit.
    const Eigen::VectorXd yhat = coeffs.solve(y);
    const int bit = bit_threshold.classify(yhat.sum());
    return (tx << 1) | bit;
  }
};

inline int detect_2x2(const Eigen::VectorXd& y, const MfDetectorCoefficients& coeffs,
                      const MoleculeBudget& budget, const IsiStatistics& isi,
                      VarianceMode mode = VarianceMode::kExact) {
  return Detector2x2(coeffs, budget, isi, mode).detect(y);
}

inline int detect_4x4(const Eigen::VectorXd& y, const MfDetectorCoefficients& coeffs,
                      const MoleculeBudget& budget, const IsiStatistics& isi,
                      VarianceMode mode = VarianceMode::kExact) {
  return Detector4x4(coeffs, budget, isi, mode).detect(y);
}

}  // namespace msm
