#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <random>
#include <vector>

#include "msm/errors.hpp"
#include "msm/rng.hpp"
#include "msm/topology.hpp"

namespace msm {

// One Tx-Rx diffusion path. d is the transmitter-to-surface distance.
struct LinkGeometry {
  double distance = 0.0;   // d, um
  double radius = 0.0;     // Rr, um
  double diffusion = 0.0;  // D, um^2/s

  double time_scale() const { return distance * distance / (2.0 * diffusion); }

  void validate() const {
    if (!(distance > 0.0)) throw ConfigError("link distance must be positive");
    if (!(radius > 0.0)) throw ConfigError("receiver radius must be positive");
    if (!(diffusion > 0.0)) throw ConfigError("diffusion must be positive");
  }
};

// Scaled Levy density of the first arrival time at an absorbing sphere
// (no drift). Zero for t <= 0.
inline double first_arrival_pdf(double t, const LinkGeometry& g) {
  if (t <= 0.0) return 0.0;
  const double lambda = g.time_scale();
  const double amp = g.radius / (g.distance + g.radius);
  return amp * std::sqrt(lambda / (2.0 * M_PI * t * t * t)) * std::exp(-lambda / (2.0 * t));
}

// Probability that a molecule has been absorbed by time T.
inline double hitting_probability(double T, const LinkGeometry& g) {
  if (T <= 0.0) return 0.0;
  return g.radius / (g.radius + g.distance) *
         std::erfc(g.distance / std::sqrt(4.0 * g.diffusion * T));
}

// Probability of absorption inside slot k (1-based) of length Ts.
inline double slot_probability(int k, double slot_duration, const LinkGeometry& g) {
  return hitting_probability(k * slot_duration, g) -
         hitting_probability((k - 1) * slot_duration, g);
}

// Fit parameters adapting the single-receiver formula to multi-receiver
// layouts. (1, 0.5, 0.5) reproduces the closed form exactly.
struct ControlCoefficients {
  double b1 = 1.0;
  double b2 = 0.5;
  double b3 = 0.5;

  static ControlCoefficients closed_form() { return {1.0, 0.5, 0.5}; }
  bool in_sanity_box() const {
    return b1 > 0.0 && b1 <= 2.0 && b2 > 0.0 && b2 <= 1.5 && b3 > 0.0 && b3 <= 1.5;
  }
};

// Cumulative hit-probability model with control coefficients.
inline double model_probability(double t, double dist, double radius, double diffusion,
                                const ControlCoefficients& c) {
  if (t <= 0.0) return 0.0;
  const double scale = std::pow(4.0 * diffusion, c.b2) * std::pow(t, c.b3);
  return c.b1 * radius / (dist + radius) * std::erfc(dist / scale);
}

// Per-slot model probability; the k-1 = 0 term is zero by definition.
inline double slot_model_probability(int k, double slot_duration, double dist,
                                     double radius, double diffusion,
                                     const ControlCoefficients& c) {
  const double upper = model_probability(k * slot_duration, dist, radius, diffusion, c);
  if (k <= 1) return upper;
  return upper - model_probability((k - 1) * slot_duration, dist, radius, diffusion, c);
}

// Mean channel matrix: entry (i, j) is the slot-k hit probability of the
// path from Tx j to Rx i, evaluated from the per-class coefficients. The
// symmetric pattern is enforced by construction through distance classes.
struct MeanChannelMatrix {
  Scheme scheme = Scheme::kSiso;
  Eigen::MatrixXd entries;                   // num_receivers x num_transmitters
  std::vector<double> class_probabilities;   // one value per distance class
};

inline MeanChannelMatrix mean_channel_matrix(const Topology& topo,
                                             const std::vector<ControlCoefficients>& per_class,
                                             int k, double slot_duration, double diffusion) {
  const int classes = topo.num_distance_classes();
  if (static_cast<int>(per_class.size()) != classes)
    throw ConfigError("need one coefficient set per distance class");
  MeanChannelMatrix out;
  out.scheme = topo.scheme;
  out.class_probabilities.resize(classes);
  for (int c = 0; c < classes; ++c) {
    const double d = topo.class_surface_distance(c);
    const double rr = topo.receivers[topo.class_representative(c).first].radius;
    out.class_probabilities[c] =
        slot_model_probability(k, slot_duration, d, rr, diffusion, per_class[c]);
  }
  out.entries.resize(topo.num_receivers(), topo.num_transmitters());
  for (int i = 0; i < topo.num_receivers(); ++i)
    for (int j = 0; j < topo.num_transmitters(); ++j)
      out.entries(i, j) = out.class_probabilities[topo.distance_class(i, j)];
  return out;
}

// One stochastic realization of the channel matrix: independent normalized
// Binomial draws around the mean entries.
struct ChannelMatrixSample {
  Eigen::MatrixXd entries;
  std::vector<long> molecule_counts;  // x_j per transmitter
};

inline ChannelMatrixSample sample_channel_matrix(const MeanChannelMatrix& mean,
                                                 const std::vector<long>& molecule_counts,
                                                 Xoshiro256pp& rng) {
  const auto rows = mean.entries.rows();
  const auto cols = mean.entries.cols();
  if (static_cast<long>(molecule_counts.size()) != cols)
    throw InvalidCountError("need one molecule count per transmitter");
  for (long x : molecule_counts)
    if (x < 1) throw InvalidCountError("molecule counts must be at least 1");

  ChannelMatrixSample sample;
  sample.molecule_counts = molecule_counts;
  sample.entries.resize(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const long x = molecule_counts[j];
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double p = mean.entries(i, j);
      if (p <= 0.0) {
        sample.entries(i, j) = 0.0;
      } else if (p >= 1.0) {
        sample.entries(i, j) = 1.0;
      } else {
        std::binomial_distribution<long> bin(x, p);
        sample.entries(i, j) = static_cast<double>(bin(rng)) / static_cast<double>(x);
      }
    }
  }
  return sample;
}

// Singular values above tol * sigma_max count toward the rank.
inline int numerical_rank(const Eigen::MatrixXd& m, double tol = 1e-8) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double cutoff = tol * sv(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff && sv(i) > 0.0) ++rank;
  return rank;
}

}  // namespace msm
