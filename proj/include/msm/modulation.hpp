#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "msm/errors.hpp"
#include "msm/topology.hpp"

namespace msm {

// Molecules emitted for a concentration bit 0 / bit 1. Both must be
// non-zero or the sampled channel matrix loses rank.
struct MoleculeBudget {
  long bit0 = 0;  // L0
  long bit1 = 0;  // L1

  long total() const { return bit0 + bit1; }
  double level(int bit) const { return bit ? static_cast<double>(bit1)
                                           : static_cast<double>(bit0); }

  void validate() const {
    if (bit0 < 1 || bit1 < 1)
      throw InvalidCountError("both L0 and L1 must be at least 1");
  }

  static MoleculeBudget split(long l_total) { return {l_total / 2, l_total - l_total / 2}; }
};

// Maps symbols to (transmitter, emission level). A symbol is the value of
// its bit block read MSB-first: the leading bits pick the transmitter,
// the final bit picks the level. SISO BCSK has no spatial bits; QCSK is
// the four-level single-transmitter alphabet.
struct Alphabet {
  std::vector<int> transmitter;  // per symbol
  std::vector<double> level;     // per symbol
  int bits_per_symbol = 1;

  int size() const { return static_cast<int>(level.size()); }
  int data_bit(int symbol) const { return symbol & 1; }

  static Alphabet msm(Scheme scheme, const MoleculeBudget& budget) {
    budget.validate();
    return msm_with_levels(scheme, static_cast<double>(budget.bit0),
                           static_cast<double>(budget.bit1));
  }

  // Continuous-level variant used by the budget optimizer, which probes
  // fractional (L0, L1) while extracting the affine structure.
  static Alphabet msm_with_levels(Scheme scheme, double level0, double level1) {
    int spatial_bits = 0;
    switch (scheme) {
      case Scheme::kSiso: spatial_bits = 0; break;
      case Scheme::k2x1:
      case Scheme::k2x2: spatial_bits = 1; break;
      case Scheme::k4x4: spatial_bits = 2; break;
    }
    Alphabet a;
    a.bits_per_symbol = spatial_bits + 1;
    const int n = 1 << a.bits_per_symbol;
    for (int sym = 0; sym < n; ++sym) {
      a.transmitter.push_back(sym >> 1);
      a.level.push_back((sym & 1) ? level1 : level0);
    }
    return a;
  }

  static Alphabet qcsk(const std::array<long, 4>& levels) {
    Alphabet a;
    a.bits_per_symbol = 2;
    for (int sym = 0; sym < 4; ++sym) {
      a.transmitter.push_back(0);
      a.level.push_back(static_cast<double>(levels[sym]));
    }
    return a;
  }

  // Expected molecules per slot under uniform symbols.
  double average_level() const {
    return std::accumulate(level.begin(), level.end(), 0.0) / size();
  }
};

// One time slot's transmission.
struct SymbolFrame {
  int slot = 0;
  int transmitter = 0;
  long molecules = 0;
  int symbol = 0;
  int bits_per_symbol = 0;
};

inline std::vector<SymbolFrame> encode_with_alphabet(const std::vector<int>& bits,
                                                     const Alphabet& alphabet) {
  const int bps = alphabet.bits_per_symbol;
  if (bits.size() % bps != 0)
    throw LengthMismatchError("bit count does not tile into symbols");
  std::vector<SymbolFrame> frames;
  frames.reserve(bits.size() / bps);
  for (std::size_t pos = 0; pos < bits.size(); pos += bps) {
    int symbol = 0;
    for (int b = 0; b < bps; ++b) symbol = (symbol << 1) | (bits[pos + b] & 1);
    SymbolFrame frame;
    frame.slot = static_cast<int>(pos / bps);
    frame.symbol = symbol;
    frame.bits_per_symbol = bps;
    frame.transmitter = alphabet.transmitter[symbol];
    frame.molecules = static_cast<long>(std::llround(alphabet.level[symbol]));
    frames.push_back(frame);
  }
  return frames;
}

// Spatial bits select the transmitter, the final bit the emission level.
inline std::vector<SymbolFrame> msm_encode(const std::vector<int>& bits, Scheme scheme,
                                           const MoleculeBudget& budget) {
  return encode_with_alphabet(bits, Alphabet::msm(scheme, budget));
}

inline std::vector<int> decode_symbol(int symbol, int bits_per_symbol) {
  std::vector<int> bits(bits_per_symbol);
  for (int b = 0; b < bits_per_symbol; ++b)
    bits[b] = (symbol >> (bits_per_symbol - 1 - b)) & 1;
  return bits;
}

// Uniformly spaced QCSK levels {s, 2s, 3s, 4s} whose mean equals the
// requested average. Expects l_avg >= 10 so every level stays positive.
inline std::array<long, 4> qcsk_levels(double l_avg) {
  const double s = 0.4 * l_avg;
  return {std::lround(s), std::lround(2 * s), std::lround(3 * s), std::lround(4 * s)};
}

// Baseline encoder: every transmitter serves its paired receiver with
// on-off keying, all transmitters firing in the same slot.
inline std::vector<std::vector<long>> pairwise_bcsk_encode(const std::vector<int>& bits,
                                                           int num_transmitters,
                                                           long l1_pair) {
  if (bits.size() % num_transmitters != 0)
    throw LengthMismatchError("bit count does not tile into per-transmitter slots");
  std::vector<std::vector<long>> slots;
  for (std::size_t pos = 0; pos < bits.size(); pos += num_transmitters) {
    std::vector<long> emission(num_transmitters, 0);
    for (int j = 0; j < num_transmitters; ++j)
      emission[j] = bits[pos + j] ? l1_pair : 0;
    slots.push_back(std::move(emission));
  }
  return slots;
}

// Normal statistics of the molecules captured at one receiver, indexed by
// (previous symbol, current symbol) with one slot of residual memory:
//   mean = x_c p1(tx_c) + x_p p2(tx_p)
//   var  = x_c p1(tx_c)(1 - p1(tx_c)) + x_p p2(tx_p)(1 - p2(tx_p))
// Storage order follows the current symbol outer, previous inner.
struct SymbolStatistics {
  int alphabet_size = 0;
  std::vector<double> mean;
  std::vector<double> variance;

  int index(int previous, int current) const { return current * alphabet_size + previous; }
};

inline SymbolStatistics symbol_statistics(const std::vector<double>& p1,
                                          const std::vector<double>& p2,
                                          const Alphabet& alphabet) {
  SymbolStatistics stats;
  const int n = alphabet.size();
  stats.alphabet_size = n;
  stats.mean.resize(n * n);
  stats.variance.resize(n * n);
  for (int cur = 0; cur < n; ++cur) {
    const int tc = alphabet.transmitter[cur];
    const double xc = alphabet.level[cur];
    for (int prev = 0; prev < n; ++prev) {
      const int tp = alphabet.transmitter[prev];
      const double xp = alphabet.level[prev];
      const int idx = stats.index(prev, cur);
      stats.mean[idx] = xc * p1[tc] + xp * p2[tp];
      stats.variance[idx] =
          xc * p1[tc] * (1.0 - p1[tc]) + xp * p2[tp] * (1.0 - p2[tp]);
    }
  }
  return stats;
}

// Desired mean / variance vectors b and c of the budget optimization. All
// entries sharing a current symbol are equal, so a detected symbol looks
// the same no matter what preceded it.
struct TargetVectors {
  std::vector<double> mean;
  std::vector<double> variance;
};

namespace detail {

inline std::vector<double> spread_levels(const std::vector<double>& values) {
  const int n = static_cast<int>(values.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] < values[b]; });
  const double lo = values[order.front()];
  const double hi = values[order.back()];
  std::vector<double> out(n);
  if (hi <= lo) {
    std::fill(out.begin(), out.end(), lo);
    return out;
  }
  const double bottom = 0.8 * lo;
  const double top = 1.2 * hi;
  for (int rank = 0; rank < n; ++rank)
    out[order[rank]] = bottom + (top - bottom) * rank / (n - 1);
  return out;
}

}  // namespace detail

// Default targets: per-current-symbol means/variances averaged over the
// previous symbol at the naive equal split, then re-spread so the symbol
// levels span [0.8 min, 1.2 max] at equal spacing.
inline TargetVectors default_targets(const SymbolStatistics& naive) {
  const int n = naive.alphabet_size;
  std::vector<double> mean_by_symbol(n, 0.0), var_by_symbol(n, 0.0);
  for (int cur = 0; cur < n; ++cur) {
    for (int prev = 0; prev < n; ++prev) {
      mean_by_symbol[cur] += naive.mean[naive.index(prev, cur)];
      var_by_symbol[cur] += naive.variance[naive.index(prev, cur)];
    }
    mean_by_symbol[cur] /= n;
    var_by_symbol[cur] /= n;
  }
  const auto mean_levels = detail::spread_levels(mean_by_symbol);
  const auto var_levels = detail::spread_levels(var_by_symbol);
  TargetVectors targets;
  targets.mean.resize(n * n);
  targets.variance.resize(n * n);
  for (int cur = 0; cur < n; ++cur)
    for (int prev = 0; prev < n; ++prev) {
      targets.mean[cur * n + prev] = mean_levels[cur];
      targets.variance[cur * n + prev] = var_levels[cur];
    }
  return targets;
}

inline double budget_objective(const SymbolStatistics& stats, const TargetVectors& targets) {
  double obj = 0.0;
  for (std::size_t i = 0; i < stats.mean.size(); ++i) {
    const double dm = stats.mean[i] - targets.mean[i];
    const double dv = stats.variance[i] - targets.variance[i];
    obj += dm * dm + dv * dv;
  }
  return obj;
}

// Builds the statistics vector for a candidate (L0, L1); the entries must
// be affine in the budget, which holds for every alphabet above.
using StatsBuilder = std::function<SymbolStatistics(double l0, double l1)>;

// Minimizes ||mu - b||^2 + ||sigma^2 - c||^2 subject to L0 + L1 = L_total.
// Substituting L1 = L_total - L0 leaves a 1-D quadratic whose minimizer is
// closed-form; the result is rounded half-up and clamped to [1, L-1].
inline MoleculeBudget optimize_molecule_budget(const StatsBuilder& builder, long l_total,
                                               const TargetVectors& targets) {
  if (l_total < 2) throw InfeasibleError("L_total must be at least 2");
  const double t = static_cast<double>(l_total);
  const SymbolStatistics at_zero = builder(0.0, t);
  const SymbolStatistics at_total = builder(t, 0.0);

  double quad = 0.0, lin = 0.0;
  auto accumulate = [&](const std::vector<double>& v0, const std::vector<double>& v1,
                        const std::vector<double>& target) {
    for (std::size_t i = 0; i < v0.size(); ++i) {
      const double slope = (v1[i] - v0[i]) / t;
      const double offset = v0[i] - target[i];
      quad += slope * slope;
      lin += 2.0 * slope * offset;
    }
  };
  accumulate(at_zero.mean, at_total.mean, targets.mean);
  accumulate(at_zero.variance, at_total.variance, targets.variance);

  double l0_star = quad > 0.0 ? -lin / (2.0 * quad) : t / 2.0;
  long l0 = static_cast<long>(std::floor(l0_star + 0.5));
  l0 = std::clamp(l0, 1L, l_total - 1);
  return {l0, l_total - l0};
}

// Exhaustive integer search over the same objective; the verification
// companion of the closed-form optimizer.
inline MoleculeBudget exhaustive_molecule_budget(const StatsBuilder& builder, long l_total,
                                                 const TargetVectors& targets) {
  if (l_total < 2) throw InfeasibleError("L_total must be at least 2");
  long best_l0 = 1;
  double best_obj = std::numeric_limits<double>::infinity();
  for (long l0 = 1; l0 <= l_total - 1; ++l0) {
    const double obj = budget_objective(
        builder(static_cast<double>(l0), static_cast<double>(l_total - l0)), targets);
    if (obj < best_obj) {
      best_obj = obj;
      best_l0 = l0;
    }
  }
  return {best_l0, l_total - best_l0};
}

// Budget equalization across compared systems. Per-slot matches expected
// molecules per time slot; per-bit matches expected molecules per payload
// bit (the two bases differ once bits per symbol differ).
enum class EqualizationBasis { kPerSlot, kPerBit };

inline long equalized_pairwise_level(const MoleculeBudget& budget, int num_transmitters,
                                     int msm_bits_per_symbol, EqualizationBasis basis) {
  const double sum = static_cast<double>(budget.total());
  switch (basis) {
    case EqualizationBasis::kPerSlot:
      return std::lround(sum / num_transmitters);
    case EqualizationBasis::kPerBit:
      return std::lround(sum / msm_bits_per_symbol);
  }
  return 0;
}

inline double equalized_qcsk_average(const MoleculeBudget& budget) {
  return static_cast<double>(budget.total()) / 2.0;
}

}  // namespace msm
