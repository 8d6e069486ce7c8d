#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "msm/brownian.hpp"
#include "msm/channel.hpp"
#include "msm/csv.hpp"
#include "msm/detection.hpp"
#include "msm/errors.hpp"
#include "msm/fit.hpp"
#include "msm/modulation.hpp"
#include "msm/rng.hpp"
#include "msm/topology.hpp"

namespace msm {

inline double throughput(double bits_per_symbol, double slot_duration, double ber) {
  return bits_per_symbol / slot_duration * (1.0 - ber);
}

// Slot-1 and slot-2 hit probabilities for every Tx-Rx pair; everything the
// statistical channel and the detectors need to know about the physics.
struct SlotProbabilities {
  MeanChannelMatrix slot1;
  MeanChannelMatrix slot2;

  std::vector<double> p1_row(int receiver) const {
    std::vector<double> row(slot1.entries.cols());
    for (Eigen::Index j = 0; j < slot1.entries.cols(); ++j)
      row[j] = slot1.entries(receiver, j);
    return row;
  }
  std::vector<double> p2_row(int receiver) const {
    std::vector<double> row(slot2.entries.cols());
    for (Eigen::Index j = 0; j < slot2.entries.cols(); ++j)
      row[j] = slot2.entries(receiver, j);
    return row;
  }
};

inline SlotProbabilities model_slot_probabilities(
    const Topology& topo, const std::vector<ControlCoefficients>& per_class,
    double slot_duration, double diffusion) {
  return {mean_channel_matrix(topo, per_class, 1, slot_duration, diffusion),
          mean_channel_matrix(topo, per_class, 2, slot_duration, diffusion)};
}

// Single-receiver closed form applied per pair; exact for SISO and 2x1,
// an uncalibrated approximation for multi-receiver layouts.
inline SlotProbabilities closed_form_slot_probabilities(const Topology& topo,
                                                        double slot_duration,
                                                        double diffusion) {
  std::vector<ControlCoefficients> per_class(topo.num_distance_classes(),
                                             ControlCoefficients::closed_form());
  return model_slot_probabilities(topo, per_class, slot_duration, diffusion);
}

// Fits control coefficients for every distance class of a topology from
// particle-engine hitting curves. One emission per distinct emitting
// transmitter covers all classes reachable from it.
inline std::vector<FitResult> fit_scheme_coefficients(const Topology& topo,
                                                      const PhysicalParams& params,
                                                      std::uint64_t molecules,
                                                      int num_slots = 2,
                                                      int num_samples = 50,
                                                      double rmse_ceiling = 1e-2) {
  const int classes = topo.num_distance_classes();
  std::vector<FitResult> fits(classes);
  std::vector<bool> done(classes, false);
  const double t_end = num_slots * params.slot_duration;
  for (int tx = 0; tx < topo.num_transmitters(); ++tx) {
    bool needed = false;
    for (int c = 0; c < classes; ++c)
      if (!done[c] && topo.class_representative(c).second == tx) needed = true;
    if (!needed) continue;
    const HitCurve curve = simulate_hit_curve(topo, params, tx, molecules, num_samples,
                                              t_end, /*emission_id=*/1000 + tx);
    for (int c = 0; c < classes; ++c) {
      const auto [rx, src] = topo.class_representative(c);
      if (done[c] || src != tx) continue;
      std::vector<CurveSample> samples(num_samples);
      for (int i = 0; i < num_samples; ++i)
        samples[i] = {curve.times[i], curve.cumulative[rx][i]};
      const double rr = topo.receivers[rx].radius;
      fits[c] = fit_control_coefficients(samples, topo.class_surface_distance(c), rr,
                                         params.diffusion, rmse_ceiling);
      done[c] = true;
    }
  }
  return fits;
}

inline std::vector<ControlCoefficients> coefficients_of(const std::vector<FitResult>& fits) {
  std::vector<ControlCoefficients> out;
  for (const auto& f : fits) out.push_back(f.coefficients);
  return out;
}

// --- channels -------------------------------------------------------------

enum class ChannelEngine { kStatistical, kParticle };

// How the statistical channel realizes the one-slot memory. kConditional
// draws the carryover from the actual previous emission (matches the
// particle engine); kMarginal substitutes the marginalized Normal ISI of
// the published analysis, which removes the symbol-dependent spread.
enum class IsiModel { kConditional, kMarginal };

// Draws per-slot receiver counts from the Normal approximation of the
// Binomial channel, with one slot of residual memory. Entries across
// receivers are independent, mirroring the analytic model.
class StatisticalChannel {
 public:
  StatisticalChannel(const SlotProbabilities& probs, std::uint64_t stream_seed,
                     bool zero_variance = false)
      : probs_(probs),
        rng_(stream_seed),
        zero_variance_(zero_variance),
        previous_(static_cast<std::size_t>(probs.slot1.entries.cols()), 0L) {}

  // Switch to the marginal ISI model with the given per-receiver moments.
  void set_marginal_isi(std::vector<IsiStatistics> per_receiver) {
    marginal_isi_ = std::move(per_receiver);
  }

  Eigen::VectorXd next_slot(const std::vector<long>& emissions) {
    const auto& p1 = probs_.slot1.entries;
    const auto& p2 = probs_.slot2.entries;
    Eigen::VectorXd y(p1.rows());
    for (Eigen::Index i = 0; i < p1.rows(); ++i) {
      double mean = 0.0, var = 0.0;
      for (Eigen::Index j = 0; j < p1.cols(); ++j) {
        mean += emissions[j] * p1(i, j);
        var += emissions[j] * p1(i, j) * (1.0 - p1(i, j));
        if (marginal_isi_.empty()) {
          mean += previous_[j] * p2(i, j);
          var += previous_[j] * p2(i, j) * (1.0 - p2(i, j));
        }
      }
      if (!marginal_isi_.empty()) {
        mean += marginal_isi_[i].mean;
        var += marginal_isi_[i].variance;
      }
      const double z = rng_.normal();  // always consume: keeps streams paired
      y(i) = mean + (zero_variance_ ? 0.0 : std::sqrt(var) * z);
    }
    previous_ = emissions;
    return y;
  }

 private:
  SlotProbabilities probs_;
  Xoshiro256pp rng_;
  bool zero_variance_;
  std::vector<long> previous_;
  std::vector<IsiStatistics> marginal_isi_;
};

// Ground-truth channel: every emission is a full random walk. By default
// an emission contributes to its own slot and the next one (one slot of
// ISI memory); full_memory tracks every future slot instead.
class ParticleChannel {
 public:
  ParticleChannel(const Topology& topo, const PhysicalParams& params,
                  std::uint64_t run_tag, bool full_memory = false,
                  int total_slots = 0)
      : topo_(topo),
        params_(params),
        run_tag_(run_tag),
        full_memory_(full_memory),
        total_slots_(total_slots) {}

  Eigen::VectorXd next_slot(const std::vector<long>& emissions) {
    const int num_rx = topo_.num_receivers();
    if (pending_.empty()) pending_.emplace_back(Eigen::VectorXd::Zero(num_rx));
    const int horizon = full_memory_
                            ? std::max(1, total_slots_ - slot_)
                            : 2;
    for (int j = 0; j < static_cast<int>(emissions.size()); ++j) {
      if (emissions[j] <= 0) continue;
      const std::uint64_t emission_id =
          substream_seed(run_tag_, static_cast<std::uint64_t>(slot_), j);
      const WalkOutcome walk =
          simulate_emission(topo_, params_, j, static_cast<std::uint64_t>(emissions[j]),
                            horizon, emission_id, /*record_statuses=*/false);
      while (pending_.size() < static_cast<std::size_t>(horizon))
        pending_.emplace_back(Eigen::VectorXd::Zero(num_rx));
      for (int k = 0; k < horizon; ++k)
        for (int r = 0; r < num_rx; ++r)
          pending_[k](r) += static_cast<double>(walk.hits[r][k]);
    }
    Eigen::VectorXd y = pending_.front();
    pending_.pop_front();
    if (pending_.empty()) pending_.emplace_back(Eigen::VectorXd::Zero(num_rx));
    ++slot_;
    return y;
  }

 private:
  Topology topo_;
  PhysicalParams params_;
  std::uint64_t run_tag_;
  bool full_memory_;
  int total_slots_;
  int slot_ = 0;
  std::deque<Eigen::VectorXd> pending_;
};

// --- BER runs --------------------------------------------------------------

struct BerResult {
  std::string scheme;
  double avg_molecules = 0.0;  // per slot or per bit, per the sweep's basis
  std::uint64_t bit_errors = 0;
  std::uint64_t total_bits = 0;
  std::uint64_t symbols = 0;
  double ber = 0.0;
  double std_error = 0.0;
  int bits_per_symbol = 0;
  double slot_duration = 0.0;
  double throughput = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct RunSettings {
  PhysicalParams params;
  std::uint64_t symbols = 10000;
  std::uint64_t run_tag = 0;  // distinguishes sweep points sharing a seed
  ChannelEngine engine = ChannelEngine::kStatistical;
  VarianceMode variance_mode = VarianceMode::kExact;
  IsiModel isi_model = IsiModel::kConditional;
  EqualizationBasis basis = EqualizationBasis::kPerSlot;  // avg_molecules reporting
  bool full_isi_memory = false;
  bool zero_variance = false;  // statistical channel only; test hook
  std::string config_hash;
  std::string label;
};

namespace detail {

constexpr std::uint64_t kBitStreamTag = 0x42495453ull;   // "BITS"
constexpr std::uint64_t kChannelStreamTag = 0x4348414Eull;  // "CHAN"

inline std::vector<int> random_bits(std::uint64_t count, std::uint64_t seed,
                                    std::uint64_t run_tag) {
  Xoshiro256pp rng(substream_seed(seed, kBitStreamTag, run_tag));
  std::vector<int> bits(count);
  for (auto& b : bits) b = static_cast<int>(rng() >> 63);
  return bits;
}

inline BerResult assemble_result(const RunSettings& s, const std::string& label,
                                 double avg_molecules, int bits_per_symbol,
                                 std::uint64_t errors, std::uint64_t total_bits,
                                 std::uint64_t symbols) {
  BerResult r;
  r.scheme = label;
  r.avg_molecules = avg_molecules;
  r.bit_errors = errors;
  r.total_bits = total_bits;
  r.symbols = symbols;
  r.ber = total_bits ? static_cast<double>(errors) / static_cast<double>(total_bits) : 0.0;
  r.std_error = total_bits ? std::sqrt(r.ber * (1.0 - r.ber) / static_cast<double>(total_bits))
                           : 0.0;
  r.bits_per_symbol = bits_per_symbol;
  r.slot_duration = s.params.slot_duration;
  r.throughput = msm::throughput(bits_per_symbol, s.params.slot_duration, r.ber);
  r.seed = s.params.seed;
  r.config_hash = s.config_hash;
  return r;
}

}  // namespace detail

// Generic BER loop for alphabet modulations (MSM, BCSK, QCSK): one active
// transmitter per slot, symbol decided from the receiver count vector.
inline BerResult run_alphabet_ber(const Topology& topo, const SlotProbabilities& probs,
                                  const Alphabet& alphabet,
                                  const std::function<int(const Eigen::VectorXd&)>& detect,
                                  const RunSettings& s, double avg_molecules) {
  const int bps = alphabet.bits_per_symbol;
  const auto bits = detail::random_bits(s.symbols * bps, s.params.seed, s.run_tag);
  const auto frames = encode_with_alphabet(bits, alphabet);

  StatisticalChannel stat(probs,
                          substream_seed(s.params.seed, detail::kChannelStreamTag, s.run_tag),
                          s.zero_variance);
  if (s.isi_model == IsiModel::kMarginal) {
    std::vector<IsiStatistics> per_receiver;
    for (int i = 0; i < topo.num_receivers(); ++i)
      per_receiver.push_back(isi_statistics(probs.p2_row(i), alphabet));
    stat.set_marginal_isi(std::move(per_receiver));
  }
  ParticleChannel particle(topo, s.params, substream_seed(s.params.seed, 0x50415254ull, s.run_tag),
                           s.full_isi_memory, static_cast<int>(frames.size()));

  std::vector<long> emissions(topo.num_transmitters(), 0);
  std::uint64_t errors = 0;
  for (const auto& frame : frames) {
    std::fill(emissions.begin(), emissions.end(), 0L);
    emissions[frame.transmitter] = frame.molecules;
    const Eigen::VectorXd y = s.engine == ChannelEngine::kStatistical
                                  ? stat.next_slot(emissions)
                                  : particle.next_slot(emissions);
    const int decided = detect(y);
    errors += static_cast<std::uint64_t>(__builtin_popcount(
        static_cast<unsigned>(decided ^ frame.symbol)));
  }
  return detail::assemble_result(s, s.label, avg_molecules, bps, errors,
                                 s.symbols * bps, s.symbols);
}

// Scheme detector bundled with its decision-statistic thresholds (raw
// count for SISO/2x1, y_sub for 2x2, y_sum bit threshold for 4x4).
struct MsmDetector {
  std::function<int(const Eigen::VectorXd&)> detect;
  ThresholdSet thresholds;
};

inline MsmDetector make_msm_detector(const Topology& topo, const SlotProbabilities& probs,
                                     const MoleculeBudget& budget,
                                     VarianceMode mode = VarianceMode::kExact) {
  const Alphabet alphabet = Alphabet::msm(topo.scheme, budget);
  const IsiStatistics isi = isi_statistics(probs.p2_row(0), alphabet);
  MsmDetector out;
  if (topo.scheme == Scheme::kSiso || topo.scheme == Scheme::k2x1) {
    out.thresholds =
        build_thresholds(marginal_count_components(probs.p1_row(0), alphabet, isi));
    const ThresholdSet t = out.thresholds;
    out.detect = [t](const Eigen::VectorXd& y) { return t.classify(y(0)); };
  } else if (topo.scheme == Scheme::k2x2) {
    auto det = std::make_shared<Detector2x2>(make_mf_detector(probs.slot1, isi), budget,
                                             isi, mode);
    out.thresholds = det->thresholds;
    out.detect = [det](const Eigen::VectorXd& y) { return det->detect(y); };
  } else {
    auto det = std::make_shared<Detector4x4>(make_mf_detector(probs.slot1, isi), budget,
                                             isi, mode);
    out.thresholds = det->bit_threshold;
    out.detect = [det](const Eigen::VectorXd& y) { return det->detect(y); };
  }
  return out;
}

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

// Expected bit errors per symbol when Gaussian components are classified
// by the given threshold regions. Labels are bit patterns; a symbol
// landing in the wrong region contributes the Hamming distance.
inline double expected_bit_errors(const std::vector<GaussianComponent>& comps,
                                  const ThresholdSet& set) {
  double total = 0.0;
  for (const auto& comp : comps) {
    const double sigma = std::sqrt(comp.variance);
    for (std::size_t r = 0; r < set.region_labels.size(); ++r) {
      if (set.region_labels[r] == comp.label) continue;
      const double lo = r == 0 ? -1e308 : set.thresholds[r - 1];
      const double hi = r == set.thresholds.size() ? 1e308 : set.thresholds[r];
      const double mass =
          normal_cdf((hi - comp.mean) / sigma) - normal_cdf((lo - comp.mean) / sigma);
      total += mass * __builtin_popcount(
                          static_cast<unsigned>(comp.label ^ set.region_labels[r]));
    }
  }
  return total / static_cast<double>(comps.size());
}

}  // namespace detail

// Analytic BER estimate of the MSM detector under the statistical channel
// with one slot of conditional memory: the detector's own thresholds are
// evaluated against component variances that carry the full interference
// spread (the previous symbol shifts the decision statistic; the paper's
// marginal ISI terms only capture part of that).
inline double predicted_msm_ber(Scheme scheme, const SlotProbabilities& probs,
                                const MoleculeBudget& budget,
                                VarianceMode mode = VarianceMode::kExact) {
  const Alphabet alphabet = Alphabet::msm(scheme, budget);
  const IsiStatistics isi = isi_statistics(probs.p2_row(0), alphabet);
  const int bps = alphabet.bits_per_symbol;
  const int n = alphabet.size();
  const double l0 = budget.level(0), l1 = budget.level(1);
  const double mean_level = alphabet.average_level();
  const double level_sq = 0.5 * (l0 * l0 + l1 * l1);

  if (scheme == Scheme::kSiso || scheme == Scheme::k2x1) {
    const auto p1 = probs.p1_row(0);
    const auto p2 = probs.p2_row(0);
    const ThresholdSet set =
        build_thresholds(marginal_count_components(p1, alphabet, isi));
    // True marginal interference: expected conditional variance plus the
    // spread of the conditional mean across previous symbols.
    double cond_var = 0.0, mean_sq = 0.0;
    for (int sym = 0; sym < n; ++sym) {
      const double p = p2[alphabet.transmitter[sym]];
      cond_var += alphabet.level[sym] * p * (1.0 - p);
      mean_sq += alphabet.level[sym] * p * alphabet.level[sym] * p;
    }
    cond_var /= n;
    mean_sq /= n;
    const double spread = mean_sq - isi.mean * isi.mean;
    std::vector<GaussianComponent> comps;
    for (int sym = 0; sym < n; ++sym) {
      const double p = p1[alphabet.transmitter[sym]];
      comps.push_back({alphabet.level[sym] * p + isi.mean,
                       alphabet.level[sym] * p * (1.0 - p) + cond_var + spread, sym});
    }
    return detail::expected_bit_errors(comps, set) / bps;
  }

  const IsiStatistics no_isi{0.0, 0.0};
  if (scheme == Scheme::k2x2) {
    const double p1 = probs.slot1.class_probabilities[0];
    const double p2 = probs.slot1.class_probabilities[1];
    const double q1 = probs.slot2.class_probabilities[0];
    const double q2 = probs.slot2.class_probabilities[1];
    const auto coeffs = make_mf_detector(probs.slot1, isi);
    const ThresholdSet set =
        build_thresholds(detector_output_stats(scheme, coeffs, budget, isi, mode));
    const double gain = 1.0 / (p1 - p2);
    const double binom1 = p1 * (1.0 - p1) + p2 * (1.0 - p2);
    const double binom2 = q1 * (1.0 - q1) + q2 * (1.0 - q2);
    const double shift = (q1 - q2) * gain;  // per-frame ISI leakage into y_sub
    std::vector<GaussianComponent> comps;
    for (int sym = 0; sym < 4; ++sym) {
      const double level = alphabet.level[sym];
      const double mean = (sym >> 1) == 0 ? level : -level;
      const double var = gain * gain * (level * binom1 + mean_level * binom2) +
                         shift * shift * level_sq;
      comps.push_back({mean, var, sym});
    }
    return detail::expected_bit_errors(comps, set) / bps;
  }

  // 4x4: data-bit tail plus a union bound on the argmax step.
  const auto& cls1 = probs.slot1.class_probabilities;
  const auto& cls2 = probs.slot2.class_probabilities;
  const auto coeffs = make_mf_detector(probs.slot1, isi);
  const ThresholdSet set =
      build_thresholds(detector_output_stats(Scheme::k4x4, coeffs, budget, isi, mode));
  const double s_row = coeffs.row_sum();
  double binom1 = 0.0, binom2 = 0.0, sum2 = 0.0;
  for (int c = 0; c < 4; ++c) {
    binom1 += cls1[c] * (1.0 - cls1[c]);
    binom2 += cls2[c] * (1.0 - cls2[c]);
    sum2 += cls2[c];
  }
  std::vector<GaussianComponent> bit_comps;
  for (int bit = 0; bit < 2; ++bit) {
    const double level = bit ? l1 : l0;
    const double mean = level + 4.0 * isi.mean / s_row;
    const double var = (level * binom1 + mean_level * binom2) / (s_row * s_row) +
                       (sum2 / s_row) * (sum2 / s_row) * 0.25 * (l1 - l0) * (l1 - l0);
    bit_comps.push_back({mean, var, bit});
  }
  const double data_errors = detail::expected_bit_errors(bit_comps, set);

  double spatial_errors = 0.0;
  const double isi_var_per_rx =
      mean_level * (binom2 / 4.0) + level_sq * (sum2 / 4.0) * (sum2 / 4.0) * 0.1;
  for (int bit = 0; bit < 2; ++bit) {
    const double level = bit ? l1 : l0;
    for (int other = 1; other < 4; ++other) {
      const double gap = level * (cls1[0] - cls1[other]);
      const double var = level * (cls1[0] * (1.0 - cls1[0]) +
                                  cls1[other] * (1.0 - cls1[other])) +
                         2.0 * isi_var_per_rx;
      const double q = 1.0 - detail::normal_cdf(gap / std::sqrt(var));
      spatial_errors += 0.5 * q * __builtin_popcount(static_cast<unsigned>(other));
    }
  }
  return (data_errors + spatial_errors) / bps;
}

// Budget choice for the matched-filter schemes: the published optimization
// is defined on the 2x1 receiver-count statistics, so for 2x2 and 4x4 the
// split is chosen by minimizing the predicted BER of the scheme's own
// decision statistic over all feasible splits.
inline MoleculeBudget min_predicted_ber_budget(Scheme scheme, const SlotProbabilities& probs,
                                               long l_total,
                                               VarianceMode mode = VarianceMode::kExact) {
  if (l_total < 2) throw InfeasibleError("L_total must be at least 2");
  const long step = std::max(1L, l_total / 400);
  auto evaluate = [&](long l0) {
    const MoleculeBudget b{l0, l_total - l0};
    try {
      return predicted_msm_ber(scheme, probs, b, mode);
    } catch (const DegenerateInputError&) {
      return 1.0;  // coincident components: hopeless split
    }
  };
  long best_l0 = 1;
  double best = evaluate(1);
  for (long l0 = 1 + step; l0 <= l_total - 1; l0 += step) {
    const double ber = evaluate(l0);
    if (ber < best) {
      best = ber;
      best_l0 = l0;
    }
  }
  for (long l0 = std::max(1L, best_l0 - step); l0 <= std::min(l_total - 1, best_l0 + step);
       ++l0) {
    const double ber = evaluate(l0);
    if (ber < best) {
      best = ber;
      best_l0 = l0;
    }
  }
  return {best_l0, l_total - best_l0};
}

// MSM with the scheme's own detector: raw-count thresholds for SISO/2x1,
// matched filter + y_sub for 2x2, argmax + y_sum for 4x4.
inline BerResult run_msm_ber(const Topology& topo, const SlotProbabilities& probs,
                             const MoleculeBudget& budget, const RunSettings& s) {
  const Alphabet alphabet = Alphabet::msm(topo.scheme, budget);
  const auto detect = make_msm_detector(topo, probs, budget, s.variance_mode).detect;
  RunSettings labelled = s;
  if (labelled.label.empty())
    labelled.label = std::string("msm-") + to_string(topo.scheme);
  const double avg = s.basis == EqualizationBasis::kPerSlot
                         ? alphabet.average_level()
                         : alphabet.average_level() / alphabet.bits_per_symbol;
  return run_alphabet_ber(topo, probs, alphabet, detect, labelled, avg);
}

// QCSK baseline on the SISO link: four uniformly spaced levels, threshold
// detection with the same Gaussian-intersection machinery.
inline BerResult run_qcsk_ber(const Topology& topo, const SlotProbabilities& probs,
                              double l_avg, const RunSettings& s) {
  if (topo.scheme != Scheme::kSiso)
    throw ConfigError("the QCSK baseline runs on the SISO topology");
  const Alphabet alphabet = Alphabet::qcsk(qcsk_levels(l_avg));
  const IsiStatistics isi = isi_statistics(probs.p2_row(0), alphabet);
  const ThresholdSet thresholds =
      build_thresholds(marginal_count_components(probs.p1_row(0), alphabet, isi));
  RunSettings labelled = s;
  if (labelled.label.empty()) labelled.label = "qcsk-1x1";
  const double avg = s.basis == EqualizationBasis::kPerSlot
                         ? alphabet.average_level()
                         : alphabet.average_level() / alphabet.bits_per_symbol;
  return run_alphabet_ber(
      topo, probs, alphabet,
      [thresholds](const Eigen::VectorXd& y) { return thresholds.classify(y(0)); },
      labelled, avg);
}

// Detection components for one receiver of the pairwise baseline: its own
// on-off bit against marginalized inter-link and inter-symbol
// interference (every other transmitter fires with probability 1/2).
inline std::vector<GaussianComponent> pairwise_bit_components(const SlotProbabilities& probs,
                                                              int receiver, long l1_pair) {
  const auto p1 = probs.p1_row(receiver);
  const auto p2 = probs.p2_row(receiver);
  const double level = static_cast<double>(l1_pair);
  double base_mean = 0.0, base_var = 0.0;
  for (std::size_t j = 0; j < p1.size(); ++j) {
    if (static_cast<int>(j) != receiver) {
      // Bernoulli(1/2) mixture of 0 and Binomial(level, p1_j)
      base_mean += 0.5 * level * p1[j];
      base_var += 0.5 * level * p1[j] * (1.0 - p1[j]) + 0.25 * level * level * p1[j] * p1[j];
    }
    base_mean += 0.5 * level * p2[j];
    base_var += 0.5 * level * p2[j] * (1.0 - p2[j]) + 0.25 * level * level * p2[j] * p2[j];
  }
  std::vector<GaussianComponent> comps;
  for (int bit = 0; bit < 2; ++bit) {
    const double own = bit ? level : 0.0;
    comps.push_back({own * p1[receiver] + base_mean,
                     own * p1[receiver] * (1.0 - p1[receiver]) + base_var, bit});
  }
  return comps;
}

// Pairwise BCSK baseline: all transmitters fire in every slot, each
// receiver thresholds its own count for its paired transmitter's bit.
inline BerResult run_pairwise_ber(const Topology& topo, const SlotProbabilities& probs,
                                  long l1_pair, const RunSettings& s) {
  if (topo.scheme != Scheme::k2x2 && topo.scheme != Scheme::k4x4)
    throw ConfigError("the pairwise baseline runs on the 2x2 and 4x4 topologies");
  const int num_tx = topo.num_transmitters();
  const auto bits = detail::random_bits(s.symbols * num_tx, s.params.seed, s.run_tag);
  const auto slots = pairwise_bcsk_encode(bits, num_tx, l1_pair);

  std::vector<ThresholdSet> thresholds;
  for (int i = 0; i < topo.num_receivers(); ++i)
    thresholds.push_back(build_thresholds(pairwise_bit_components(probs, i, l1_pair)));

  StatisticalChannel stat(probs,
                          substream_seed(s.params.seed, detail::kChannelStreamTag, s.run_tag),
                          s.zero_variance);
  if (s.isi_model == IsiModel::kMarginal) {
    // Marginal carryover of the on-off emissions: Bernoulli(1/2) mixture
    // of 0 and Binomial(level, p2) per path.
    std::vector<IsiStatistics> per_receiver;
    for (int i = 0; i < topo.num_receivers(); ++i) {
      IsiStatistics isi;
      for (double q : probs.p2_row(i)) {
        isi.mean += 0.5 * l1_pair * q;
        isi.variance += 0.5 * l1_pair * q * (1.0 - q) +
                        0.25 * static_cast<double>(l1_pair) * l1_pair * q * q;
      }
      per_receiver.push_back(isi);
    }
    stat.set_marginal_isi(std::move(per_receiver));
  }
  ParticleChannel particle(topo, s.params, substream_seed(s.params.seed, 0x50415254ull, s.run_tag),
                           s.full_isi_memory, static_cast<int>(slots.size()));

  std::uint64_t errors = 0;
  for (std::size_t t = 0; t < slots.size(); ++t) {
    const Eigen::VectorXd y = s.engine == ChannelEngine::kStatistical
                                  ? stat.next_slot(slots[t])
                                  : particle.next_slot(slots[t]);
    for (int i = 0; i < topo.num_receivers(); ++i) {
      const int sent = slots[t][i] > 0 ? 1 : 0;
      if (thresholds[i].classify(y(i)) != sent) ++errors;
    }
  }
  RunSettings labelled = s;
  const std::string label = labelled.label.empty()
                                ? std::string("pairwise-") + to_string(topo.scheme)
                                : labelled.label;
  // num_tx bits per slot; expected molecules per slot is num_tx * level / 2.
  const double avg = s.basis == EqualizationBasis::kPerSlot ? num_tx * l1_pair / 2.0
                                                            : l1_pair / 2.0;
  return detail::assemble_result(labelled, label, avg, num_tx, errors,
                                 s.symbols * num_tx, s.symbols);
}

// --- export ----------------------------------------------------------------

inline CsvTable results_table(const std::vector<BerResult>& results) {
  CsvTable table;
  table.header = {"scheme", "avg_molecules", "ber", "stderr", "throughput", "seed",
                  "config_hash"};
  for (const auto& r : results)
    table.rows.push_back({r.scheme, format_double(r.avg_molecules), format_double(r.ber),
                          format_double(r.std_error), format_double(r.throughput),
                          std::to_string(r.seed), r.config_hash});
  return table;
}

// CSV plus an aligned text summary; identical inputs produce identical
// bytes.
inline void export_results(const std::vector<BerResult>& results, const std::string& csv_path,
                           const std::string& summary_path = "") {
  write_csv(csv_path, results_table(results));
  if (summary_path.empty()) return;
  std::ofstream out(summary_path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + summary_path);
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %14s %12s %12s %12s %10s\n", "scheme",
                "avg_molecules", "ber", "stderr", "throughput", "errors");
  out << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof(line), "%-16s %14.6g %12.4e %12.4e %12.6g %10llu\n",
                  r.scheme.c_str(), r.avg_molecules, r.ber, r.std_error, r.throughput,
                  static_cast<unsigned long long>(r.bit_errors));
    out << line;
  }
}

// Fitted coefficient tables round-trip through CSV so `fit` output can be
// reused by `ber`.
inline void write_coefficients_csv(const std::string& path,
                                   const std::vector<FitResult>& fits) {
  CsvTable table;
  table.header = {"class", "b1", "b2", "b3", "rmse"};
  for (std::size_t c = 0; c < fits.size(); ++c)
    table.rows.push_back({std::to_string(c + 1), format_double(fits[c].coefficients.b1),
                          format_double(fits[c].coefficients.b2),
                          format_double(fits[c].coefficients.b3),
                          format_double(fits[c].rmse)});
  write_csv(path, table);
}

inline std::vector<ControlCoefficients> read_coefficients_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  std::vector<ControlCoefficients> out;
  for (const auto& row : table.rows) {
    if (row.size() < 4) throw ConfigError("malformed coefficient row in " + path);
    ControlCoefficients c{std::stod(row[1]), std::stod(row[2]), std::stod(row[3])};
    if (!c.in_sanity_box())
      throw ConfigError("coefficients outside the sanity box in " + path);
    out.push_back(c);
  }
  return out;
}

inline std::vector<BerResult> parse_results_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  std::vector<BerResult> results;
  for (const auto& row : table.rows) {
    if (row.size() != 7) throw ConfigError("malformed results row in " + path);
    BerResult r;
    r.scheme = row[0];
    r.avg_molecules = std::stod(row[1]);
    r.ber = std::stod(row[2]);
    r.std_error = std::stod(row[3]);
    r.throughput = std::stod(row[4]);
    r.seed = std::stoull(row[5]);
    r.config_hash = row[6];
    results.push_back(r);
  }
  return results;
}

}  // namespace msm
