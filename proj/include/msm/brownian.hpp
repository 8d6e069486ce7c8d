#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <vector>

#include "msm/parallel.hpp"
#include "msm/rng.hpp"
#include "msm/topology.hpp"

namespace msm {

enum class MoleculeFate : std::uint8_t { kAbsorbed, kEscaped, kExpired };

struct MoleculeOutcome {
  MoleculeFate fate = MoleculeFate::kExpired;
  std::int16_t receiver = -1;  // valid when absorbed
  std::int32_t slot = -1;      // 0-based slot of absorption
};

// Result of one emission: per-receiver per-slot hit counts plus the
// terminal status of every molecule. Statuses partition the population:
// absorbed + escaped + expired == molecules.
struct WalkOutcome {
  std::vector<std::vector<std::uint64_t>> hits;  // [receiver][slot]
  std::uint64_t escaped = 0;
  std::uint64_t expired = 0;
  std::uint64_t molecules = 0;
  std::vector<MoleculeOutcome> statuses;  // empty when not recorded

  std::uint64_t absorbed() const {
    std::uint64_t n = 0;
    for (const auto& row : hits)
      for (std::uint64_t h : row) n += h;
    return n;
  }
};

// One diffusion step: each axis component is an independent draw from
// N(0, 2 D dt).
inline Vec3 step_displacement(double diffusion, double step_time, Xoshiro256pp& rng) {
  const double sigma = std::sqrt(2.0 * diffusion * step_time);
  return {sigma * rng.normal(), sigma * rng.normal(), sigma * rng.normal()};
}

namespace detail {

struct WalkSetup {
  Vec3 origin;
  double sigma = 0.0;
  std::vector<Vec3> centers;
  std::vector<double> radius{};
  std::vector<double> radius_sq;
  double escape_sq = 0.0;
  std::int64_t total_steps = 0;
  bool accelerate = true;
};

inline WalkSetup make_walk_setup(const Topology& topo, const PhysicalParams& params,
                                 int emitter, std::int64_t total_steps) {
  params.validate();
  WalkSetup setup;
  setup.origin = topo.transmitters.at(emitter);
  setup.sigma = std::sqrt(2.0 * params.diffusion * params.step_time);
  for (const auto& r : topo.receivers) {
    setup.centers.push_back(r.center);
    setup.radius.push_back(r.radius);
    setup.radius_sq.push_back(r.radius * r.radius);
  }
  const double escape = topo.resolved_escape_distance(params);
  setup.escape_sq = escape * escape;
  setup.total_steps = total_steps;
  setup.accelerate = params.far_field_acceleration;
  return setup;
}

// Walks a single molecule until absorption, escape, or the end of the
// simulated window. On absorption, step holds the 1-based step index.
//
// Far-field acceleration: while the clearance to every receiver surface is
// g, the next n steps are drawn as one Gaussian jump with variance
// n (2 D dt) per axis (exact in distribution) as long as
// sqrt(n) sigma <= g/8. By the reflection principle the skipped membership
// checks could only have fired with probability <= 2 Phi(-8) ~ 1e-15, so
// the per-step membership semantics of the plain loop are preserved.
// Absorption near the spheres always happens in single steps, keeping the
// step index (and so the slot attribution) exact.
struct WalkResult {
  MoleculeFate fate = MoleculeFate::kExpired;
  int receiver = -1;
  std::int64_t step = -1;
};

inline WalkResult walk_molecule(const WalkSetup& setup, Xoshiro256pp& rng) {
  Vec3 pos = setup.origin;
  const int num_rx = static_cast<int>(setup.centers.size());
  if (setup.sigma <= 0.0) return {MoleculeFate::kExpired, -1, -1};

  double clearance = std::numeric_limits<double>::infinity();
  for (int r = 0; r < num_rx; ++r)
    clearance = std::min(clearance,
                         distance(pos, setup.centers[r]) - setup.radius[r]);

  std::int64_t s = 0;
  while (s < setup.total_steps) {
    std::int64_t n = 1;
    if (setup.accelerate) {
      const double limit = clearance / 8.0;
      if (limit > setup.sigma) {
        const double ratio = limit / setup.sigma;
        n = std::min<std::int64_t>(setup.total_steps - s,
                                   static_cast<std::int64_t>(ratio * ratio));
        if (n < 1) n = 1;
      }
    }
    const double step_sigma = n == 1 ? setup.sigma : setup.sigma * std::sqrt(static_cast<double>(n));
    pos.x += step_sigma * rng.normal();
    pos.y += step_sigma * rng.normal();
    pos.z += step_sigma * rng.normal();
    s += n;

    int hit = -1;
    double next_clearance = std::numeric_limits<double>::infinity();
    for (int r = 0; r < num_rx; ++r) {
      const double d2 = squared_norm(pos - setup.centers[r]);
      if (d2 < setup.radius_sq[r]) {
        // Disjoint spheres make a double hit impossible; fail loudly if a
        // hand-built topology violates that.
        assert(hit < 0 && "molecule inside two receivers");
        hit = r;
#ifdef NDEBUG
        break;
#endif
      }
      next_clearance = std::min(next_clearance, std::sqrt(d2) - setup.radius[r]);
    }
    if (hit >= 0) return {MoleculeFate::kAbsorbed, hit, s};
    if (squared_norm(pos - setup.origin) > setup.escape_sq)
      return {MoleculeFate::kEscaped, -1, s};
    clearance = next_clearance;
  }
  return {MoleculeFate::kExpired, -1, -1};
}

}  // namespace detail

// Emits `molecules` molecules from the given transmitter at the start of
// slot 0 and walks them for num_slots slots. Absorptions are credited to
// the slot containing the absorbing step. emission_id keeps RNG streams
// distinct across emissions sharing one master seed.
inline WalkOutcome simulate_emission(const Topology& topo, const PhysicalParams& params,
                                     int emitter, std::uint64_t molecules, int num_slots,
                                     std::uint64_t emission_id = 0,
                                     bool record_statuses = true) {
  const int steps_per_slot = params.steps_per_slot();
  const auto setup = detail::make_walk_setup(
      topo, params, emitter, static_cast<std::int64_t>(num_slots) * steps_per_slot);

  WalkOutcome out;
  out.molecules = molecules;
  out.hits.assign(topo.num_receivers(), std::vector<std::uint64_t>(num_slots, 0));
  if (record_statuses) out.statuses.resize(molecules);
  if (molecules == 0) return out;

  struct Partial {
    std::vector<std::vector<std::uint64_t>> hits;
    std::uint64_t escaped = 0, expired = 0;
  };
  std::vector<Partial> partials;
  std::mutex merge_mutex;

  parallel_chunks(molecules, [&](std::uint64_t begin, std::uint64_t end) {
    Partial local;
    local.hits.assign(topo.num_receivers(), std::vector<std::uint64_t>(num_slots, 0));
    for (std::uint64_t m = begin; m < end; ++m) {
      Xoshiro256pp rng(substream_seed(params.seed, emission_id, m));
      const auto res = detail::walk_molecule(setup, rng);
      MoleculeOutcome status;
      status.fate = res.fate;
      if (res.fate == MoleculeFate::kAbsorbed) {
        const int slot = static_cast<int>((res.step - 1) / steps_per_slot);
        local.hits[res.receiver][slot]++;
        status.receiver = static_cast<std::int16_t>(res.receiver);
        status.slot = slot;
      } else if (res.fate == MoleculeFate::kEscaped) {
        local.escaped++;
      } else {
        local.expired++;
      }
      if (record_statuses) out.statuses[m] = status;
    }
    std::lock_guard<std::mutex> lock(merge_mutex);
    partials.push_back(std::move(local));
  });

  for (const auto& p : partials) {
    out.escaped += p.escaped;
    out.expired += p.expired;
    for (int r = 0; r < topo.num_receivers(); ++r)
      for (int k = 0; k < num_slots; ++k) out.hits[r][k] += p.hits[r][k];
  }
  return out;
}

// Empirical per-slot hit probabilities with Binomial standard errors.
struct HitProbabilityEstimate {
  std::vector<std::vector<double>> p_hat;     // [receiver][slot]
  std::vector<std::vector<double>> std_err;   // sqrt(p(1-p)/M)
  std::uint64_t molecules = 0;
  WalkOutcome outcome;
};

inline HitProbabilityEstimate estimate_hit_probabilities(const Topology& topo,
                                                         const PhysicalParams& params,
                                                         int emitter,
                                                         std::uint64_t molecules,
                                                         int num_slots,
                                                         std::uint64_t emission_id = 0) {
  HitProbabilityEstimate est;
  est.outcome =
      simulate_emission(topo, params, emitter, molecules, num_slots, emission_id, false);
  est.molecules = molecules;
  est.p_hat.assign(topo.num_receivers(), std::vector<double>(num_slots, 0.0));
  est.std_err = est.p_hat;
  if (molecules == 0) return est;
  const double m = static_cast<double>(molecules);
  for (int r = 0; r < topo.num_receivers(); ++r)
    for (int k = 0; k < num_slots; ++k) {
      const double p = static_cast<double>(est.outcome.hits[r][k]) / m;
      est.p_hat[r][k] = p;
      est.std_err[r][k] = std::sqrt(p * (1.0 - p) / m);
    }
  return est;
}

// Cumulative empirical hitting curve sampled on a uniform time grid; the
// input for control-coefficient fitting.
struct HitCurve {
  std::vector<double> times;                       // right edges of the bins
  std::vector<std::vector<double>> cumulative;     // [receiver][sample]
  std::uint64_t molecules = 0;
};

inline HitCurve simulate_hit_curve(const Topology& topo, const PhysicalParams& params,
                                   int emitter, std::uint64_t molecules, int num_samples,
                                   double t_end, std::uint64_t emission_id = 0) {
  const auto total_steps = static_cast<std::int64_t>(std::llround(t_end / params.step_time));
  const auto setup = detail::make_walk_setup(topo, params, emitter, total_steps);
  const int num_rx = topo.num_receivers();

  std::vector<std::vector<std::uint64_t>> bins(num_rx,
                                               std::vector<std::uint64_t>(num_samples, 0));
  std::mutex merge_mutex;
  parallel_chunks(molecules, [&](std::uint64_t begin, std::uint64_t end) {
    std::vector<std::vector<std::uint64_t>> local(
        num_rx, std::vector<std::uint64_t>(num_samples, 0));
    for (std::uint64_t m = begin; m < end; ++m) {
      Xoshiro256pp rng(substream_seed(params.seed, emission_id, m));
      const auto res = detail::walk_molecule(setup, rng);
      if (res.fate == MoleculeFate::kAbsorbed) {
        // bin = ceil(step * num_samples / total_steps) - 1, in integers
        const std::int64_t bin =
            (res.step * num_samples + total_steps - 1) / total_steps - 1;
        local[res.receiver][static_cast<std::size_t>(bin)]++;
      }
    }
    std::lock_guard<std::mutex> lock(merge_mutex);
    for (int r = 0; r < num_rx; ++r)
      for (int i = 0; i < num_samples; ++i) bins[r][i] += local[r][i];
  });

  HitCurve curve;
  curve.molecules = molecules;
  curve.times.resize(num_samples);
  curve.cumulative.assign(num_rx, std::vector<double>(num_samples, 0.0));
  const double delta = t_end / num_samples;
  for (int i = 0; i < num_samples; ++i) curve.times[i] = delta * (i + 1);
  for (int r = 0; r < num_rx; ++r) {
    std::uint64_t acc = 0;
    for (int i = 0; i < num_samples; ++i) {
      acc += bins[r][i];
      curve.cumulative[r][i] = static_cast<double>(acc) / static_cast<double>(molecules);
    }
  }
  return curve;
}

}  // namespace msm
