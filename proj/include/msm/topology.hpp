#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "msm/errors.hpp"

namespace msm {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}
inline double squared_norm(const Vec3& v) {
  return v.x * v.x + v.y * v.y + v.z * v.z;
}
inline double norm(const Vec3& v) { return std::sqrt(squared_norm(v)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

enum class Scheme { kSiso, k2x1, k2x2, k4x4 };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::kSiso: return "siso";
    case Scheme::k2x1: return "2x1";
    case Scheme::k2x2: return "2x2";
    case Scheme::k4x4: return "4x4";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& name) {
  if (name == "siso" || name == "1x1") return Scheme::kSiso;
  if (name == "2x1") return Scheme::k2x1;
  if (name == "2x2") return Scheme::k2x2;
  if (name == "4x4") return Scheme::k4x4;
  throw ConfigError("unknown scheme: " + name);
}

// Shared simulation constants. Units are micrometers and seconds.
struct PhysicalParams {
  double diffusion = 50.0;      // D, um^2/s
  double step_time = 1e-4;      // dt, s
  double slot_duration = 0.1;   // Ts, s
  double escape_distance = 0.0; // d_L, um; 0 selects the topology default
  std::uint64_t seed = 1;
  // Aggregate steps into one exact Gaussian jump while far from every
  // receiver; distributionally identical to single stepping.
  bool far_field_acceleration = true;

  int steps_per_slot() const {
    return static_cast<int>(std::llround(slot_duration / step_time));
  }

  void validate() const {
    if (!(diffusion > 0.0)) throw ConfigError("diffusion must be positive");
    if (!(step_time > 0.0)) throw ConfigError("step time must be positive");
    if (!(slot_duration > 0.0)) throw ConfigError("slot duration must be positive");
    const double ratio = slot_duration / step_time;
    if (std::abs(ratio - std::llround(ratio)) > 1e-6 * ratio || std::llround(ratio) < 1)
      throw ConfigError("slot duration must be an integer multiple of the step time");
    if (escape_distance < 0.0) throw ConfigError("escape distance must be non-negative");
  }
};

struct Receiver {
  Vec3 center;
  double radius = 0.0;
};

// Point transmitters and absorbing spherical receivers for one of the four
// supported layouts. Transmitters sit on the x = 0 plane, receiver centers
// on the parallel plane x = d1 + Rr, so the paired surface distance is d1.
struct Topology {
  Scheme scheme = Scheme::kSiso;
  std::vector<Vec3> transmitters;
  std::vector<Receiver> receivers;

  int num_transmitters() const { return static_cast<int>(transmitters.size()); }
  int num_receivers() const { return static_cast<int>(receivers.size()); }

  double center_distance(int receiver, int transmitter) const {
    return distance(receivers[receiver].center, transmitters[transmitter]);
  }

  // Transmitter-to-sphere-surface distance; this is the "d" of the channel
  // formulas.
  double surface_distance(int receiver, int transmitter) const {
    return center_distance(receiver, transmitter) - receivers[receiver].radius;
  }

  // Symmetric layouts group Tx-Rx pairs into distance classes (0-based):
  //   siso: single class
  //   2x1:  class = transmitter index (one receiver, two path lengths)
  //   2x2:  0 = paired, 1 = cross
  //   4x4:  xor of the vertex indices; 0 paired, 1 offset h, 2 offset w,
  //         3 offset by the face diagonal
  int distance_class(int receiver, int transmitter) const {
    switch (scheme) {
      case Scheme::kSiso: return 0;
      case Scheme::k2x1: return transmitter;
      case Scheme::k2x2: return receiver == transmitter ? 0 : 1;
      case Scheme::k4x4: return receiver ^ transmitter;
    }
    return 0;
  }

  int num_distance_classes() const {
    switch (scheme) {
      case Scheme::kSiso: return 1;
      case Scheme::k2x1: return 2;
      case Scheme::k2x2: return 2;
      case Scheme::k4x4: return 4;
    }
    return 1;
  }

  // Representative (receiver, transmitter) pair for a distance class.
  std::pair<int, int> class_representative(int cls) const {
    switch (scheme) {
      case Scheme::kSiso: return {0, 0};
      case Scheme::k2x1: return {0, cls};
      default: return {cls, 0};
    }
  }

  double class_surface_distance(int cls) const {
    auto [r, t] = class_representative(cls);
    return surface_distance(r, t);
  }

  double max_center_distance() const {
    double best = 0.0;
    for (int r = 0; r < num_receivers(); ++r)
      for (int t = 0; t < num_transmitters(); ++t)
        best = std::max(best, center_distance(r, t));
    return best;
  }

  // Escape radius used by the walk engine when the config leaves it unset.
  double default_escape_distance() const { return 10.0 * max_center_distance(); }

  double resolved_escape_distance(const PhysicalParams& params) const {
    return params.escape_distance > 0.0 ? params.escape_distance
                                        : default_escape_distance();
  }
};

// Receiver spheres must stay pairwise disjoint and no transmitter may sit
// strictly inside a sphere (on the surface is allowed). Applied to every
// constructed layout; available for hand-built ones too.
inline void validate_geometry(const Topology& topo) {
  const auto& rx = topo.receivers;
  for (std::size_t i = 0; i < rx.size(); ++i)
    for (std::size_t j = i + 1; j < rx.size(); ++j)
      if (distance(rx[i].center, rx[j].center) <= rx[i].radius + rx[j].radius)
        throw InvalidGeometryError("receiver spheres overlap");
  for (const auto& tx : topo.transmitters)
    for (const auto& r : rx)
      if (distance(tx, r.center) < r.radius)
        throw InvalidGeometryError("transmitter lies inside a receiver");
}

// Builds one of the four scheme layouts. d1 is the paired transmitter to
// sphere-surface distance and Rr the receiver radius. h and w are the
// published lateral spacings: for 2x1 (point transmitters, one receiver)
// h is the offset between the transmitters, so the far path is
// sqrt(h^2 + (d1+Rr)^2) - Rr; for 2x2 and 4x4 they are the surface gaps
// between neighbouring receiver spheres, so vertex centers sit
// h + 2 Rr (and w + 2 Rr) apart and the spheres can never overlap.
inline Topology make_topology(Scheme scheme, double d1, double h, double w, double rr) {
  if (!(d1 > 0.0)) throw InvalidGeometryError("d1 must be positive");
  if (!(rr > 0.0)) throw InvalidGeometryError("receiver radius must be positive");
  if ((scheme == Scheme::k2x1 || scheme == Scheme::k2x2 || scheme == Scheme::k4x4) && h < 0.0)
    throw InvalidGeometryError("h must be non-negative");
  if (scheme == Scheme::k4x4 && w < 0.0)
    throw InvalidGeometryError("w must be non-negative");

  const double plane = d1 + rr;  // x of the receiver-center plane
  Topology topo;
  topo.scheme = scheme;
  switch (scheme) {
    case Scheme::kSiso:
      topo.transmitters = {{0, 0, 0}};
      topo.receivers = {{{plane, 0, 0}, rr}};
      break;
    case Scheme::k2x1:
      topo.transmitters = {{0, 0, 0}, {0, h, 0}};
      topo.receivers = {{{plane, 0, 0}, rr}};
      break;
    case Scheme::k2x2: {
      const double offset = h + 2.0 * rr;
      topo.transmitters = {{0, 0, 0}, {0, offset, 0}};
      topo.receivers = {{{plane, 0, 0}, rr}, {{plane, offset, 0}, rr}};
      break;
    }
    case Scheme::k4x4: {
      // Vertices of a cuboid: transmitters on one face, receivers on the
      // opposite face; bit 0 of the index selects the h offset, bit 1 the
      // w offset. The xor of two indices then names the distance class.
      const double oy = h + 2.0 * rr;
      const double oz = w + 2.0 * rr;
      for (int i = 0; i < 4; ++i) {
        const double y = (i & 1) ? oy : 0.0;
        const double z = (i & 2) ? oz : 0.0;
        topo.transmitters.push_back({0, y, z});
        topo.receivers.push_back({{plane, y, z}, rr});
      }
      break;
    }
  }
  validate_geometry(topo);
  return topo;
}

inline Topology make_topology(Scheme scheme, double d1, double rr) {
  return make_topology(scheme, d1, 0.0, 0.0, rr);
}

}  // namespace msm
