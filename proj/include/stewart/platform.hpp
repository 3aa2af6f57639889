#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "stewart/liegroup.hpp"

namespace stewart {

using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec144 = Eigen::Matrix<double, 144, 1>;

enum class EdgeMode { kLegs, kRing };

/// 6-6 Gough-Stewart geometry. Base hinges a_s live in the base frame
/// {A}, platform hinges b_s in the moving frame {B}; both frames coincide
/// at assembly, so the platform height is carried by the z components of
/// b_s and the identity pose is the assembly pose.
struct PlatformConfig {
  std::array<Vec3, 6> base_hinges;      // a_s (mm)
  std::array<Vec3, 6> platform_hinges;  // b_s (mm)
  Vec6 initial_leg_lengths;             // l_s = |b_s - a_s| at assembly (mm)
  double base_radius = 0.0;             // R1 (mm), informational
  double platform_radius = 0.0;         // R2 (mm), informational
  EdgeMode edge_mode = EdgeMode::kLegs;
  std::array<int, 6> leg_pairing = {0, 1, 2, 3, 4, 5};  // leg s: a_s <-> b_pairing[s]

  /// Leg s connects base_hinges[s] to platform_hinges[leg_pairing[s]].
  const Vec3& leg_base(int s) const { return base_hinges[s]; }
  const Vec3& leg_platform(int s) const {
    return platform_hinges[leg_pairing[s]];
  }
};

/// Checks the assembly self-consistency l_s = |b - a| and leg
/// distinctness; throws std::invalid_argument on violation.
void validate_config(const PlatformConfig& cfg);

struct LegLengths {
  Vec6 lbar;  // current actuator lengths (mm)
  Vec6 los;   // displacements lbar - l0 (mm)
};

/// 12-node graph of the platform. Node order is fixed: base hinges are
/// nodes 0-5, moving hinges 6-11; node_types mirrors that order and is
/// the one-hot vocabulary the network embeds.
struct DistanceGraph {
  Eigen::Matrix<int, 12, 12> adjacency;
  Mat12 distances;  // mm; zero exactly where adjacency is zero
  std::array<int, 12> node_types;

  int node_count() const { return 12; }
};

/// Closed-form inverse kinematics: lbar_s = |R b + t - a| per leg.
LegLengths inverse_kinematics(const PlatformConfig& cfg, const Pose& T);

/// Distance matrix of the platform graph at leg lengths lbar. Legs mode
/// carries exactly the six leg edges; ring mode adds the constant
/// intra-platform edges between hinges adjacent in stored order.
DistanceGraph build_distance_graph(const PlatformConfig& cfg,
                                   const Vec6& lbar, EdgeMode mode);

inline DistanceGraph build_distance_graph(const PlatformConfig& cfg,
                                          const Vec6& lbar) {
  return build_distance_graph(cfg, lbar, cfg.edge_mode);
}

/// Row-major flattening; reshape_distance is its exact inverse.
Vec144 vectorize_distance(const Mat12& e);
Mat12 reshape_distance(const Vec144& v);

/// Symmetric reference geometry: hinge pairs at +-15 deg around three
/// 120 deg spaced directions, base hinges at R1 = 400 mm, platform
/// hinges at R2 = 250 mm staggered by 60 deg, assembly height 500 mm.
PlatformConfig default_config();

/// Generator form used by default_config and the config file.
PlatformConfig make_symmetric_config(double base_radius,
                                     double platform_radius,
                                     double half_angle_rad, double height);

/// JSON config file round-trip (schema in docs/formats.md). Serialized
/// numbers reparse to identical doubles.
PlatformConfig load_config(const std::string& path);
void save_config(const PlatformConfig& cfg, const std::string& path);

/// FNV-1a over the canonical little-endian byte image of the geometry;
/// stored in dataset headers to pin the generating configuration.
std::uint64_t config_hash(const PlatformConfig& cfg);

}  // namespace stewart
