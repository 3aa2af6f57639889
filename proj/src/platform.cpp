#include "stewart/platform.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace stewart {

namespace {

using nlohmann::json;

constexpr double kDegToRad = EIGEN_PI / 180.0;

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw std::invalid_argument("expected a 3-element array");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

void validate_config(const PlatformConfig& cfg) {
  std::array<bool, 6> seen = {};
  for (int s = 0; s < 6; ++s) {
    const int p = cfg.leg_pairing[s];
    if (p < 0 || p >= 6 || seen[p]) {
      throw std::invalid_argument("leg_pairing is not a permutation of 0..5");
    }
    seen[p] = true;
  }
  for (int s = 0; s < 6; ++s) {
    const double l = (cfg.leg_platform(s) - cfg.leg_base(s)).norm();
    if (std::abs(l - cfg.initial_leg_lengths[s]) > 1e-6) {
      throw std::invalid_argument(
          "initial leg length inconsistent with hinge geometry");
    }
    for (int r = s + 1; r < 6; ++r) {
      if ((cfg.leg_base(s) - cfg.leg_base(r)).norm() < 1e-12 &&
          (cfg.leg_platform(s) - cfg.leg_platform(r)).norm() < 1e-12) {
        throw std::invalid_argument("two legs share both hinge points");
      }
    }
  }
}

LegLengths inverse_kinematics(const PlatformConfig& cfg, const Pose& T) {
  LegLengths out;
  for (int s = 0; s < 6; ++s) {
    out.lbar[s] = (T.apply(cfg.leg_platform(s)) - cfg.leg_base(s)).norm();
  }
  out.los = out.lbar - cfg.initial_leg_lengths;
  return out;
}

DistanceGraph build_distance_graph(const PlatformConfig& cfg,
                                   const Vec6& lbar, EdgeMode mode) {
  DistanceGraph g;
  g.adjacency.setZero();
  g.distances.setZero();
  for (int i = 0; i < 12; ++i) g.node_types[i] = i;

  auto set_edge = [&g](int i, int j, double d) {
    g.adjacency(i, j) = g.adjacency(j, i) = 1;
    g.distances(i, j) = g.distances(j, i) = d;
  };

  for (int s = 0; s < 6; ++s) {
    set_edge(s, 6 + cfg.leg_pairing[s], lbar[s]);
  }
  if (mode == EdgeMode::kRing) {
    for (int s = 0; s < 6; ++s) {
      const int n = (s + 1) % 6;
      set_edge(s, n, (cfg.base_hinges[s] - cfg.base_hinges[n]).norm());
      set_edge(6 + s, 6 + n,
               (cfg.platform_hinges[s] - cfg.platform_hinges[n]).norm());
    }
  }
  return g;
}

Vec144 vectorize_distance(const Mat12& e) {
  Vec144 v;
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      v[i * 12 + j] = e(i, j);
    }
  }
  return v;
}

Mat12 reshape_distance(const Vec144& v) {
  Mat12 e;
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      e(i, j) = v[i * 12 + j];
    }
  }
  return e;
}

PlatformConfig make_symmetric_config(double base_radius,
                                     double platform_radius,
                                     double half_angle_rad, double height) {
  PlatformConfig cfg;
  cfg.base_radius = base_radius;
  cfg.platform_radius = platform_radius;
  for (int s = 0; s < 6; ++s) {
    const double lobe = 120.0 * kDegToRad * (s / 2);
    const double sign = (s % 2 == 0) ? -1.0 : 1.0;
    const double a_angle = lobe + sign * half_angle_rad;
    // Platform hinges sit on the 60 deg staggered directions so adjacent
    // legs zigzag between the two hexagons.
    const double b_angle = lobe + sign * (60.0 * kDegToRad - half_angle_rad);
    cfg.base_hinges[s] =
        Vec3(base_radius * std::cos(a_angle), base_radius * std::sin(a_angle),
             0.0);
    cfg.platform_hinges[s] =
        Vec3(platform_radius * std::cos(b_angle),
             platform_radius * std::sin(b_angle), height);
  }
  for (int s = 0; s < 6; ++s) {
    cfg.initial_leg_lengths[s] =
        (cfg.leg_platform(s) - cfg.leg_base(s)).norm();
  }
  validate_config(cfg);
  return cfg;
}

PlatformConfig default_config() {
  return make_symmetric_config(400.0, 250.0, 15.0 * kDegToRad, 500.0);
}

PlatformConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open platform config: " + path);
  }
  json j = json::parse(in);

  PlatformConfig cfg;
  if (j.contains("base_hinges")) {
    const auto& a = j.at("base_hinges");
    const auto& b = j.at("platform_hinges");
    if (a.size() != 6 || b.size() != 6) {
      throw std::invalid_argument("hinge arrays must have 6 entries");
    }
    for (int s = 0; s < 6; ++s) {
      cfg.base_hinges[s] = vec3_from_json(a[s]);
      cfg.platform_hinges[s] = vec3_from_json(b[s]);
    }
    cfg.base_radius = j.value("base_radius", 0.0);
    cfg.platform_radius = j.value("platform_radius", 0.0);
  } else {
    const auto& g = j.at("generator");
    cfg = make_symmetric_config(g.at("base_radius").get<double>(),
                                g.at("platform_radius").get<double>(),
                                g.at("half_angle_deg").get<double>() * kDegToRad,
                                g.at("height").get<double>());
  }

  if (j.contains("leg_pairing")) {
    const auto& p = j.at("leg_pairing");
    if (p.size() != 6) {
      throw std::invalid_argument("leg_pairing must have 6 entries");
    }
    for (int s = 0; s < 6; ++s) cfg.leg_pairing[s] = p[s].get<int>();
  }
  if (j.contains("initial_leg_lengths")) {
    const auto& l = j.at("initial_leg_lengths");
    if (l.size() != 6) {
      throw std::invalid_argument("initial_leg_lengths must have 6 entries");
    }
    for (int s = 0; s < 6; ++s) cfg.initial_leg_lengths[s] = l[s].get<double>();
  } else {
    for (int s = 0; s < 6; ++s) {
      cfg.initial_leg_lengths[s] =
          (cfg.leg_platform(s) - cfg.leg_base(s)).norm();
    }
  }

  const std::string mode = j.value("edge_mode", std::string("legs"));
  if (mode == "legs") {
    cfg.edge_mode = EdgeMode::kLegs;
  } else if (mode == "ring") {
    cfg.edge_mode = EdgeMode::kRing;
  } else {
    throw std::invalid_argument("edge_mode must be \"legs\" or \"ring\"");
  }

  validate_config(cfg);
  return cfg;
}

void save_config(const PlatformConfig& cfg, const std::string& path) {
  json j;
  j["base_hinges"] = json::array();
  j["platform_hinges"] = json::array();
  for (int s = 0; s < 6; ++s) {
    j["base_hinges"].push_back(vec3_to_json(cfg.base_hinges[s]));
    j["platform_hinges"].push_back(vec3_to_json(cfg.platform_hinges[s]));
  }
  j["initial_leg_lengths"] = json::array();
  for (int s = 0; s < 6; ++s) {
    j["initial_leg_lengths"].push_back(cfg.initial_leg_lengths[s]);
  }
  j["base_radius"] = cfg.base_radius;
  j["platform_radius"] = cfg.platform_radius;
  j["edge_mode"] = cfg.edge_mode == EdgeMode::kRing ? "ring" : "legs";
  j["leg_pairing"] = cfg.leg_pairing;

  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write platform config: " + path);
  }
  out << j.dump(2) << "\n";
}

std::uint64_t config_hash(const PlatformConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a offset basis
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  auto mix_double = [&](double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    unsigned char le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(bits >> (8 * i));
    mix_bytes(le, 8);
  };
  for (int s = 0; s < 6; ++s) {
    for (int k = 0; k < 3; ++k) mix_double(cfg.base_hinges[s][k]);
  }
  for (int s = 0; s < 6; ++s) {
    for (int k = 0; k < 3; ++k) mix_double(cfg.platform_hinges[s][k]);
  }
  for (int s = 0; s < 6; ++s) mix_double(cfg.initial_leg_lengths[s]);
  for (int s = 0; s < 6; ++s) {
    const unsigned char b = static_cast<unsigned char>(cfg.leg_pairing[s]);
    mix_bytes(&b, 1);
  }
  const unsigned char mode = cfg.edge_mode == EdgeMode::kRing ? 1 : 0;
  mix_bytes(&mode, 1);
  return h;
}

}  // namespace stewart
