#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "stewart/datagen.hpp"
#include "stewart/nrsolver.hpp"
#include "stewart/rng.hpp"

using namespace stewart;

namespace {

Pose sample_pose(Philox& rng) {
  Pose T;
  T.r = euler_to_rotation(rng.next_uniform(-EIGEN_PI / 6, EIGEN_PI / 6),
                          rng.next_uniform(-EIGEN_PI / 6, EIGEN_PI / 6),
                          rng.next_uniform(-EIGEN_PI / 6, EIGEN_PI / 6));
  for (int k = 0; k < 3; ++k) T.t[k] = rng.next_uniform(-50.0, 50.0);
  return T;
}

FkObjective objective_for(const PlatformConfig& cfg, const Pose& T) {
  FkObjective obj;
  obj.cfg = cfg;
  obj.target_los = inverse_kinematics(cfg, T).los;
  return obj;
}

Twist perturbed_log(Philox& rng, const Pose& T, double trans_mm,
                    double rot_rad) {
  Twist xi = se3_log(T);
  for (int k = 0; k < 3; ++k) {
    xi.xi[k] += rng.next_uniform(-trans_mm, trans_mm);
  }
  for (int k = 3; k < 6; ++k) {
    xi.xi[k] += rng.next_uniform(-rot_rad, rot_rad);
  }
  return xi;
}

// Two distinct legs on one line make the Jacobian rows collinear.
PlatformConfig singular_config() {
  PlatformConfig cfg = default_config();
  const Vec3 direction =
      (cfg.platform_hinges[0] - cfg.base_hinges[0]).normalized();
  cfg.base_hinges[1] = cfg.base_hinges[0] + 40.0 * direction;
  cfg.platform_hinges[1] = cfg.platform_hinges[0] - 40.0 * direction;
  for (int s = 0; s < 6; ++s) {
    cfg.initial_leg_lengths[s] =
        (cfg.leg_platform(s) - cfg.leg_base(s)).norm();
  }
  return cfg;
}

}  // namespace

TEST_SUITE("nrsolver") {

TEST_CASE("residual vanishes at the target pose") {
  const PlatformConfig cfg = default_config();
  Philox rng(41, 0);
  for (int i = 0; i < 100; ++i) {
    const Pose T = sample_pose(rng);
    const FkObjective obj = objective_for(cfg, T);
    CHECK(residual(obj, se3_log(T)).cwiseAbs().maxCoeff() < 1e-9);
  }
  FkObjective assembly;
  assembly.cfg = cfg;
  CHECK(residual(assembly, Twist()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("residual matches an inverse-kinematics recomputation") {
  const PlatformConfig cfg = default_config();
  Philox rng(42, 0);
  for (int i = 0; i < 100; ++i) {
    const Pose T = sample_pose(rng);
    const FkObjective obj = objective_for(cfg, T);
    const Twist xi = perturbed_log(rng, sample_pose(rng), 3.0, 0.05);
    const Vec6 r = residual(obj, xi);
    const Vec6 expected =
        inverse_kinematics(cfg, se3_exp(xi)).los - obj.target_los;
    CHECK((r - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("jacobian translation block equals leg unit vectors") {
  const PlatformConfig cfg = default_config();
  // At a zero-rotation twist the translation block q1..q3 moves the
  // platform directly, so column j is the j-th component of each leg's
  // unit vector.
  Twist xi;
  xi.xi << 5.0, -3.0, 7.0, 0.0, 0.0, 0.0;
  FkObjective obj;
  obj.cfg = cfg;
  const Mat6 j = jacobian(obj, xi);
  const Pose T = se3_exp(xi);
  for (int s = 0; s < 6; ++s) {
    const Vec3 u =
        (T.apply(cfg.leg_platform(s)) - cfg.leg_base(s)).normalized();
    for (int c = 0; c < 3; ++c) {
      CHECK(j(s, c) == doctest::Approx(u[c]).epsilon(1e-6));
    }
  }
}

TEST_CASE("jacobian at assembly respects the 120 deg symmetry") {
  const PlatformConfig cfg = default_config();
  FkObjective obj;
  obj.cfg = cfg;
  const Mat6 j = jacobian(obj, Twist());

  // Rotating by 120 deg about z advances every leg index by two; the
  // rows correspond through the block rotation of the twist coordinates.
  const Mat3 q = Rotation::rot_z(2.0 * EIGEN_PI / 3.0).matrix();
  Mat6 block = Mat6::Zero();
  block.topLeftCorner<3, 3>() = q;
  block.bottomRightCorner<3, 3>() = q;
  const std::array<int, 6> sigma = {2, 3, 4, 5, 0, 1};
  for (int s = 0; s < 6; ++s) {
    const Vec6 mapped = block.transpose() * j.row(s).transpose();
    CHECK((j.row(sigma[s]).transpose() - mapped).cwiseAbs().maxCoeff() <
          1e-6);
  }

  // Row norms are invariant as a multiset.
  std::vector<double> norms;
  for (int s = 0; s < 6; ++s) norms.push_back(j.row(s).norm());
  std::vector<double> rotated = norms;
  std::sort(norms.begin(), norms.end());
  std::sort(rotated.begin(), rotated.end());
  for (int s = 0; s < 6; ++s) {
    CHECK(norms[s] == doctest::Approx(rotated[s]).epsilon(1e-9));
  }
}

TEST_CASE("jacobian is stable under step halving") {
  const PlatformConfig cfg = default_config();
  Philox rng(43, 0);
  const Pose T = sample_pose(rng);
  const FkObjective obj = objective_for(cfg, T);
  const Twist xi = se3_log(T);
  const Mat6 j1 = jacobian(obj, xi, 1e-6);
  const Mat6 j2 = jacobian(obj, xi, 2e-6);
  CHECK((j1 - j2).norm() / j1.norm() < 1e-6);
}

TEST_CASE("refine from the exact solution stops immediately") {
  const PlatformConfig cfg = default_config();
  Philox rng(44, 0);
  const Pose T = sample_pose(rng);
  const FkObjective obj = objective_for(cfg, T);
  const SolveReport rep = refine(obj, se3_log(T), 1e-4);
  CHECK(rep.converged);
  CHECK(rep.outer_iterations == 1);
  CHECK(rep.final_step_norm < 1e-8);
}

TEST_CASE("refine converges fast from nearby starts") {
  const PlatformConfig cfg = default_config();
  Philox rng(45, 0);
  int from_thousand = 0;
  for (int i = 0; i < 1000; ++i) {
    const Pose T = sample_pose(rng);
    const FkObjective obj = objective_for(cfg, T);
    const Twist xi0 = perturbed_log(rng, T, 1.0, EIGEN_PI / 180.0);
    const SolveReport rep = refine(obj, xi0, 1e-4);
    if (rep.converged && rep.outer_iterations <= 10) ++from_thousand;
  }
  CHECK(from_thousand == 1000);
}

TEST_CASE("converged solutions satisfy the residual bound") {
  const PlatformConfig cfg = default_config();
  Philox rng(46, 0);
  for (double gamma : {1e-2, 1e-3, 1e-4}) {
    for (int i = 0; i < 100; ++i) {
      const Pose T = sample_pose(rng);
      const FkObjective obj = objective_for(cfg, T);
      const Twist xi0 = perturbed_log(rng, T, 2.0, 2.0 * EIGEN_PI / 180.0);
      const SolveReport rep = refine(obj, xi0, gamma);
      REQUIRE(rep.converged);
      CHECK(residual(obj, rep.xi_final).norm() <= 10.0 * gamma);
    }
  }
}

TEST_CASE("step norms decrease after the first iteration") {
  const PlatformConfig cfg = default_config();
  Philox rng(47, 0);
  int monotone = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    const Pose T = sample_pose(rng);
    const FkObjective obj = objective_for(cfg, T);
    Twist xi = perturbed_log(rng, T, 2.0, 2.0 * EIGEN_PI / 180.0);

    // Replay the iteration manually to observe each step norm.
    std::vector<double> steps;
    bool ok = true;
    for (int z = 0; z < 20; ++z) {
      const Mat6 j = jacobian(obj, xi);
      const PinvState pinv = pseudoinverse(j, 20);
      if (pinv.diverged) {
        ok = false;
        break;
      }
      const Vec6 step = pinv.z * residual(obj, xi);
      xi.xi -= step;
      steps.push_back(step.lpNorm<1>());
      if (steps.back() < 1e-12) break;
    }
    if (!ok || steps.size() < 2) {
      ++monotone;  // converged within one step
      continue;
    }
    bool decreasing = true;
    for (std::size_t k = 1; k + 1 < steps.size(); ++k) {
      if (steps[k + 1] > steps[k]) decreasing = false;
    }
    if (decreasing) ++monotone;
  }
  CHECK(monotone >= trials * 99 / 100);
}

TEST_CASE("median iteration count is monotone in precision") {
  const PlatformConfig cfg = default_config();
  Philox rng(48, 0);
  std::vector<Pose> poses;
  std::vector<Twist> inits;
  for (int i = 0; i < 200; ++i) {
    poses.push_back(sample_pose(rng));
    inits.push_back(perturbed_log(rng, poses.back(), 2.0,
                                  2.0 * EIGEN_PI / 180.0));
  }
  auto median_iterations = [&](double gamma) {
    std::vector<int> counts;
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const FkObjective obj = objective_for(cfg, poses[i]);
      const SolveReport rep = refine(obj, inits[i], gamma);
      REQUIRE(rep.converged);
      counts.push_back(rep.outer_iterations);
    }
    std::sort(counts.begin(), counts.end());
    return counts[(counts.size() - 1) / 2];
  };
  const int m2 = median_iterations(1e-2);
  const int m3 = median_iterations(1e-3);
  const int m4 = median_iterations(1e-4);
  CHECK(m2 <= m3);
  CHECK(m3 <= m4);
}

TEST_CASE("singular geometry sets the flag") {
  const PlatformConfig cfg = singular_config();
  FkObjective obj;
  obj.cfg = cfg;
  const SolveReport rep = refine(obj, Twist(), 1e-4);
  CHECK(rep.singular_flag);
  CHECK_FALSE(rep.converged);
}

TEST_CASE("refine is deterministic") {
  const PlatformConfig cfg = default_config();
  Philox rng(49, 0);
  const Pose T = sample_pose(rng);
  const FkObjective obj = objective_for(cfg, T);
  const Twist xi0 = perturbed_log(rng, T, 2.0, 0.02);
  const SolveReport a = refine(obj, xi0, 1e-4);
  const SolveReport b = refine(obj, xi0, 1e-4);
  CHECK((a.xi_final.xi - b.xi_final.xi).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.outer_iterations == b.outer_iterations);
  CHECK(a.final_step_norm == b.final_step_norm);
}

TEST_CASE("refine_batch equals element-wise refine and is order-equivariant") {
  const PlatformConfig cfg = default_config();
  Philox rng(50, 0);
  std::vector<FkObjective> objs;
  std::vector<Twist> inits;
  for (int i = 0; i < 64; ++i) {
    const Pose T = sample_pose(rng);
    objs.push_back(objective_for(cfg, T));
    inits.push_back(perturbed_log(rng, T, 2.0, 0.02));
  }

  const std::vector<SolveReport> batch = refine_batch(objs, inits, 1e-4, 100,
                                                      20, 4);
  for (std::size_t i = 0; i < objs.size(); ++i) {
    const SolveReport single = refine(objs[i], inits[i], 1e-4);
    CHECK((batch[i].xi_final.xi - single.xi_final.xi).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(batch[i].outer_iterations == single.outer_iterations);
  }

  // Shuffled input order returns shuffled identical outputs.
  std::vector<std::size_t> perm(objs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.next_below(i)]);
  }
  std::vector<FkObjective> shuffled_objs;
  std::vector<Twist> shuffled_inits;
  for (std::size_t i : perm) {
    shuffled_objs.push_back(objs[i]);
    shuffled_inits.push_back(inits[i]);
  }
  const std::vector<SolveReport> shuffled =
      refine_batch(shuffled_objs, shuffled_inits, 1e-4, 100, 20, 3);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK((shuffled[i].xi_final.xi - batch[perm[i]].xi_final.xi)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }

  // A single-entry batch equals refine exactly.
  const std::vector<SolveReport> one =
      refine_batch({objs[0]}, {inits[0]}, 1e-4);
  CHECK((one[0].xi_final.xi - refine(objs[0], inits[0], 1e-4).xi_final.xi)
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("argument validation") {
  const PlatformConfig cfg = default_config();
  FkObjective obj;
  obj.cfg = cfg;
  CHECK_THROWS_AS((void)refine(obj, Twist(), 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)jacobian(obj, Twist(), 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)refine_batch({obj}, {}, 1e-4), std::invalid_argument);
}

}  // TEST_SUITE
