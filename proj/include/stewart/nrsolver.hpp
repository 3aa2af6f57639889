#pragma once

#include <vector>

#include "stewart/hyperpinv.hpp"
#include "stewart/platform.hpp"

namespace stewart {

/// Forward-kinematics root-finding problem: find the pose whose leg
/// displacements match target_los. The residual is expressed on twist
/// coordinates, F(xi) = IK(exp(xi)) - l0 - target_los.
struct FkObjective {
  PlatformConfig cfg;
  Vec6 target_los = Vec6::Zero();
};

struct SolveReport {
  Twist xi_final;
  bool converged = false;
  int outer_iterations = 0;
  double final_step_norm = 0.0;  // l1 norm of the last twist update
  bool singular_flag = false;    // pseudoinverse diverged at some iterate
};

/// F(xi): per-leg length error (mm) at the pose exp(xi).
Vec6 residual(const FkObjective& obj, const Twist& xi);

/// Central finite-difference Jacobian dF/dxi, column j from
/// (F(xi + h e_j) - F(xi - h e_j)) / (2h). Step h is in mm for the
/// translation block and rad for the rotation block.
Mat6 jacobian(const FkObjective& obj, const Twist& xi, double h = 1e-6);

/// Newton-Raphson refinement xi <- xi - Z F(xi) with the hyperpower
/// pseudoinverse Z. Stops when the l1 norm of the twist update (mm and
/// rad summed; units are heterogeneous by construction) drops below
/// gamma, or after z_max iterations, or when the pseudoinverse reports
/// divergence (singular_flag).
SolveReport refine(const FkObjective& obj, const Twist& xi0, double gamma,
                   int z_max = 100, int f_max = 20);

/// Element-wise refine over independent problems, fanned out across
/// worker threads. Results are ordered by input index and are identical
/// to sequential refine calls. jobs = 0 picks the hardware thread count.
std::vector<SolveReport> refine_batch(const std::vector<FkObjective>& objs,
                                      const std::vector<Twist>& xi0s,
                                      double gamma, int z_max = 100,
                                      int f_max = 20, int jobs = 0);

}  // namespace stewart
