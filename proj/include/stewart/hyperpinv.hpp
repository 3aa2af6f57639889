#pragma once

#include "stewart/liegroup.hpp"

namespace stewart {

/// Thrown by init_z0 when the input matrix is identically zero.
class ZeroMatrixError : public std::invalid_argument {
 public:
  ZeroMatrixError() : std::invalid_argument("cannot scale a zero matrix") {}
};

/// Result of the fixed-step pseudoinverse iteration. `diverged` is the
/// singularity signal consumed by the solver: it is raised when the
/// residual |I - J Z|_F is still >= 1 after the final step, or when it
/// stalls above 1e-6 for five consecutive steps (rank-deficient or
/// severely ill-conditioned input).
struct PinvState {
  Mat6 z = Mat6::Zero();
  double residual = 0.0;
  int iterations = 0;
  bool diverged = false;
};

/// Scaled-transpose starting iterate Z0 = J^T / (|J|_1 |J|_inf). The
/// scaling puts every eigenvalue of J Z0 in (0, 1], so the spectral
/// radius of I - J Z0 is below one whenever J is nonsingular, which is
/// the convergence condition of the iteration.
Mat6 init_z0(const Mat6& j);

/// One iteration Z' = 1/4 Z (13 I - J Z (15 I - J Z (7 I - J Z))),
/// evaluated in exactly this Horner nesting: four matrix products.
Mat6 hyperpower_step(const Mat6& j, const Mat6& z);

/// Runs f_max hyperpower steps from init_z0 and reports the final
/// iterate with its residual. f_max = 20 covers condition numbers up to
/// roughly 1e4 at full double precision; raise f_max for worse
/// conditioning.
PinvState pseudoinverse(const Mat6& j, int f_max);

}  // namespace stewart
