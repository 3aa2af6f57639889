#include "stewart/hyperpinv.hpp"

namespace stewart {

namespace {
constexpr double kStallFloor = 1e-6;
constexpr int kStallLimit = 5;
}  // namespace

Mat6 init_z0(const Mat6& j) {
  // |J|_1: max absolute column sum; |J|_inf: max absolute row sum.
  const double norm1 = j.cwiseAbs().colwise().sum().maxCoeff();
  const double norm_inf = j.cwiseAbs().rowwise().sum().maxCoeff();
  if (norm1 == 0.0 || norm_inf == 0.0) {
    throw ZeroMatrixError();
  }
  return j.transpose() / (norm1 * norm_inf);
}

Mat6 hyperpower_step(const Mat6& j, const Mat6& z) {
  static const Mat6 identity = Mat6::Identity();
  const Mat6 y = j * z;
  const Mat6 inner = y * (7.0 * identity - y);
  const Mat6 middle = y * (15.0 * identity - inner);
  return 0.25 * z * (13.0 * identity - middle);
}

PinvState pseudoinverse(const Mat6& j, int f_max) {
  PinvState state;
  state.z = init_z0(j);

  double prev_residual = (Mat6::Identity() - j * state.z).norm();
  int stalled = 0;
  for (int f = 0; f < f_max; ++f) {
    state.z = hyperpower_step(j, state.z);
    state.iterations = f + 1;
    state.residual = (Mat6::Identity() - j * state.z).norm();
    if (state.residual > kStallFloor &&
        state.residual >= prev_residual * (1.0 - 1e-9)) {
      if (++stalled >= kStallLimit) {
        state.diverged = true;
        return state;
      }
    } else {
      stalled = 0;
    }
    prev_residual = state.residual;
  }
  state.diverged = !(state.residual < 1.0);
  return state;
}

}  // namespace stewart
