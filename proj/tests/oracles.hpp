#pragma once

// Test-only reference implementations, kept independent of the library
// code paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "stewart/liegroup.hpp"
#include "stewart/rng.hpp"

namespace oracle {

// Gauss-Jordan inverse with partial pivoting.
inline stewart::Mat6 gauss_jordan_inverse(const stewart::Mat6& a) {
  Eigen::Matrix<double, 6, 12> aug;
  aug.leftCols<6>() = a;
  aug.rightCols<6>() = stewart::Mat6::Identity();
  for (int col = 0; col < 6; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 6; ++r) {
      if (std::abs(aug(r, col)) > std::abs(aug(pivot, col))) pivot = r;
    }
    if (aug(pivot, col) == 0.0) {
      throw std::runtime_error("singular matrix in Gauss-Jordan oracle");
    }
    aug.row(col).swap(aug.row(pivot));
    aug.row(col) /= aug(col, col);
    for (int r = 0; r < 6; ++r) {
      if (r != col) aug.row(r) -= aug(r, col) * aug.row(col);
    }
  }
  return aug.rightCols<6>();
}

// X-Y-Z Euler extraction, valid for |beta| < pi/2.
inline stewart::Vec3 matrix_to_euler(const stewart::Mat3& m) {
  const double beta = std::asin(std::clamp(m(0, 2), -1.0, 1.0));
  const double alpha = std::atan2(-m(1, 2), m(2, 2));
  const double gamma = std::atan2(-m(0, 1), m(0, 0));
  return stewart::Vec3(alpha, beta, gamma);
}

// Axis-aligned rotation factors, assembled entry by entry.
inline stewart::Mat3 euler_product(double a, double b, double g) {
  stewart::Mat3 rx, ry, rz;
  rx << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  ry << std::cos(b), 0, std::sin(b), 0, 1, 0, -std::sin(b), 0, std::cos(b);
  rz << std::cos(g), -std::sin(g), 0, std::sin(g), std::cos(g), 0, 0, 0, 1;
  return rx * ry * rz;
}

// Uniform random rotation via quaternion sampling (Marsaglia).
inline stewart::Mat3 random_rotation(stewart::Philox& rng) {
  double q[4];
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& c : q) {
      c = rng.next_uniform(-1.0, 1.0);
      norm2 += c * c;
    }
  } while (norm2 < 1e-8 || norm2 > 1.0);
  const double inv = 1.0 / std::sqrt(norm2);
  const double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
  stewart::Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

// Random 6x6 matrix with singular values log-uniform in
// [sigma_max / cond, sigma_max].
inline stewart::Mat6 random_matrix_with_condition(stewart::Philox& rng,
                                                  double cond,
                                                  double sigma_max = 1.0) {
  Eigen::MatrixXd g1(6, 6), g2(6, 6);
  for (int c = 0; c < 6; ++c) {
    for (int r = 0; r < 6; ++r) {
      g1(r, c) = rng.next_uniform(-1.0, 1.0);
      g2(r, c) = rng.next_uniform(-1.0, 1.0);
    }
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr1(g1), qr2(g2);
  const Eigen::MatrixXd u = qr1.householderQ();
  const Eigen::MatrixXd v = qr2.householderQ();
  stewart::Vec6 sigma;
  sigma[0] = sigma_max;
  sigma[5] = sigma_max / cond;
  for (int i = 1; i < 5; ++i) {
    const double t = rng.next_uniform(0.0, 1.0);
    sigma[i] = sigma_max * std::pow(1.0 / cond, t);
  }
  return u * sigma.asDiagonal() * v.transpose();
}

}  // namespace oracle
