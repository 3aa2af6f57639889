#include "stewart/liegroup.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace stewart {

namespace {
constexpr double kTaylorThreshold = 1e-8;
constexpr double kPiMargin = 1e-6;
}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  // clang-format off
  m <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return m;
}

Vec3 unskew(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

Rotation Rotation::from_matrix(const Mat3& m) {
  const double ortho = (m * m.transpose() - Mat3::Identity()).norm();
  if (ortho > 1e-9 || std::abs(m.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument("matrix is not a rotation within tolerance");
  }
  return Rotation(m, Unchecked{});
}

Rotation Rotation::project(const Mat3& m) {
  return svd_orthogonalize(NineDRotation::from_matrix(m));
}

Rotation Rotation::rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return Rotation(m, Unchecked{});
}

Rotation Rotation::rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return Rotation(m, Unchecked{});
}

Rotation Rotation::rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return Rotation(m, Unchecked{});
}

double Rotation::angle() const {
  // atan2 form is well conditioned at both ends of [0, pi].
  const Vec3 v = unskew(m_ - m_.transpose()) * 0.5;
  const double cos_theta = (m_.trace() - 1.0) * 0.5;
  return std::atan2(v.norm(), cos_theta);
}

Rotation so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = skew(omega);
  if (theta < kTaylorThreshold) {
    // R = I + K + K^2/2 with O(theta^3) truncation error.
    return Rotation(Mat3(Mat3::Identity() + k + 0.5 * k * k),
                    Rotation::Unchecked{});
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Rotation(Mat3(Mat3::Identity() + a * k + b * k * k),
                  Rotation::Unchecked{});
}

Vec3 so3_log(const Rotation& r) {
  const Mat3& m = r.matrix();
  const Vec3 v = unskew(m - m.transpose()) * 0.5;  // sin(theta) * axis
  const double cos_theta = (m.trace() - 1.0) * 0.5;
  const double theta = std::atan2(v.norm(), cos_theta);
  if (theta >= EIGEN_PI - kPiMargin) {
    throw NearPiSingularity(theta);
  }
  if (theta < kTaylorThreshold) {
    return v;  // theta/sin(theta) -> 1
  }
  return v * (theta / std::sin(theta));
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = skew(omega);
  if (theta < kTaylorThreshold) {
    return Mat3::Identity() + 0.5 * k + k * k / 6.0;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

Mat3 so3_left_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = skew(omega);
  if (theta < kTaylorThreshold) {
    return Mat3::Identity() - 0.5 * k + k * k / 12.0;
  }
  const double c = 1.0 / (theta * theta) -
                   (1.0 + std::cos(theta)) /
                       (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * k + c * k * k;
}

Pose se3_exp(const Twist& xi) {
  const Vec3 rho = xi.translation();
  const Vec3 omega = xi.rotation();
  Pose T;
  T.r = so3_exp(omega);
  T.t = so3_left_jacobian(omega) * rho;
  return T;
}

Twist se3_log(const Pose& T) {
  const Vec3 omega = so3_log(T.r);
  const Vec3 rho = so3_left_jacobian_inverse(omega) * T.t;
  Twist xi;
  xi.translation() = rho;
  xi.rotation() = omega;
  return xi;
}

Rotation euler_to_rotation(double alpha, double beta, double gamma) {
  return Rotation(Mat3(Rotation::rot_x(alpha).matrix() *
                       Rotation::rot_y(beta).matrix() *
                       Rotation::rot_z(gamma).matrix()),
                  Rotation::Unchecked{});
}

Vec4 rotation_to_quaternion(const Rotation& r) {
  const Eigen::Quaterniond q(r.matrix());
  Vec4 out(q.w(), q.x(), q.y(), q.z());
  // Canonical representative: scalar part nonnegative; on the w == 0
  // great circle, first nonzero vector component nonnegative.
  bool flip = out[0] < 0.0;
  if (out[0] == 0.0) {
    for (int i = 1; i < 4; ++i) {
      if (out[i] != 0.0) {
        flip = out[i] < 0.0;
        break;
      }
    }
  }
  if (flip) out = -out;
  return out / out.norm();
}

Rotation quaternion_to_rotation(const Vec4& q) {
  const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  return Rotation(quat.normalized().toRotationMatrix(),
                  Rotation::Unchecked{});
}

Rotation svd_orthogonalize(const NineDRotation& q, bool* rank_deficient) {
  const Mat3 m = q.reshaped();
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if (rank_deficient != nullptr) {
    *rank_deficient = svd.singularValues()[2] < 1e-12;
  }
  const Vec3 sigma(1.0, 1.0, (u * v.transpose()).determinant());
  const Mat3 r = u * sigma.asDiagonal() * v.transpose();
  return Rotation(r, Rotation::Unchecked{});
}

double geodesic_distance(const Rotation& r1, const Rotation& r2) {
  const Rotation rel = r1 * r2.transposed();
  // |log(R)|_F = sqrt(2) * theta; computed from the angle directly so the
  // value stays defined at and beyond the log-map cutoff.
  return std::sqrt(2.0) * rel.angle();
}

}  // namespace stewart
