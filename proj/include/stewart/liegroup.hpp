#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <stdexcept>

namespace stewart {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Thrown by the SE(3)/SO(3) log maps when the rotation angle is within
/// 1e-6 rad of pi, where the log is not uniquely recoverable at full
/// precision. Callers re-anchor or reject the sample.
class NearPiSingularity : public std::runtime_error {
 public:
  explicit NearPiSingularity(double angle)
      : std::runtime_error("rotation angle too close to pi for log map"),
        angle_(angle) {}
  double angle() const { return angle_; }

 private:
  double angle_;
};

/// Rotation matrix in SO(3). Construction goes through factories that
/// either produce an exactly orthonormal matrix or validate/project the
/// input, so a held matrix always satisfies |R R^T - I|_F <= 1e-9 and
/// det(R) = 1 within the same tolerance.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Validates orthonormality within 1e-9; throws std::invalid_argument
  /// otherwise.
  static Rotation from_matrix(const Mat3& m);

  /// Projects an arbitrary matrix onto SO(3) (nearest in Frobenius norm).
  static Rotation project(const Mat3& m);

  static Rotation rot_x(double angle);
  static Rotation rot_y(double angle);
  static Rotation rot_z(double angle);

  const Mat3& matrix() const { return m_; }
  Rotation transposed() const { return Rotation(m_.transpose(), Unchecked{}); }
  Rotation operator*(const Rotation& o) const {
    return Rotation(m_ * o.m_, Unchecked{});
  }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  /// Rotation angle in [0, pi].
  double angle() const;

  bool is_approx(const Rotation& o, double tol = 1e-12) const {
    return (m_ - o.m_).norm() <= tol;
  }

 private:
  struct Unchecked {};
  Rotation(const Mat3& m, Unchecked) : m_(m) {}
  Mat3 m_;

  friend Rotation so3_exp(const Vec3&);
  friend Rotation euler_to_rotation(double, double, double);
  friend Rotation quaternion_to_rotation(const Vec4&);
  friend Rotation svd_orthogonalize(const struct NineDRotation&, bool*);
};

/// Rigid transform: x_A = r * x_B + t. Translation in mm.
struct Pose {
  Rotation r;
  Vec3 t = Vec3::Zero();

  /// 4x4 homogeneous form, bottom row (0 0 0 1).
  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = r.matrix();
    m.topRightCorner<3, 1>() = t;
    return m;
  }

  Vec3 apply(const Vec3& p) const { return r * p + t; }
};

/// se(3) coordinates of a pose. Component order is fixed project-wide:
/// xi[0..2] is the translation block rho (mm), xi[3..5] the rotation
/// block omega (rad), with exp/log defined so that t = V(omega) * rho.
struct Twist {
  Vec6 xi = Vec6::Zero();

  Twist() = default;
  explicit Twist(const Vec6& v) : xi(v) {}

  Eigen::VectorBlock<Vec6, 3> translation() { return xi.head<3>(); }
  Eigen::VectorBlock<Vec6, 3> rotation() { return xi.tail<3>(); }
  Eigen::VectorBlock<const Vec6, 3> translation() const {
    return xi.head<3>();
  }
  Eigen::VectorBlock<const Vec6, 3> rotation() const { return xi.tail<3>(); }
};

/// Raw 9-component rotation regression output, reshaped row-major to a
/// 3x3 matrix before SVD projection.
struct NineDRotation {
  Vec9 q = Vec9::Zero();

  NineDRotation() = default;
  explicit NineDRotation(const Vec9& v) : q(v) {}

  /// Row-major reshape q -> M.
  Mat3 reshaped() const {
    Mat3 m;
    m << q[0], q[1], q[2], q[3], q[4], q[5], q[6], q[7], q[8];
    return m;
  }

  static NineDRotation from_matrix(const Mat3& m) {
    Vec9 q;
    q << m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0),
        m(2, 1), m(2, 2);
    return NineDRotation(q);
  }
};

Mat3 skew(const Vec3& v);
Vec3 unskew(const Mat3& m);

/// Rodrigues exponential; Taylor branch below |omega| = 1e-8.
Rotation so3_exp(const Vec3& omega);

/// Inverse of so3_exp with |result| in [0, pi). Throws NearPiSingularity
/// for angles >= pi - 1e-6.
Vec3 so3_log(const Rotation& r);

Pose se3_exp(const Twist& xi);
Twist se3_log(const Pose& T);

/// Left Jacobian V(omega) of SO(3) and its inverse (Taylor below 1e-8).
Mat3 so3_left_jacobian(const Vec3& omega);
Mat3 so3_left_jacobian_inverse(const Vec3& omega);

/// Intrinsic X-Y-Z product R_x(alpha) * R_y(beta) * R_z(gamma).
Rotation euler_to_rotation(double alpha, double beta, double gamma);

/// Unit quaternion (w, x, y, z) with w >= 0; when w == 0 the first
/// nonzero vector component is made nonnegative so the representative is
/// canonical.
Vec4 rotation_to_quaternion(const Rotation& r);
Rotation quaternion_to_rotation(const Vec4& q);

/// Special-orthogonal matrix nearest to the row-major reshape of q in
/// Frobenius norm, via SVD with the determinant-corrected middle factor
/// diag(1, 1, det(U V^T)). Always returns a valid Rotation; when the
/// smallest singular value is below 1e-12 the optional flag is set so
/// training code can record the degenerate input.
Rotation svd_orthogonalize(const NineDRotation& q,
                           bool* rank_deficient = nullptr);

/// Bi-invariant distance |log(r1 * r2^T)|_F = sqrt(2) * theta, where
/// theta is the relative rotation angle. The degree views used in
/// reports divide by sqrt(2) first.
double geodesic_distance(const Rotation& r1, const Rotation& r2);

inline double geodesic_to_degrees(double frobenius_value) {
  return frobenius_value / std::sqrt(2.0) * 180.0 / EIGEN_PI;
}

}  // namespace stewart
