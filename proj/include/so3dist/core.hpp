#pragma once

#include <Eigen/Dense>
#include <random>
#include <stdexcept>

namespace so3dist {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Rng = std::mt19937_64;

struct NonSkewInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unit quaternion, scalar first: (w, x, y, z).
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    Vec4 vec() const { return Vec4(w, x, y, z); }
    double norm() const { return vec().norm(); }
    Quat negated() const { return {-w, -x, -y, -z}; }
    Quat conjugate() const { return {w, -x, -y, -z}; }
};

Quat quat_multiply(const Quat& a, const Quat& b);

// A = U diag(s) V^T with det(U) = det(V) = 1; s1 >= s2 >= |s3|, s3 may be
// negative when det(A) < 0.
struct ProperSvd {
    Mat3 u;
    Vec3 s;
    Mat3 v;
};

Mat3 hat(const Vec3& phi);
Vec3 vee(const Mat3& Phi);  // throws NonSkewInput if ||Phi + Phi^T|| > 1e-8

Mat3 exp_map(const Vec3& phi);
// Inverse of exp_map onto {phi : ||phi|| <= pi}. At 180 degrees the axis sign
// is fixed so its first nonzero component is positive.
Vec3 log_map(const Mat3& R);

double geodesic_distance(const Mat3& r1, const Mat3& r2);

Mat3 quat_to_rotmat(const Quat& q);
// Returns the representative with w >= 0; w == 0 ties broken so the first
// nonzero of (x, y, z) is positive.
Quat rotmat_to_quat(const Mat3& R);

ProperSvd proper_svd(const Mat3& a);

Mat3 random_rotation(Rng& rng);
Quat random_quaternion(Rng& rng);

bool is_rotation_matrix(const Mat3& R, double tol = 1e-9);

}  // namespace so3dist
