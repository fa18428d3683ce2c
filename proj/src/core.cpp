#include "so3dist/core.hpp"

#include <cmath>

namespace so3dist {

Mat3 hat(const Vec3& phi) {
    Mat3 m;
    m << 0.0, -phi.z(), phi.y(),
         phi.z(), 0.0, -phi.x(),
         -phi.y(), phi.x(), 0.0;
    return m;
}

Vec3 vee(const Mat3& Phi) {
    if ((Phi + Phi.transpose()).norm() > 1e-8) {
        throw NonSkewInput("vee: input is not antisymmetric");
    }
    return Vec3(Phi(2, 1), Phi(0, 2), Phi(1, 0));
}

Mat3 exp_map(const Vec3& phi) {
    const double theta = phi.norm();
    const Mat3 k = hat(phi);
    double a, b;  // R = I + a K + b K^2
    if (theta < 1e-6) {
        const double t2 = theta * theta;
        a = 1.0 - t2 / 6.0;
        b = 0.5 - t2 / 24.0;
    } else {
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / (theta * theta);
    }
    return Mat3::Identity() + a * k + b * (k * k);
}

Quat quat_multiply(const Quat& a, const Quat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Mat3 quat_to_rotmat(const Quat& q) {
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

namespace {

Quat normalize_hemisphere(Quat q) {
    const double n = q.norm();
    q.w /= n; q.x /= n; q.y /= n; q.z /= n;
    if (q.w < 0.0) return q.negated();
    if (q.w == 0.0) {
        if (q.x < 0.0) return q.negated();
        if (q.x == 0.0 && q.y < 0.0) return q.negated();
        if (q.x == 0.0 && q.y == 0.0 && q.z < 0.0) return q.negated();
    }
    return q;
}

}  // namespace

Quat rotmat_to_quat(const Mat3& R) {
    // Shepperd's method: pick the largest of the four squared components.
    const double tr = R.trace();
    Quat q;
    if (tr >= R(0, 0) && tr >= R(1, 1) && tr >= R(2, 2)) {
        const double s = std::sqrt(tr + 1.0) * 2.0;
        q = {0.25 * s, (R(2, 1) - R(1, 2)) / s, (R(0, 2) - R(2, 0)) / s,
             (R(1, 0) - R(0, 1)) / s};
    } else if (R(0, 0) >= R(1, 1) && R(0, 0) >= R(2, 2)) {
        const double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2.0;
        q = {(R(2, 1) - R(1, 2)) / s, 0.25 * s, (R(0, 1) + R(1, 0)) / s,
             (R(0, 2) + R(2, 0)) / s};
    } else if (R(1, 1) >= R(2, 2)) {
        const double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2.0;
        q = {(R(0, 2) - R(2, 0)) / s, (R(0, 1) + R(1, 0)) / s, 0.25 * s,
             (R(1, 2) + R(2, 1)) / s};
    } else {
        const double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2.0;
        q = {(R(1, 0) - R(0, 1)) / s, (R(0, 2) + R(2, 0)) / s,
             (R(1, 2) + R(2, 1)) / s, 0.25 * s};
    }
    return normalize_hemisphere(q);
}

Vec3 log_map(const Mat3& R) {
    const Quat q = rotmat_to_quat(R);  // w >= 0, so theta in [0, pi]
    const Vec3 v(q.x, q.y, q.z);
    const double vn = v.norm();
    const double theta = 2.0 * std::atan2(vn, q.w);
    if (vn < 1e-9) {
        // theta/sin(theta/2) -> 2 with a vanishing quadratic correction
        return 2.0 * v;
    }
    Vec3 phi = (theta / vn) * v;
    if (M_PI - theta < 1e-6) {
        // at (or within noise of) a half-turn both axis signs describe the
        // same rotation; pick the one whose first nonzero component is positive
        for (int k = 0; k < 3; ++k) {
            if (phi(k) != 0.0) {
                if (phi(k) < 0.0) phi = -phi;
                break;
            }
        }
    }
    return phi;
}

double geodesic_distance(const Mat3& r1, const Mat3& r2) {
    const double c = ((r1.transpose() * r2).trace() - 1.0) / 2.0;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

ProperSvd proper_svd(const Mat3& a) {
    Eigen::JacobiSVD<Mat3> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    Mat3 v = svd.matrixV();
    Vec3 s = svd.singularValues();
    const double du = u.determinant();
    const double dv = v.determinant();
    u.col(2) *= du;
    v.col(2) *= dv;
    s(2) *= du * dv;
    return {u, s, v};
}

Quat random_quaternion(Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Quat q;
    do {
        q = {gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
    } while (q.norm() < 1e-6);
    const double n = q.norm();
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

Mat3 random_rotation(Rng& rng) {
    return quat_to_rotmat(random_quaternion(rng));
}

bool is_rotation_matrix(const Mat3& R, double tol) {
    return (R * R.transpose() - Mat3::Identity()).norm() <= tol &&
           std::abs(R.determinant() - 1.0) <= tol;
}

}  // namespace so3dist
