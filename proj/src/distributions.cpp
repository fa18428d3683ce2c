#include "so3dist/distributions.hpp"

#include <cmath>

namespace so3dist {

namespace {

double log_sum_exp_weighted(const Eigen::VectorXd& k, double log_weight) {
    const double m = k.maxCoeff();
    return m + std::log((k.array() - m).exp().sum()) + log_weight;
}

double clipped(double t_raw) { return std::max(kTraceClip, t_raw); }

// log of exp(-sqrt(t))/sqrt(t)
double rl_kernel_log(double t) { return -std::sqrt(t) - 0.5 * std::log(t); }

}  // namespace

Eigen::VectorXd batch_trace(const GridFlat& flat, const Mat3& a) {
    Eigen::Matrix<double, 9, 1> va;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) va(3 * i + j) = a(i, j);
    return flat * va;
}

double rl_trace_term(const So3Param& param, const Mat3& R) {
    return clipped(param.trace_s() - (param.a().transpose() * R).trace());
}

double rl_log_unnormalized(const So3Param& param, const Mat3& R) {
    return rl_kernel_log(rl_trace_term(param, R));
}

double mf_log_unnormalized(const So3Param& param, const Mat3& R) {
    return (param.a().transpose() * R).trace();
}

double log_normalization_factor(So3Kind kind, const So3Param& param,
                                const So3Grid& grid) {
    const Eigen::VectorXd tr = batch_trace(grid.flat, param.a());
    Eigen::VectorXd k;
    if (kind == So3Kind::RotationLaplace) {
        const double trs = param.trace_s();
        k = (trs - tr.array())
                .max(kTraceClip)
                .unaryExpr([](double t) { return rl_kernel_log(t); })
                .matrix();
    } else {
        k = tr;
    }
    return log_sum_exp_weighted(k, std::log(grid.delta));
}

double normalization_factor(So3Kind kind, const So3Param& param,
                            const So3Grid& grid) {
    return std::exp(log_normalization_factor(kind, param, grid));
}

double log_prob(So3Kind kind, const So3Param& param, const Mat3& R,
                const So3Grid& grid) {
    const double k = kind == So3Kind::RotationLaplace
                         ? rl_log_unnormalized(param, R)
                         : mf_log_unnormalized(param, R);
    return k - log_normalization_factor(kind, param, grid);
}

double nll_loss(So3Kind kind, const So3Param& param, const Mat3& R,
                const So3Grid& grid) {
    return -log_prob(kind, param, R, grid);
}

Mat3 mode(So3Kind, const So3Param& param) { return param.mode(); }

TangentCovariance tangent_covariance(So3Kind kind, const So3Param& param) {
    const Vec3& s = param.svd().s;
    const Vec3 pairs(s(1) + s(2), s(0) + s(2), s(0) + s(1));
    if (pairs.minCoeff() <= 1e-12) {
        throw DegenerateConcentration("tangent_covariance: s_i + s_j <= 1e-12");
    }
    const double scale = kind == So3Kind::RotationLaplace ? 4.0 : 1.0;
    const Mat3& v = param.svd().v;
    return {scale * v * pairs.cwiseInverse().asDiagonal() * v.transpose()};
}

double tangent_laplace_kernel(const Vec3& phi, const TangentCovariance& cov) {
    if (phi.norm() < 1e-12) {
        throw SingularAtOrigin("tangent_laplace: density is singular at phi = 0");
    }
    const double q2 = phi.dot(cov.sigma.ldlt().solve(phi));
    return std::exp(-std::sqrt(2.0 * q2)) / std::sqrt(q2);
}

double tangent_laplace_log_density(const Vec3& phi, const TangentCovariance& cov) {
    if (phi.norm() < 1e-12) {
        throw SingularAtOrigin("tangent_laplace: density is singular at phi = 0");
    }
    const double q2 = phi.dot(cov.sigma.ldlt().solve(phi));
    const double log_norm =
        std::log(2.0 * M_PI) + 0.5 * std::log(cov.sigma.determinant());
    return -std::sqrt(2.0 * q2) - 0.5 * std::log(q2) - log_norm;
}

namespace {

// Matrices of quaternion multiplication on (w,x,y,z) coefficients:
// a (x) b = left_mult(a) * b = right_mult(b) * a.
Mat4 left_mult(const Quat& a) {
    Mat4 m;
    m << a.w, -a.x, -a.y, -a.z,
         a.x,  a.w, -a.z,  a.y,
         a.y,  a.z,  a.w, -a.x,
         a.z, -a.y,  a.x,  a.w;
    return m;
}

Mat4 right_mult(const Quat& b) {
    Mat4 m;
    m << b.w, -b.x, -b.y, -b.z,
         b.x,  b.w,  b.z, -b.y,
         b.y, -b.z,  b.w,  b.x,
         b.z,  b.y, -b.x,  b.w;
    return m;
}

}  // namespace

QuatParam ql_from_rl(const So3Param& param) {
    const Quat u = rotmat_to_quat(param.svd().u);
    const Quat v = rotmat_to_quat(param.svd().v);
    QuatParam out;
    // M^T maps q to conj(u) (x) q (x) v, which sends the mode to (1,0,0,0).
    out.m = (left_mult(u.conjugate()) * right_mult(v)).transpose();
    const Vec3& s = param.svd().s;
    out.z = Vec4(0.0, -2.0 * (s(1) + s(2)), -2.0 * (s(0) + s(2)),
                 -2.0 * (s(0) + s(1)));
    return out;
}

namespace {

double quat_quadratic_form(const QuatParam& param, const Quat& q) {
    const Vec4 p = param.m.transpose() * q.vec();
    return p.dot(param.z.asDiagonal() * p);
}

}  // namespace

double ql_log_unnormalized(const QuatParam& param, const Quat& q) {
    return rl_kernel_log(clipped(-quat_quadratic_form(param, q)));
}

double bingham_log_unnormalized(const QuatParam& param, const Quat& q) {
    return quat_quadratic_form(param, q);
}

double s3_log_normalization_factor(S3Kind kind, const QuatParam& param,
                                   const S3Grid& grid) {
    Eigen::VectorXd k(grid.size());
    for (std::int64_t i = 0; i < grid.size(); ++i) {
        const Quat q = grid.quaternion(i);
        k(i) = kind == S3Kind::QuatLaplace ? ql_log_unnormalized(param, q)
                                           : bingham_log_unnormalized(param, q);
    }
    return log_sum_exp_weighted(k, std::log(grid.delta));
}

double s3_normalization_factor(S3Kind kind, const QuatParam& param,
                               const S3Grid& grid) {
    return std::exp(s3_log_normalization_factor(kind, param, grid));
}

double s3_log_prob(S3Kind kind, const QuatParam& param, const Quat& q,
                   const S3Grid& grid) {
    const double k = kind == S3Kind::QuatLaplace
                         ? ql_log_unnormalized(param, q)
                         : bingham_log_unnormalized(param, q);
    return k - s3_log_normalization_factor(kind, param, grid);
}

double entropy(So3Kind kind, const So3Param& param, const So3Grid& grid) {
    const Eigen::VectorXd tr = batch_trace(grid.flat, param.a());
    Eigen::VectorXd k;
    if (kind == So3Kind::RotationLaplace) {
        const double trs = param.trace_s();
        k = (trs - tr.array())
                .max(kTraceClip)
                .unaryExpr([](double t) { return rl_kernel_log(t); })
                .matrix();
    } else {
        k = tr;
    }
    const double log_f = log_sum_exp_weighted(k, std::log(grid.delta));
    const Eigen::ArrayXd log_p = k.array() - log_f;
    return -(log_p.exp() * log_p).sum() * grid.delta;
}

std::vector<Mat3> sample(So3Kind kind, const So3Param& param,
                         const So3Grid& grid, Rng& rng, int n) {
    const Eigen::VectorXd tr = batch_trace(grid.flat, param.a());
    Eigen::ArrayXd k;
    if (kind == So3Kind::RotationLaplace) {
        const double trs = param.trace_s();
        k = (trs - tr.array())
                .max(kTraceClip)
                .unaryExpr([](double t) { return rl_kernel_log(t); });
    } else {
        k = tr.array();
    }
    // Cell probabilities p_i * dR, computed stably; dR cancels in the draw.
    const Eigen::ArrayXd w = (k - k.maxCoeff()).exp();
    std::discrete_distribution<std::int64_t> cell(w.data(), w.data() + w.size());
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double radius = grid.cell_radius();

    std::vector<Mat3> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const Mat3 center = grid.rotation(cell(rng));
        Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
        while (dir.norm() < 1e-12) dir = Vec3(gauss(rng), gauss(rng), gauss(rng));
        dir.normalize();
        const double r = radius * std::cbrt(unif(rng));  // uniform in the ball
        out.push_back(center * exp_map(r * dir));
    }
    return out;
}

Vec3 tangent_laplace_draw(const Mat3& sigma_chol, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    const Vec3 g(gauss(rng), gauss(rng), gauss(rng));
    return std::sqrt(expo(rng)) * (sigma_chol * g);
}

std::vector<Mat3> tangent_sample(const So3Param& param, const Mat3& mode_R,
                                 Rng& rng, int n) {
    const TangentCovariance cov =
        tangent_covariance(So3Kind::RotationLaplace, param);
    const Mat3 chol = Eigen::LLT<Mat3>(cov.sigma).matrixL();
    std::vector<Mat3> out;
    out.reserve(n);
    while (static_cast<int>(out.size()) < n) {
        const Vec3 phi = tangent_laplace_draw(chol, rng);
        if (phi.norm() >= M_PI) continue;
        out.push_back(mode_R * exp_map(phi));
    }
    return out;
}

}  // namespace so3dist
