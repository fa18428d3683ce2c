#pragma once

#include <optional>
#include <vector>

#include "so3dist/core.hpp"
#include "so3dist/grid.hpp"

namespace so3dist {

struct DegenerateConcentration : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SingularAtOrigin : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class So3Kind { RotationLaplace, MatrixFisher };
enum class S3Kind { QuatLaplace, Bingham };

// Trace terms below the clip contribute no gradient (subgradient of the max).
inline constexpr double kTraceClip = 1e-8;

// Unconstrained 3x3 parameter A with its proper SVD cached.
class So3Param {
  public:
    explicit So3Param(const Mat3& a) : a_(a), svd_(proper_svd(a)) {}

    const Mat3& a() const { return a_; }
    const ProperSvd& svd() const { return svd_; }
    double trace_s() const { return svd_.s.sum(); }
    Mat3 mode() const { return svd_.u * svd_.v.transpose(); }

  private:
    Mat3 a_;
    ProperSvd svd_;
};

// (M, Z) with M in O(4) and Z = diag(0, z1, z2, z3), 0 >= z1 >= z2 >= z3.
struct QuatParam {
    Mat4 m = Mat4::Identity();
    Vec4 z = Vec4::Zero();
};

struct TangentCovariance {
    Mat3 sigma;
};

// t = max(1e-8, tr(S - A^T R))
double rl_trace_term(const So3Param& param, const Mat3& R);
// -sqrt(t) - log(t)/2
double rl_log_unnormalized(const So3Param& param, const Mat3& R);
// tr(A^T R)
double mf_log_unnormalized(const So3Param& param, const Mat3& R);

double log_normalization_factor(So3Kind kind, const So3Param& param,
                                const So3Grid& grid);
double normalization_factor(So3Kind kind, const So3Param& param,
                            const So3Grid& grid);

double log_prob(So3Kind kind, const So3Param& param, const Mat3& R,
                const So3Grid& grid);
double nll_loss(So3Kind kind, const So3Param& param, const Mat3& R,
                const So3Grid& grid);

Mat3 mode(So3Kind kind, const So3Param& param);

// RL: 4 V diag(1/(s2+s3), 1/(s1+s3), 1/(s1+s2)) V^T; MF: same without the 4.
TangentCovariance tangent_covariance(So3Kind kind, const So3Param& param);

// Multivariate Laplace on R^3: p(x) = exp(-sqrt(2 x^T Sigma^-1 x)) /
// (2 pi sqrt(x^T Sigma^-1 x det Sigma)).  The normalizer follows from the
// modified-Bessel closed form K_{1/2}(r) = sqrt(pi/(2r)) e^{-r}: in whitened
// coordinates the kernel integral is 4 pi int_0^inf r e^{-sqrt(2) r} dr = 2 pi.
double tangent_laplace_log_density(const Vec3& phi, const TangentCovariance& cov);
double tangent_laplace_kernel(const Vec3& phi, const TangentCovariance& cov);

QuatParam ql_from_rl(const So3Param& param);

// t = max(1e-8, -q^T M Z M^T q); returns -sqrt(t) - log(t)/2
double ql_log_unnormalized(const QuatParam& param, const Quat& q);
// q^T M Z M^T q
double bingham_log_unnormalized(const QuatParam& param, const Quat& q);

double s3_log_normalization_factor(S3Kind kind, const QuatParam& param,
                                   const S3Grid& grid);
double s3_normalization_factor(S3Kind kind, const QuatParam& param,
                               const S3Grid& grid);
double s3_log_prob(S3Kind kind, const QuatParam& param, const Quat& q,
                   const S3Grid& grid);

double entropy(So3Kind kind, const So3Param& param, const So3Grid& grid);

// Categorical draw over grid cells weighted by p_i * dR, jittered inside the
// cell by exp_map of a uniform tangent vector of norm <= cell radius.
std::vector<Mat3> sample(So3Kind kind, const So3Param& param,
                         const So3Grid& grid, Rng& rng, int n);

// phi = sqrt(W) L g with W ~ Exp(1), g standard normal, L L^T = Sigma, so
// Cov(phi) = Sigma; returns mode_R * exp_map(phi), redrawing ||phi|| >= pi.
std::vector<Mat3> tangent_sample(const So3Param& param, const Mat3& mode_R,
                                 Rng& rng, int n);
Vec3 tangent_laplace_draw(const Mat3& sigma_chol, Rng& rng);

// Batched helpers shared with the fit module: log unnormalized density of
// every grid row for tr_ar = flat * vec(A).
Eigen::VectorXd batch_trace(const GridFlat& flat, const Mat3& a);

}  // namespace so3dist
