#include "so3dist/fit.hpp"

#include <cmath>

namespace so3dist {

namespace {

constexpr double kStepFloor = 1e-12;
constexpr double kDegenerateGap = 1e-7;

GridFlat flatten(const std::vector<Mat3>& rs) {
    GridFlat flat(rs.size(), 9);
    for (std::size_t i = 0; i < rs.size(); ++i)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) flat(i, 3 * a + b) = rs[i](a, b);
    return flat;
}

Mat3 unflatten(const Eigen::Matrix<double, 9, 1>& v) {
    Mat3 m;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) m(a, b) = v(3 * a + b);
    return m;
}

double trace_s_of(const Mat3& a) { return proper_svd(a).s.sum(); }

// d tr(S)/dA is U V^T away from singular-value degeneracies; near s2 = |s3|
// the SVD derivative is unreliable, so fall back to central differences.
Mat3 trace_s_gradient(const So3Param& param, bool* degenerate) {
    const Vec3& s = param.svd().s;
    if (s(1) - std::abs(s(2)) >= kDegenerateGap) {
        if (degenerate != nullptr) *degenerate = false;
        return param.mode();
    }
    if (degenerate != nullptr) *degenerate = true;
    const double h = 1e-6;
    Mat3 g;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            Mat3 ap = param.a();
            Mat3 am = param.a();
            ap(i, j) += h;
            am(i, j) -= h;
            g(i, j) = (trace_s_of(ap) - trace_s_of(am)) / (2.0 * h);
        }
    }
    return g;
}

// k(t) = -sqrt(t) - log(t)/2 and its derivative; contributions whose raw
// trace term fell below the clip carry no gradient (subgradient of the max).
double rl_k(double t) { return -std::sqrt(t) - 0.5 * std::log(t); }
double rl_k_prime_masked(double t_raw) {
    if (t_raw <= kTraceClip) return 0.0;
    return -0.5 / std::sqrt(t_raw) - 0.5 / t_raw;
}

struct GradParts {
    double nll;
    Mat3 data;          // mean over observations
    Mat3 dlog_f;        // shared normalization term
    Eigen::VectorXd per_obs_coeff;  // RL: -k'(t_i); MF: unused
    bool degenerate;
    Mat3 dtrace_s;
};

GradParts gradient_parts(So3Kind kind, const So3Param& param,
                         const std::vector<Mat3>& observations,
                         const So3Grid& grid) {
    GradParts out;
    const std::int64_t m = static_cast<std::int64_t>(observations.size());
    const auto obs_flat = flatten(observations);
    const Eigen::VectorXd tr_grid = batch_trace(grid.flat, param.a());
    const Eigen::VectorXd tr_obs = batch_trace(obs_flat, param.a());
    const double log_delta = std::log(grid.delta);

    if (kind == So3Kind::RotationLaplace) {
        out.dtrace_s = trace_s_gradient(param, &out.degenerate);
        const double trs = param.trace_s();
        const Eigen::ArrayXd tg_raw = trs - tr_grid.array();
        const Eigen::ArrayXd kg =
            tg_raw.max(kTraceClip).unaryExpr([](double t) { return rl_k(t); });
        const double mx = kg.maxCoeff();
        const double log_f = mx + std::log((kg - mx).exp().sum()) + log_delta;

        const Eigen::ArrayXd to_raw = trs - tr_obs.array();
        const Eigen::ArrayXd ko =
            to_raw.max(kTraceClip).unaryExpr([](double t) { return rl_k(t); });
        out.nll = -ko.mean() + log_f;

        out.per_obs_coeff =
            (-to_raw.unaryExpr([](double t) { return rl_k_prime_masked(t); }))
                .matrix();
        const Mat3 obs_weighted =
            unflatten(obs_flat.transpose() * out.per_obs_coeff / static_cast<double>(m));
        out.data = (out.per_obs_coeff.sum() / static_cast<double>(m)) * out.dtrace_s - obs_weighted;

        const Eigen::VectorXd w =
            ((kg - log_f).exp() * grid.delta *
             tg_raw.unaryExpr([](double t) { return rl_k_prime_masked(t); }))
                .matrix();
        out.dlog_f = w.sum() * out.dtrace_s - unflatten(grid.flat.transpose() * w);
    } else {
        out.degenerate = false;
        out.dtrace_s = Mat3::Zero();
        const double mx = tr_grid.maxCoeff();
        const double log_f =
            mx + std::log((tr_grid.array() - mx).exp().sum()) + log_delta;
        out.nll = -tr_obs.mean() + log_f;
        out.data = -unflatten(obs_flat.colwise().mean().transpose());
        const Eigen::VectorXd w =
            ((tr_grid.array() - log_f).exp() * grid.delta).matrix();
        out.dlog_f = unflatten(grid.flat.transpose() * w);
    }
    return out;
}

}  // namespace

NllGradient nll_value_and_gradient(So3Kind kind, const So3Param& param,
                                   const std::vector<Mat3>& observations,
                                   const So3Grid& grid) {
    const GradParts parts = gradient_parts(kind, param, observations, grid);
    return {parts.nll, parts.data + parts.dlog_f, parts.degenerate};
}

Mat3 nll_gradient(So3Kind kind, const So3Param& param,
                  const std::vector<Mat3>& observations, const So3Grid& grid) {
    return nll_value_and_gradient(kind, param, observations, grid).gradient;
}

FitReport fit_mle(const std::vector<Mat3>& observations, const FitConfig& config,
                  const So3Grid& grid) {
    if (observations.size() < 2) {
        throw std::invalid_argument("fit_mle: need at least 2 observations");
    }
    Mat3 a;
    switch (config.init) {
        case InitKind::Zero:
            a = Mat3::Zero();
            break;
        case InitKind::Explicit:
            a = config.init_a;
            break;
        case InitKind::SpreadMatched: {
            Mat3 mean = Mat3::Zero();
            for (const Mat3& r : observations) mean += r;
            mean /= static_cast<double>(observations.size());
            const ProperSvd svd = proper_svd(mean);
            a = svd.u * svd.v.transpose();
            break;
        }
    }

    FitReport report;
    NllGradient cur = nll_value_and_gradient(config.kind, So3Param(a),
                                             observations, grid);
    report.nll.push_back(cur.nll);
    report.degenerate_svd_seen = cur.degenerate_svd;
    double step = config.step;
    bool any_progress = false;
    report.stop = StopReason::MaxIterations;

    int it = 0;
    for (; it < config.max_iterations; ++it) {
        if (cur.gradient.norm() <= config.tolerance) {
            report.stop = StopReason::GradientTolerance;
            break;
        }
        bool accepted = false;
        while (step >= kStepFloor) {
            const Mat3 candidate = a - step * cur.gradient;
            const NllGradient next = nll_value_and_gradient(
                config.kind, So3Param(candidate), observations, grid);
            if (next.nll <= cur.nll) {
                a = candidate;
                cur = next;
                report.nll.push_back(cur.nll);
                report.degenerate_svd_seen |= cur.degenerate_svd;
                step = std::min(step * 1.1, config.step);
                accepted = true;
                any_progress = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!any_progress) {
                throw NoProgress("fit_mle: no improving step from the start");
            }
            report.stop = StopReason::StepFloor;
            break;
        }
    }

    report.final_a = a;
    report.gradient_norm = cur.gradient.norm();
    report.mode = So3Param(a).mode();
    report.converged = report.stop == StopReason::GradientTolerance;
    report.iterations = it;
    return report;
}

FitReport fit_mle(const std::vector<Mat3>& observations, const FitConfig& config) {
    return fit_mle(observations, config, *shared_so3_grid(config.level));
}

std::vector<GradientProfilePoint> gradient_magnitude_profile(
    So3Kind kind, const So3Param& param, const std::vector<Mat3>& observations,
    const So3Grid& grid) {
    const GradParts parts = gradient_parts(kind, param, observations, grid);
    const Mat3 center = param.mode();
    std::vector<GradientProfilePoint> out;
    out.reserve(observations.size());
    for (std::size_t i = 0; i < observations.size(); ++i) {
        Mat3 g;
        if (kind == So3Kind::RotationLaplace) {
            g = parts.per_obs_coeff(i) * (parts.dtrace_s - observations[i]) +
                parts.dlog_f;
        } else {
            g = -observations[i] + parts.dlog_f;
        }
        out.push_back({geodesic_distance(center, observations[i]) * 180.0 / M_PI,
                       g.norm()});
    }
    return out;
}

}  // namespace so3dist
