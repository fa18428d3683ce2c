#pragma once

#include <vector>

#include "so3dist/distributions.hpp"

namespace so3dist {

struct NoProgress : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class InitKind { Zero, SpreadMatched, Explicit };
enum class StopReason { GradientTolerance, MaxIterations, StepFloor };

struct FitConfig {
    So3Kind kind = So3Kind::RotationLaplace;
    int level = 3;
    double step = 1.0;
    int max_iterations = 300;
    double tolerance = 1e-4;
    InitKind init = InitKind::SpreadMatched;
    Mat3 init_a = Mat3::Zero();
};

struct FitReport {
    Mat3 final_a = Mat3::Zero();
    std::vector<double> nll;  // one entry per accepted iterate, non-increasing
    double gradient_norm = 0.0;
    Mat3 mode = Mat3::Identity();
    bool converged = false;
    StopReason stop = StopReason::MaxIterations;
    int iterations = 0;
    bool degenerate_svd_seen = false;
};

struct NllGradient {
    double nll = 0.0;
    Mat3 gradient = Mat3::Zero();
    bool degenerate_svd = false;  // s2 - |s3| < 1e-7; d tr(S)/dA fell back to FD
};

NllGradient nll_value_and_gradient(So3Kind kind, const So3Param& param,
                                   const std::vector<Mat3>& observations,
                                   const So3Grid& grid);
Mat3 nll_gradient(So3Kind kind, const So3Param& param,
                  const std::vector<Mat3>& observations, const So3Grid& grid);

// Gradient descent with backtracking: halve the step on an NLL increase, grow
// by 1.1x on success capped at the initial step. Throws NoProgress only if no
// improving step exists at the very start.
FitReport fit_mle(const std::vector<Mat3>& observations, const FitConfig& config,
                  const So3Grid& grid);
FitReport fit_mle(const std::vector<Mat3>& observations, const FitConfig& config);

struct GradientProfilePoint {
    double error_degrees = 0.0;
    double gradient_norm = 0.0;
};

// Per-observation (geodesic error to the mode in degrees, Frobenius norm of
// that observation's full NLL gradient, normalization term included).
std::vector<GradientProfilePoint> gradient_magnitude_profile(
    So3Kind kind, const So3Param& param, const std::vector<Mat3>& observations,
    const So3Grid& grid);

}  // namespace so3dist
