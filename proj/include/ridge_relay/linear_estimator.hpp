#pragma once

// Targeted ridge estimation for the linear model:
//   argmin ||y - X b||^2 + lambda ||b - b0||^2  =  (X'X + lambda I)^{-1} (X'y + lambda b0)
// plus the sequential update step and exact moment calculators for the
// updated estimator.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ridge_relay/model_core.hpp"

namespace ridge_relay {

struct LinearFit {
    Eigen::VectorXd coefficients;
    double lambda = 0.0;
    Eigen::VectorXd target_used;
    double residual_sse = 0.0;
};

struct MomentReport {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    double sigma_sq = 0.0;
};

/// Closed-form targeted ridge fit. lambda = 0 is allowed only for full column rank X.
LinearFit fit_targeted_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                             const Eigen::VectorXd& target);

/// Weighted average of dense targets; weights must lie on the simplex.
Eigen::VectorXd mix_targets(std::span<const Eigen::VectorXd> targets,
                            std::span<const double> weights);

/// Fit with penalty lambda * sum_g w_g ||b - b0_g||^2; identical to the
/// single-target fit at the weighted-average target.
LinearFit fit_targeted_ridge_mixture(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     double lambda, std::span<const Eigen::VectorXd> targets,
                                     std::span<const double> weights);

/// SSE / (n - df) with df = trace of the ridge hat matrix. Convenience estimate of the
/// noise variance; throws ValidationError when n <= df.
double residual_variance(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                         const Eigen::VectorXd& target);

/// Sequential step: fits the batch with the element-wise assembled target
/// (fallback: the state's init target) and returns the successor state.
EstimatorState update(const EstimatorState& state, const Batch& batch, double lambda,
                      std::optional<SelectionReport> selection = std::nullopt);

/// Same as `update` but with an explicit named target and recorded weights.
EstimatorState update_with_target(const EstimatorState& state, const Batch& batch, double lambda,
                                  const CoefficientVector& target, std::vector<double> weights,
                                  std::optional<SelectionReport> selection = std::nullopt);

/// Moments after t updates on orthonormal designs (X'X = I) with constant lambda, in the
/// commonly quoted closed form: mean = b + r^t (b0 - b), variance = s2 (1 - r^{2t}) I,
/// r = lambda / (1 + lambda).
/// The mean is exact. The variance is not what the recursion produces: unrolling
/// V_t = r^2 V_{t-1} + s2 / (1 + lambda)^2 gives s2 (1 - r^{2t}) / (1 + 2 lambda), which is
/// what exact_moments_general returns on such inputs.
MomentReport exact_moments_orthonormal(const Eigen::VectorXd& beta, const Eigen::VectorXd& beta0,
                                       double lambda, int t, double sigma_sq);

/// Exact mean and covariance of the t-th updated estimate for fixed designs
/// and non-random penalties, in product form. With M_k = lambda_k (X_k'X_k + lambda_k I)^{-1}
/// and P_h = M_t M_{t-1} ... M_h:
///   mean = sum_h (P_{h+1} - P_h) b + P_1 b0
///   cov  = s2 sum_h P_{h+1} A_h^{-1} X_h'X_h A_h^{-1} P_{h+1}'
MomentReport exact_moments_general(std::span<const Eigen::MatrixXd> designs,
                                   std::span<const double> lambdas, const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& beta0, double sigma_sq);

}  // namespace ridge_relay
