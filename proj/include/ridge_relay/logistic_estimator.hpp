#pragma once

// Targeted ridge logistic regression. The estimate is the root of
//   X'(y - mu(b)) - lambda (b - b0) = 0,
// i.e. the maximiser of loglik(b) - (lambda / 2) ||b - b0||^2, found by IRLS
//   b_{k+1} = (X'WX + lambda I)^{-1} (X'WZ + lambda b0)
// with step-halving so the penalised log-likelihood never decreases.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ridge_relay/model_core.hpp"

namespace ridge_relay {

struct IrlsConfig {
    // Max-abs estimating-equation residual. Raised to the rounding level
    // 64 eps (lambda (|b| + |b0|) + max_j sum_i |x_ij|) when that is larger.
    double tol = 1e-8;
    int max_iter = 100;
    int step_halving = 20;  // max halvings per iteration
    double weight_floor = 1e-10;

    void validate() const;
};

struct LogisticFit {
    Eigen::VectorXd coefficients;
    double lambda = 0.0;
    Eigen::VectorXd target_used;
    int iterations = 0;
    double final_gradient_norm = 0.0;
    double loglik = 0.0;  // penalised log-likelihood at the solution
    // Penalised log-likelihood at the start point and after each accepted iteration.
    std::vector<double> objective_trace;
};

/// Numerically stable logistic function.
double logistic(double eta) noexcept;

/// sum_i y_i x_i'b - log(1 + exp(x_i'b)), overflow-safe.
double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& beta);

/// loglik(b) - (lambda / 2) ||b - b0||^2; its gradient is `estimating_equation`.
double penalized_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& beta, double lambda,
                        const Eigen::VectorXd& target);

/// X'(y - mu(b)) - lambda (b - b0).
Eigen::VectorXd estimating_equation(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& beta, double lambda,
                                    const Eigen::VectorXd& target);

/// IRLS from a warm start at the target (or `start` if given).
/// Throws ConvergenceError if the residual is still above tol after max_iter.
LogisticFit irls_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                     const Eigen::VectorXd& target, const IrlsConfig& config = {},
                     const std::optional<Eigen::VectorXd>& start = std::nullopt);

/// Sequential logistic step with the element-wise assembled target.
/// Convergence errors propagate and leave `state` untouched.
EstimatorState update_logistic(const EstimatorState& state, const Batch& batch, double lambda,
                               const IrlsConfig& config = {},
                               std::optional<SelectionReport> selection = std::nullopt);

EstimatorState update_logistic_with_target(const EstimatorState& state, const Batch& batch,
                                           double lambda, const CoefficientVector& target,
                                           std::vector<double> weights,
                                           const IrlsConfig& config = {},
                                           std::optional<SelectionReport> selection = std::nullopt);

}  // namespace ridge_relay
