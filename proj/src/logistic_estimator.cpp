#include "ridge_relay/logistic_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace ridge_relay {
namespace {

void check_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                  double lambda, const Eigen::VectorXd* target) {
    if (X.rows() != y.size()) throw ValidationError("design rows do not match response length");
    if (X.cols() != beta.size()) throw ValidationError("design columns do not match beta length");
    if (target && target->size() != beta.size())
        throw ValidationError("target length does not match beta length");
    if (!std::isfinite(lambda) || lambda < 0.0)
        throw ValidationError("penalty must be finite and non-negative");
    if (!X.allFinite() || !beta.allFinite() || (target && !target->allFinite()))
        throw ValidationError("non-finite input to logistic model");
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0) throw ValidationError("logistic response must be 0 or 1");
}

// log(1 + exp(eta)) without overflow.
double softplus(double eta) noexcept {
    return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double loglik_unchecked(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) total += y[i] * eta[i] - softplus(eta[i]);
    return total;
}

double objective_unchecked(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& beta, double lambda,
                           const Eigen::VectorXd& target) {
    return loglik_unchecked(X, y, beta) - 0.5 * lambda * (beta - target).squaredNorm();
}

Eigen::VectorXd gradient_unchecked(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& beta, double lambda,
                                   const Eigen::VectorXd& target) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd residual(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) residual[i] = y[i] - logistic(eta[i]);
    return X.transpose() * residual - lambda * (beta - target);
}

}  // namespace

void IrlsConfig::validate() const {
    if (!(tol > 0.0)) throw ValidationError("IRLS tolerance must be positive");
    if (max_iter < 1) throw ValidationError("IRLS max_iter must be at least 1");
    if (step_halving < 0) throw ValidationError("IRLS step_halving must be non-negative");
    if (!(weight_floor > 0.0)) throw ValidationError("IRLS weight floor must be positive");
}

double logistic(double eta) noexcept {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& beta) {
    check_inputs(X, y, beta, 0.0, nullptr);
    return loglik_unchecked(X, y, beta);
}

double penalized_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& beta, double lambda,
                        const Eigen::VectorXd& target) {
    check_inputs(X, y, beta, lambda, &target);
    return objective_unchecked(X, y, beta, lambda, target);
}

Eigen::VectorXd estimating_equation(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& beta, double lambda,
                                    const Eigen::VectorXd& target) {
    check_inputs(X, y, beta, lambda, &target);
    return gradient_unchecked(X, y, beta, lambda, target);
}

LogisticFit irls_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                     const Eigen::VectorXd& target, const IrlsConfig& config,
                     const std::optional<Eigen::VectorXd>& start) {
    config.validate();
    Eigen::VectorXd beta = start ? *start : target;
    check_inputs(X, y, beta, lambda, &target);

    const Eigen::Index n = X.rows();
    LogisticFit fit;
    fit.lambda = lambda;
    fit.target_used = target;

    double objective = objective_unchecked(X, y, beta, lambda, target);
    fit.objective_trace.push_back(objective);
    Eigen::VectorXd gradient = gradient_unchecked(X, y, beta, lambda, target);
    double gradient_norm = gradient.lpNorm<Eigen::Infinity>();

    // Evaluating the residual carries rounding of order eps * (lambda |b| + sum |x_ij|);
    // with lambda ~ 1e12 that exceeds any useful absolute tolerance.
    const double column_mass = X.cwiseAbs().colwise().sum().maxCoeff();
    const double target_size = target.size() ? target.lpNorm<Eigen::Infinity>() : 0.0;
    auto tolerance = [&](const Eigen::VectorXd& b) {
        const double b_size = b.size() ? b.lpNorm<Eigen::Infinity>() : 0.0;
        const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                             (lambda * (b_size + target_size) + column_mass);
        return std::max(config.tol, noise);
    };

    int iter = 0;
    while (gradient_norm > tolerance(beta)) {
        if (iter == config.max_iter)
            throw ConvergenceError("IRLS did not converge in " + std::to_string(config.max_iter) +
                                       " iterations (gradient " + std::to_string(gradient_norm) + ")",
                                   beta, gradient_norm, iter);
        ++iter;

        // Newton step on the penalised log-likelihood; beta + step equals the
        // IRLS update (X'WX + lambda I)^{-1}(X'WZ + lambda b0) for the same W.
        const Eigen::VectorXd eta = X * beta;
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mu = logistic(eta[i]);
            w[i] = std::max(mu * (1.0 - mu), config.weight_floor);
        }
        Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
        H.diagonal().array() += lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(H);
        if (llt.info() != Eigen::Success)
            throw SingularityError("X'WX + lambda I is not positive definite");
        const Eigen::VectorXd step = llt.solve(gradient);

        // Changes below rounding level of the objective count as non-decreasing.
        const double slack = 1e-13 * std::max(1.0, std::abs(objective));
        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h <= config.step_halving; ++h, scale *= 0.5) {
            Eigen::VectorXd candidate = beta + scale * step;
            const double candidate_objective = objective_unchecked(X, y, candidate, lambda, target);
            if (candidate_objective >= objective - slack) {
                beta = std::move(candidate);
                objective = candidate_objective;
                accepted = true;
                break;
            }
        }
        if (!accepted)
            throw ConvergenceError("IRLS step-halving failed to increase the objective", beta,
                                   gradient_norm, iter);
        fit.objective_trace.push_back(objective);
        gradient = gradient_unchecked(X, y, beta, lambda, target);
        gradient_norm = gradient.lpNorm<Eigen::Infinity>();
    }

    fit.coefficients = std::move(beta);
    fit.iterations = iter;
    fit.final_gradient_norm = gradient_norm;
    fit.loglik = objective;
    return fit;
}

EstimatorState update_logistic_with_target(const EstimatorState& state, const Batch& batch,
                                           double lambda, const CoefficientVector& target,
                                           std::vector<double> weights, const IrlsConfig& config,
                                           std::optional<SelectionReport> selection) {
    if (batch.family() != Family::logistic || state.family != Family::logistic)
        throw ValidationError("logistic update requires a logistic batch and state");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ValidationError("update penalty must be positive");
    const CovariateRegistry registry = extend_registry(state.registry, batch);
    const Eigen::MatrixXd X = align_batch(batch, registry);
    const Eigen::VectorXd target_dense = target.to_dense(registry);
    const LogisticFit fit = irls_fit(X, batch.y(), lambda, target_dense, config);
    const double minus_loglik = -logistic_loglik(X, batch.y(), fit.coefficients);
    return append_update(state, std::make_shared<const Batch>(batch), registry, fit.coefficients,
                         target_dense, lambda, std::move(weights), minus_loglik, fit.iterations,
                         std::move(selection));
}

EstimatorState update_logistic(const EstimatorState& state, const Batch& batch, double lambda,
                               const IrlsConfig& config, std::optional<SelectionReport> selection) {
    const CoefficientVector target =
        assemble_target(state, batch.covariates(), state.init_target);
    return update_logistic_with_target(state, batch, lambda, target, {1.0}, config,
                                       std::move(selection));
}

}  // namespace ridge_relay
