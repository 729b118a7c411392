#include "ridge_relay/linear_estimator.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace ridge_relay {
namespace {

void check_finite(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                  const Eigen::VectorXd& target) {
    if (X.rows() != y.size())
        throw ValidationError("design has " + std::to_string(X.rows()) + " rows but response has " +
                              std::to_string(y.size()) + " entries");
    if (X.cols() != target.size())
        throw ValidationError("design has " + std::to_string(X.cols()) + " columns but target has " +
                              std::to_string(target.size()) + " entries");
    if (!std::isfinite(lambda) || lambda < 0.0)
        throw ValidationError("penalty must be finite and non-negative");
    if (!X.allFinite() || !y.allFinite() || !target.allFinite())
        throw ValidationError("non-finite input to ridge fit");
}

// Cholesky factor of X'X + lambda I; lambda = 0 requires full column rank.
Eigen::LLT<Eigen::MatrixXd> factor_penalized_gram(const Eigen::MatrixXd& X, double lambda) {
    const Eigen::Index p = X.cols();
    if (lambda == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (X.rows() < p || qr.rank() < p)
            throw SingularityError("X'X is singular and lambda = 0");
    }
    Eigen::MatrixXd A = X.transpose() * X;
    A.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw SingularityError("X'X + lambda I is not positive definite");
    return llt;
}

}  // namespace

LinearFit fit_targeted_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                             const Eigen::VectorXd& target) {
    check_finite(X, y, lambda, target);
    const auto llt = factor_penalized_gram(X, lambda);
    LinearFit fit;
    fit.coefficients = llt.solve(X.transpose() * y + lambda * target);
    fit.lambda = lambda;
    fit.target_used = target;
    fit.residual_sse = (y - X * fit.coefficients).squaredNorm();
    return fit;
}

Eigen::VectorXd mix_targets(std::span<const Eigen::VectorXd> targets,
                            std::span<const double> weights) {
    if (targets.empty()) throw ValidationError("at least one target is required");
    if (targets.size() != weights.size())
        throw ValidationError("weight count does not match target count");
    validate_simplex(weights);
    Eigen::VectorXd mixed = Eigen::VectorXd::Zero(targets.front().size());
    for (std::size_t g = 0; g < targets.size(); ++g) {
        if (targets[g].size() != mixed.size())
            throw ValidationError("mixture targets differ in length");
        mixed += weights[g] * targets[g];
    }
    return mixed;
}

LinearFit fit_targeted_ridge_mixture(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     double lambda, std::span<const Eigen::VectorXd> targets,
                                     std::span<const double> weights) {
    return fit_targeted_ridge(X, y, lambda, mix_targets(targets, weights));
}

double residual_variance(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                         const Eigen::VectorXd& target) {
    check_finite(X, y, lambda, target);
    const auto llt = factor_penalized_gram(X, lambda);
    const Eigen::VectorXd beta = llt.solve(X.transpose() * y + lambda * target);
    // trace(X A^{-1} X') = trace(A^{-1} X'X)
    const double df = llt.solve(X.transpose() * X).trace();
    const double dof = static_cast<double>(X.rows()) - df;
    if (dof <= 0.0) throw ValidationError("no residual degrees of freedom left");
    return (y - X * beta).squaredNorm() / dof;
}

EstimatorState update_with_target(const EstimatorState& state, const Batch& batch, double lambda,
                                  const CoefficientVector& target, std::vector<double> weights,
                                  std::optional<SelectionReport> selection) {
    if (batch.family() != Family::linear || state.family != Family::linear)
        throw ValidationError("linear update requires a linear batch and state");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ValidationError("update penalty must be positive");
    const CovariateRegistry registry = extend_registry(state.registry, batch);
    const Eigen::MatrixXd X = align_batch(batch, registry);
    const Eigen::VectorXd target_dense = target.to_dense(registry);
    const LinearFit fit = fit_targeted_ridge(X, batch.y(), lambda, target_dense);
    return append_update(state, std::make_shared<const Batch>(batch), registry, fit.coefficients,
                         target_dense, lambda, std::move(weights), fit.residual_sse, 0,
                         std::move(selection));
}

EstimatorState update(const EstimatorState& state, const Batch& batch, double lambda,
                      std::optional<SelectionReport> selection) {
    const CoefficientVector target =
        assemble_target(state, batch.covariates(), state.init_target);
    return update_with_target(state, batch, lambda, target, {1.0}, std::move(selection));
}

MomentReport exact_moments_orthonormal(const Eigen::VectorXd& beta, const Eigen::VectorXd& beta0,
                                       double lambda, int t, double sigma_sq) {
    if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
    if (t < 1) throw ValidationError("t must be at least 1");
    if (beta.size() != beta0.size()) throw ValidationError("beta and beta0 differ in length");
    if (!(sigma_sq >= 0.0)) throw ValidationError("sigma_sq must be non-negative");
    const double r = std::pow(lambda / (1.0 + lambda), t);
    MomentReport report;
    report.mean = beta + r * (beta0 - beta);
    report.covariance = sigma_sq * (1.0 - r * r) *
                        Eigen::MatrixXd::Identity(beta.size(), beta.size());
    report.sigma_sq = sigma_sq;
    return report;
}

MomentReport exact_moments_general(std::span<const Eigen::MatrixXd> designs,
                                   std::span<const double> lambdas, const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& beta0, double sigma_sq) {
    if (designs.empty()) throw ValidationError("at least one design is required");
    if (designs.size() != lambdas.size())
        throw ValidationError("need one lambda per design");
    const Eigen::Index p = beta.size();
    if (beta0.size() != p) throw ValidationError("beta and beta0 differ in length");
    if (!(sigma_sq >= 0.0)) throw ValidationError("sigma_sq must be non-negative");
    for (std::size_t k = 0; k < designs.size(); ++k) {
        if (designs[k].cols() != p) throw ValidationError("design column count differs from p");
        if (!(lambdas[k] > 0.0)) throw ValidationError("all lambdas must be positive");
    }

    const std::size_t t = designs.size();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
    std::vector<Eigen::MatrixXd> shrink(t), sandwich(t);
    for (std::size_t k = 0; k < t; ++k) {
        const Eigen::MatrixXd gram = designs[k].transpose() * designs[k];
        Eigen::MatrixXd A = gram;
        A.diagonal().array() += lambdas[k];
        const Eigen::MatrixXd A_inv = A.llt().solve(I);
        shrink[k] = lambdas[k] * A_inv;
        sandwich[k] = A_inv * gram * A_inv;
    }

    // after[h] = M_t ... M_{h+1}  (identity for h = t)
    Eigen::MatrixXd after = I;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t h = t; h-- > 0;) {
        const Eigen::MatrixXd through = after * shrink[h];  // M_t ... M_h
        mean += (after - through) * beta;
        cov += after * sandwich[h] * after.transpose();
        after = through;
    }
    mean += after * beta0;

    MomentReport report;
    report.mean = std::move(mean);
    report.covariance = sigma_sq * 0.5 * (cov + cov.transpose());
    report.sigma_sq = sigma_sq;
    return report;
}

}  // namespace ridge_relay
