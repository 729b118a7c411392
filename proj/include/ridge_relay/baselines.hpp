#pragma once

// Comparator estimators.
//
// Mixed model over the stacked batches 1..t:
//   Y = X b + Z G + e,  G = (g_1, ..., g_t), g_k ~ N(0, s_g I_p), e ~ N(0, s_e I)
// with Z block-diagonal in the batch designs. Given xi = s_g / s_e the ML
// fixed-effects estimator is the GLS form
//   b_me = [X'(xi Z Z' + I)^{-1} X]^{-1} X'(xi Z Z' + I)^{-1} Y.
// Because Z Z' is block-diagonal with blocks X_k X_k', every solve decomposes
// per batch. A Gaussian state-space model with a static mean regression vector
// and i.i.d. state noise has the same ML estimator, so it gets no separate code.

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ridge_relay/linear_estimator.hpp"
#include "ridge_relay/model_core.hpp"

namespace ridge_relay {

struct StackedData {
    Eigen::VectorXd Y;
    Eigen::MatrixXd X;
    // (first row, row count) of each batch in the stack
    std::vector<std::pair<Eigen::Index, Eigen::Index>> boundaries;

    static StackedData stack(std::span<const Eigen::MatrixXd> designs,
                             std::span<const Eigen::VectorXd> responses);

    Eigen::Index total_samples() const noexcept { return X.rows(); }
    Eigen::Index p() const noexcept { return X.cols(); }
    std::size_t batches() const noexcept { return boundaries.size(); }
    /// Dense (n_total x t p) block-diagonal random-effects design.
    Eigen::MatrixXd Z_block() const;
};

enum class BlockSolve {
    automatic,  // Woodbury when t p < n_total, otherwise direct
    direct,     // factor each (xi X_k X_k' + I) block
    woodbury,   // I - xi X_k (I + xi X_k'X_k)^{-1} X_k'
};

struct MixedFit {
    Eigen::VectorXd fixed_effects;
    double xi = 0.0;
    double sigma_eps_sq = 0.0;
    double sigma_gamma_sq = 0.0;
    double profile_loglik = 0.0;
};

/// GLS fixed effects for a given xi >= 0. Throws SingularityError when
/// X'(xi Z Z' + I)^{-1} X is singular (e.g. too few accumulated samples).
Eigen::VectorXd mixed_fixed_effects(const StackedData& data, double xi,
                                    BlockSolve mode = BlockSolve::automatic);

/// Mean and covariance of the GLS estimator when the data follow the mixed model
/// with the given variances and fixed effects `beta`.
MomentReport mixed_moments(const StackedData& data, double xi, double sigma_eps_sq,
                           double sigma_gamma_sq, const Eigen::VectorXd& beta);

/// 25 log-spaced points on [1e-4, 1e4].
std::vector<double> default_xi_grid();

/// Profiles the Gaussian log-likelihood over the xi grid (beta and s_e in closed
/// form at each xi) and returns the grid maximiser.
MixedFit estimate_xi(const StackedData& data, std::span<const double> grid);

LinearFit plain_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda);
LinearFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

}  // namespace ridge_relay
