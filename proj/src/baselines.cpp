#include "ridge_relay/baselines.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ridge_relay/penalty_tuning.hpp"

namespace ridge_relay {
namespace {

constexpr double kRcondFloor = 1e-13;

// Applies (xi X_k X_k' + I)^{-1} to B for one batch block.
Eigen::MatrixXd apply_block_inverse(const Eigen::MatrixXd& Xk, double xi, const Eigen::MatrixXd& B,
                                    bool woodbury) {
    if (woodbury) {
        Eigen::MatrixXd inner = xi * (Xk.transpose() * Xk);
        inner.diagonal().array() += 1.0;
        return B - xi * Xk * inner.llt().solve(Xk.transpose() * B);
    }
    Eigen::MatrixXd V = xi * (Xk * Xk.transpose());
    V.diagonal().array() += 1.0;
    return V.llt().solve(B);
}

bool use_woodbury(const StackedData& data, BlockSolve mode) {
    switch (mode) {
        case BlockSolve::direct: return false;
        case BlockSolve::woodbury: return true;
        case BlockSolve::automatic: break;
    }
    return static_cast<Eigen::Index>(data.batches()) * data.p() < data.total_samples();
}

void check_data(const StackedData& data, double xi) {
    if (!(xi >= 0.0) || !std::isfinite(xi)) throw ValidationError("xi must be finite and >= 0");
    if (data.batches() == 0) throw ValidationError("stacked data has no batches");
}

struct GlsPieces {
    Eigen::MatrixXd VinvX;  // (xi ZZ' + I)^{-1} X, stacked
    Eigen::VectorXd VinvY;
    Eigen::LLT<Eigen::MatrixXd> gram;  // X'(xi ZZ' + I)^{-1} X
};

GlsPieces gls_pieces(const StackedData& data, double xi, BlockSolve mode) {
    check_data(data, xi);
    const bool woodbury = use_woodbury(data, mode);
    GlsPieces pieces;
    pieces.VinvX.resize(data.total_samples(), data.p());
    pieces.VinvY.resize(data.total_samples());
    for (const auto& [first, rows] : data.boundaries) {
        const Eigen::MatrixXd Xk = data.X.middleRows(first, rows);
        Eigen::MatrixXd rhs(rows, data.p() + 1);
        rhs << Xk, data.Y.segment(first, rows);
        const Eigen::MatrixXd solved = apply_block_inverse(Xk, xi, rhs, woodbury);
        pieces.VinvX.middleRows(first, rows) = solved.leftCols(data.p());
        pieces.VinvY.segment(first, rows) = solved.col(data.p());
    }
    if (data.total_samples() < data.p())
        throw SingularityError("accumulated sample size is below the covariate count");
    pieces.gram.compute(data.X.transpose() * pieces.VinvX);
    if (pieces.gram.info() != Eigen::Success || pieces.gram.rcond() < kRcondFloor)
        throw SingularityError("X'(xi ZZ' + I)^{-1} X is singular");
    return pieces;
}

}  // namespace

StackedData StackedData::stack(std::span<const Eigen::MatrixXd> designs,
                               std::span<const Eigen::VectorXd> responses) {
    if (designs.size() != responses.size())
        throw ValidationError("need one response vector per design");
    if (designs.empty()) throw ValidationError("nothing to stack");
    const Eigen::Index p = designs.front().cols();
    Eigen::Index total = 0;
    for (std::size_t k = 0; k < designs.size(); ++k) {
        if (designs[k].cols() != p) throw ValidationError("designs differ in column count");
        if (designs[k].rows() != responses[k].size())
            throw ValidationError("design rows do not match response length");
        total += designs[k].rows();
    }
    StackedData data;
    data.X.resize(total, p);
    data.Y.resize(total);
    Eigen::Index offset = 0;
    for (std::size_t k = 0; k < designs.size(); ++k) {
        const Eigen::Index rows = designs[k].rows();
        data.X.middleRows(offset, rows) = designs[k];
        data.Y.segment(offset, rows) = responses[k];
        data.boundaries.emplace_back(offset, rows);
        offset += rows;
    }
    return data;
}

Eigen::MatrixXd StackedData::Z_block() const {
    const Eigen::Index t = static_cast<Eigen::Index>(batches());
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(total_samples(), t * p());
    for (Eigen::Index k = 0; k < t; ++k) {
        const auto [first, rows] = boundaries[static_cast<std::size_t>(k)];
        Z.block(first, k * p(), rows, p()) = X.middleRows(first, rows);
    }
    return Z;
}

Eigen::VectorXd mixed_fixed_effects(const StackedData& data, double xi, BlockSolve mode) {
    const GlsPieces pieces = gls_pieces(data, xi, mode);
    return pieces.gram.solve(pieces.VinvX.transpose() * data.Y);
}

MomentReport mixed_moments(const StackedData& data, double xi, double sigma_eps_sq,
                           double sigma_gamma_sq, const Eigen::VectorXd& beta) {
    if (!(sigma_eps_sq >= 0.0) || !(sigma_gamma_sq >= 0.0))
        throw ValidationError("variance components must be non-negative");
    if (beta.size() != data.p()) throw ValidationError("beta length differs from p");
    const GlsPieces pieces = gls_pieces(data, xi, BlockSolve::automatic);

    MomentReport report;
    report.sigma_sq = sigma_eps_sq;
    report.mean = pieces.gram.solve(pieces.VinvX.transpose() * (data.X * beta));

    // Var = B (s_e I + s_g ZZ') B',  B = G^{-1} X' V^{-1}, accumulated per block.
    Eigen::MatrixXd middle = Eigen::MatrixXd::Zero(data.p(), data.p());
    for (const auto& [first, rows] : data.boundaries) {
        const Eigen::MatrixXd Xk = data.X.middleRows(first, rows);
        const Eigen::MatrixXd Ak = pieces.VinvX.middleRows(first, rows);  // V_k^{-1} X_k
        const Eigen::MatrixXd AkXk = Ak.transpose() * Xk;
        middle += sigma_eps_sq * (Ak.transpose() * Ak) + sigma_gamma_sq * (AkXk * AkXk.transpose());
    }
    const Eigen::MatrixXd Ginv_middle = pieces.gram.solve(middle);
    const Eigen::MatrixXd cov = pieces.gram.solve(Ginv_middle.transpose());
    report.covariance = 0.5 * (cov + cov.transpose());
    return report;
}

std::vector<double> default_xi_grid() { return PenaltySearchConfig::log_grid(1e-4, 1e4, 25); }

MixedFit estimate_xi(const StackedData& data, std::span<const double> grid) {
    if (grid.empty()) throw ValidationError("xi grid is empty");
    if (data.total_samples() <= data.p())
        throw ValidationError("xi estimation needs more samples than covariates");
    const double n = static_cast<double>(data.total_samples());

    std::optional<MixedFit> best;
    for (double xi : grid) {
        GlsPieces pieces;
        try {
            pieces = gls_pieces(data, xi, BlockSolve::automatic);
        } catch (const SingularityError&) {
            continue;
        }
        const Eigen::VectorXd beta = pieces.gram.solve(pieces.VinvX.transpose() * data.Y);
        // r'V^{-1}r with V^{-1}r = V^{-1}Y - V^{-1}X beta
        const Eigen::VectorXd residual = data.Y - data.X * beta;
        const double quad = residual.dot(pieces.VinvY - pieces.VinvX * beta);
        if (!(quad > 0.0)) continue;
        double logdet = 0.0;  // log|I + xi X_k X_k'| = log|I + xi X_k'X_k|
        for (const auto& [first, rows] : data.boundaries) {
            const Eigen::MatrixXd Xk = data.X.middleRows(first, rows);
            Eigen::MatrixXd inner = xi * (Xk.transpose() * Xk);
            inner.diagonal().array() += 1.0;
            logdet += 2.0 * inner.llt().matrixLLT().diagonal().array().log().sum();
        }
        const double sigma_eps_sq = quad / n;
        const double loglik =
            -0.5 * (n * std::log(2.0 * std::numbers::pi * sigma_eps_sq) + logdet + n);
        if (!best || loglik > best->profile_loglik) {
            best = MixedFit{beta, xi, sigma_eps_sq, xi * sigma_eps_sq, loglik};
        }
    }
    if (!best) throw EstimationError("mixed model fit is singular at every xi grid point");
    return *best;
}

LinearFit plain_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
    return fit_targeted_ridge(X, y, lambda, Eigen::VectorXd::Zero(X.cols()));
}

LinearFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) { return plain_ridge(X, y, 0.0); }

}  // namespace ridge_relay
