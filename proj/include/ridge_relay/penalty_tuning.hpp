#pragma once

// Cross-validated choice of the penalty (and mixture weights), optionally
// restricted to candidates whose fold estimators do not degrade the fit on
// the historic batches by more than the new batch's sample share f_t:
//   (1 - f_t) mean_k sum_{tau<t} loss_tau(b_t^{(-k)}) <= sum_{tau<t} loss_tau(b_{t-1}).

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ridge_relay/diagnostics.hpp"
#include "ridge_relay/logistic_estimator.hpp"
#include "ridge_relay/model_core.hpp"

namespace ridge_relay {

/// Fold label (0-based) of every sample.
struct FoldPlan {
    std::vector<int> assignments;
    int K = 0;

    std::vector<Eigen::Index> test_indices(int fold) const;
    std::vector<Eigen::Index> train_indices(int fold) const;
    /// Throws ValidationError if a fold is empty, sizes differ by more than one,
    /// or a label is out of range.
    void validate() const;
};

/// Shuffled round-robin assignment. With strata, samples are shuffled within each
/// stratum and strata are laid out one after the other before dealing, so every
/// stratum is spread over the folds as evenly as integer arithmetic allows.
FoldPlan make_folds(Eigen::Index n, int K, std::uint64_t seed,
                    const std::optional<Eigen::VectorXd>& strata = std::nullopt);

struct PenaltySearchConfig {
    std::vector<double> grid = log_grid(1e-4, 1e6, 50);
    int K = 5;
    bool loocv = false;  // K = n
    bool constrained = true;
    double weight_step = 0.1;
    std::uint64_t seed = 0;
    IrlsConfig irls;

    static std::vector<double> log_grid(double lo, double hi, int points);
    int folds_for(Eigen::Index n) const { return loocv ? static_cast<int>(n) : K; }
    void validate() const;
};

/// Mean held-out SSE (linear) or mean held-out minus log-likelihood (logistic).
/// A fold whose IRLS fit fails makes the score +infinity.
double cv_score(Family family, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                const Eigen::VectorXd& target, const FoldPlan& folds,
                const IrlsConfig& irls = {});

struct ConstraintTerms {
    double lhs = 0.0;
    double rhs = 0.0;
    double f_t = 0.0;
    bool feasible() const { return lhs <= rhs; }
};

/// History constraint terms for one candidate, with historic designs aligned to
/// the registry extended by the batch. std::nullopt when there is no history
/// (the constraint is vacuous).
std::optional<ConstraintTerms> constraint_terms(const EstimatorState& state, const Batch& batch,
                                                double lambda, const CoefficientVector& target,
                                                const FoldPlan& folds,
                                                const IrlsConfig& irls = {});

/// Simplex lattice {w : w_g = k_g * step, sum = 1} in lexicographic order.
std::vector<std::vector<double>> simplex_lattice(std::size_t groups, double step);

/// Target used by a plain sequential update: element-wise assembly with the
/// init target as fallback.
TargetSpec default_targets(const EstimatorState& state, const Batch& batch);

/// Grid search over lambda (times the weight lattice when weights are to be tuned).
/// Constrained mode restricts the argmin to feasible candidates; when none is
/// feasible the largest grid lambda is returned with fallback_used. Ties go to
/// the larger lambda.
SelectionReport select_penalty(const EstimatorState& state, const Batch& batch,
                               const PenaltySearchConfig& config, const TargetSpec& targets);

/// select_penalty followed by the family's update at the chosen lambda and weights.
std::pair<EstimatorState, SelectionReport> update_with_selection(
    const EstimatorState& state, const Batch& batch, const PenaltySearchConfig& config,
    const std::optional<TargetSpec>& targets = std::nullopt);

}  // namespace ridge_relay
