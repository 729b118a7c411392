#pragma once

// Simulation studies comparing updated ridge with de novo ridge and with the
// mixed-model ML estimator, plus trajectory checks of the large-t behaviour.
//
// Random streams: batch `index` of replicate `r` is drawn from
// stream_seed(seed, {r, index}); index 0 is the sacrificial initial batch.
// Replicates are independent, so they run in parallel and are merged by index.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ridge_relay/baselines.hpp"
#include "ridge_relay/linear_estimator.hpp"
#include "ridge_relay/model_core.hpp"
#include "ridge_relay/penalty_tuning.hpp"
#include "ridge_relay/rng.hpp"

namespace ridge_relay {

enum class InitMode { zero_target, truth_target, ridge_on_first_batch };

std::string_view to_string(InitMode mode) noexcept;
InitMode parse_init_mode(std::string_view text);

struct ScenarioConfig {
    std::string study = "regular_vs_updated";  // or "mixed_vs_updated"
    int p = 101;
    int n = 25;
    // Explicit coefficients; when empty the ramp b_j = (j - 50) / 20 sampled at
    // p evenly spaced j in [0, 100] is used (exactly j = 0..100 for p = 101).
    std::vector<double> beta;
    double noise_var = 0.04;
    int n_batches = 25;
    int empty_every = 0;  // batches with t % empty_every == 0 have y = noise; 0 disables
    int n_replicates = 100;
    std::uint64_t seed = 1;
    Family family = Family::linear;
    InitMode init_mode = InitMode::ridge_on_first_batch;
    // 1-based positions into a 101-long coefficient vector; rescaled for other p.
    std::vector<int> tracked = {1, 21, 51, 71, 101};
    // Penalty search
    bool loocv = true;
    int k_folds = 5;
    bool constrained = false;
    double grid_min = 1e-4;
    double grid_max = 1e6;
    int grid_points = 50;

    void validate() const;
    Eigen::VectorXd true_beta() const;
    /// 1-based tracked positions resolved for this p.
    std::vector<int> tracked_positions() const;
    std::vector<std::string> covariate_names() const;
    PenaltySearchConfig search(std::uint64_t fold_seed) const;

    // Study 1: p = 101, n = 25, 25 batches, 100 replicates, LOOCV without constraint.
    static ScenarioConfig study1_paper();
    // Same structure at p = 11, n = 10, 10 batches, 20 replicates.
    static ScenarioConfig study1_reduced();
    // Study 2: noise variance 1, constrained CV; optional empty model every tenth batch.
    static ScenarioConfig study2_paper(bool empty_batches);
    // Study 2 with 20 replicates.
    static ScenarioConfig study2_reduced(bool empty_batches);
};

/// Batch `index` of replicate `replicate` (index 0 = initial batch, t = 1 for it).
Batch generate_batch(const ScenarioConfig& config, std::uint64_t replicate, int index);
/// Batches t = 1..n_batches of one replicate.
std::vector<Batch> generate_batches(const ScenarioConfig& config, std::uint64_t replicate);

struct Quantiles {
    double q05 = 0.0;
    double q50 = 0.0;
    double q95 = 0.0;
};

/// Linear-interpolation sample quantile (R type 7). Input need not be sorted.
double sample_quantile(std::vector<double> values, double q);

struct TrajectoryResult {
    std::string label;
    std::vector<int> tracked;  // 1-based coefficient positions
    Eigen::VectorXd truth;
    // [replicate][t - 1]; NaN where the estimator was undefined
    std::vector<std::vector<double>> loss;
    std::vector<std::vector<double>> lambda;
    // [replicate][t - 1][tracked coordinate]
    std::vector<std::vector<std::vector<double>>> snapshot;

    // Aggregates over replicates, filled by aggregate()
    std::vector<double> mean_loss;     // [t - 1]; NaN if no replicate defined
    std::vector<int> defined_count;    // [t - 1]
    std::vector<std::vector<Quantiles>> quantiles;  // [t - 1][tracked coordinate]

    void resize(std::size_t replicates, std::size_t batches);
    void aggregate();
    std::size_t batches() const { return loss.empty() ? 0 : loss.front().size(); }
};

/// De novo ridge vs updated ridge (study 1). Returns {regular, updated}.
std::pair<TrajectoryResult, TrajectoryResult> run_study_regular_vs_updated(
    const ScenarioConfig& config);

/// Mixed-model ML vs updated ridge initiated at zero and at the truth (study 2).
/// Returns {mixed, updated_zero, updated_truth}.
std::tuple<TrajectoryResult, TrajectoryResult, TrajectoryResult> run_study_mixed_vs_updated(
    const ScenarioConfig& config);

/// Penalty as a function of the batch design and t.
using LambdaRule = std::function<double(const Eigen::MatrixXd& X, int t)>;
/// margin * 2 * d1(X)^2 with d1 the largest singular value (margin > 1 meets the growth condition).
LambdaRule growth_rule(double margin);
LambdaRule constant_rule(double lambda);

struct TrendReport {
    std::vector<double> loss;  // ||b_t - b||^2 per t
    std::vector<double> lambda;
    bool growth_condition_met = false;
    double ratio = 0.0;  // final / initial loss
    bool asserted = false;
    bool passed = false;
};

/// Long single-replicate sequence from a zero target with penalties from `rule`.
/// The ratio < 0.2 check is asserted only when every lambda_t exceeds 2 d1(X_t)^2.
TrendReport check_consistency_trajectory(const ScenarioConfig& config, const LambdaRule& rule,
                                         const IrlsConfig& irls = {});

struct MomentDiscrepancy {
    MomentReport exact;
    Eigen::VectorXd mc_mean;
    Eigen::MatrixXd mc_covariance;
    double max_z_mean = 0.0;
    double max_z_covariance = 0.0;
    double max_z = 0.0;
    bool passed = false;  // max_z < 4
};

/// Monte Carlo of the update recursion on fixed designs against exact_moments_general.
MomentDiscrepancy check_moment_formulas(std::span<const Eigen::MatrixXd> designs,
                                        std::span<const double> lambdas,
                                        const Eigen::VectorXd& beta, const Eigen::VectorXd& beta0,
                                        double sigma_sq, int n_mc, std::uint64_t seed);

struct MseComparison {
    double mse_updated = 0.0;
    double mse_mixed = 0.0;
    double mean_difference = 0.0;  // updated - mixed, paired
    double se_difference = 0.0;
    int replicates = 0;
    std::vector<double> lambdas;
};

/// Orthonormal designs, random-slope data, known variances; updated ridge
/// started at the t = 1 mixed estimate with
///   lambda_t = margin * s_e (s_e^2 + s_g^2)^{-1/2} 2^{t/2} T^{1/2}
/// versus the mixed estimator at T.
MseComparison compare_mse_orthonormal(int p, int n, int T, double sigma_eps_sq,
                                      double sigma_gamma_sq, double margin, int replicates,
                                      std::uint64_t seed);

/// n x p matrix with orthonormal columns (n >= p).
Eigen::MatrixXd random_orthonormal(int n, int p, Rng& rng);

}  // namespace ridge_relay
