#include "ridge_relay/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <string>

#include "ridge_relay/logistic_estimator.hpp"
#include "ridge_relay/parallel.hpp"
#include "ridge_relay/rng.hpp"

namespace ridge_relay {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kFoldStream = 0xf01dULL;

Eigen::VectorXd named_dense(const CoefficientVector& estimate, const std::vector<std::string>& names) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j)
        out[static_cast<Eigen::Index>(j)] = estimate.get(names[j]).value_or(0.0);
    return out;
}

std::vector<double> pick(const Eigen::VectorXd& values, const std::vector<int>& positions) {
    std::vector<double> out;
    out.reserve(positions.size());
    for (int pos : positions) out.push_back(values[pos - 1]);
    return out;
}

double largest_singular_value_sq(const Eigen::MatrixXd& X) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(X.transpose() * X, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
}

}  // namespace

std::string_view to_string(InitMode mode) noexcept {
    switch (mode) {
        case InitMode::zero_target: return "zero-target";
        case InitMode::truth_target: return "truth-target";
        case InitMode::ridge_on_first_batch: return "ridge-on-first-batch";
    }
    return "zero-target";
}

InitMode parse_init_mode(std::string_view text) {
    if (text == "zero-target") return InitMode::zero_target;
    if (text == "truth-target") return InitMode::truth_target;
    if (text == "ridge-on-first-batch") return InitMode::ridge_on_first_batch;
    throw ConfigError("unknown init mode '" + std::string(text) + "'");
}

// ------------------------------------------------------------------ config

void ScenarioConfig::validate() const {
    if (study != "regular_vs_updated" && study != "mixed_vs_updated")
        throw ConfigError("unknown study '" + study + "'");
    if (p < 1) throw ConfigError("p must be at least 1");
    if (n < 1) throw ConfigError("n must be at least 1");
    if (!(noise_var > 0.0)) throw ConfigError("noise_var must be positive");
    if (n_batches < 1) throw ConfigError("n_batches must be at least 1");
    if (empty_every < 0) throw ConfigError("empty_every must be non-negative");
    if (n_replicates < 1) throw ConfigError("n_replicates must be at least 1");
    if (!beta.empty() && static_cast<int>(beta.size()) != p)
        throw ConfigError("explicit beta must have p entries");
    for (int pos : tracked)
        if (pos < 1 || pos > 101) throw ConfigError("tracked positions must lie in 1..101");
    if (!loocv && (k_folds < 2 || k_folds > n)) throw ConfigError("k_folds must lie in 2..n");
    if (loocv && n < 2) throw ConfigError("LOOCV needs n >= 2");
    if (family == Family::logistic && study == "mixed_vs_updated")
        throw ConfigError("the mixed-model study is linear only");
    search(0).validate();
}

Eigen::VectorXd ScenarioConfig::true_beta() const {
    if (!beta.empty()) return Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    Eigen::VectorXd out(p);
    for (int k = 0; k < p; ++k) {
        const double j = p == 1 ? 50.0 : 100.0 * k / (p - 1);
        out[k] = (j - 50.0) / 20.0;
    }
    return out;
}

std::vector<int> ScenarioConfig::tracked_positions() const {
    std::vector<int> out;
    std::set<int> seen;
    for (int pos : tracked) {
        const int resolved =
            1 + static_cast<int>(std::lround((pos - 1) * static_cast<double>(p - 1) / 100.0));
        if (seen.insert(resolved).second) out.push_back(resolved);
    }
    return out;
}

std::vector<std::string> ScenarioConfig::covariate_names() const {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(p));
    for (int j = 1; j <= p; ++j) names.push_back("x" + std::to_string(j));
    return names;
}

PenaltySearchConfig ScenarioConfig::search(std::uint64_t fold_seed) const {
    PenaltySearchConfig search;
    search.grid = PenaltySearchConfig::log_grid(grid_min, grid_max, grid_points);
    search.loocv = loocv;
    search.K = k_folds;
    search.constrained = constrained;
    search.seed = fold_seed;
    return search;
}

ScenarioConfig ScenarioConfig::study1_paper() {
    ScenarioConfig config;
    config.study = "regular_vs_updated";
    return config;
}

ScenarioConfig ScenarioConfig::study1_reduced() {
    ScenarioConfig config = study1_paper();
    config.p = 11;
    config.n = 10;
    config.n_batches = 10;
    config.n_replicates = 20;
    return config;
}

ScenarioConfig ScenarioConfig::study2_paper(bool empty_batches) {
    ScenarioConfig config;
    config.study = "mixed_vs_updated";
    config.noise_var = 1.0;
    config.empty_every = empty_batches ? 10 : 0;
    config.constrained = true;
    config.init_mode = InitMode::zero_target;
    return config;
}

// Dimensions stay at p = 101, n = 25: shrinking p toward n removes the p > n
// regime in which the mixed fit only starts at t = 5.
ScenarioConfig ScenarioConfig::study2_reduced(bool empty_batches) {
    ScenarioConfig config = study2_paper(empty_batches);
    config.n_replicates = 20;
    return config;
}

// --------------------------------------------------------------- generation

Batch generate_batch(const ScenarioConfig& config, std::uint64_t replicate, int index) {
    Rng rng = make_rng(config.seed, {replicate, static_cast<std::uint64_t>(index)});
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd X(config.n, config.p);
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = normal(rng);

    const int t = std::max(index, 1);
    const bool empty = config.empty_every > 0 && index > 0 && index % config.empty_every == 0;
    const Eigen::VectorXd eta = empty ? Eigen::VectorXd::Zero(config.n) : Eigen::VectorXd(X * config.true_beta());

    Eigen::VectorXd y(config.n);
    if (config.family == Family::linear) {
        const double sd = std::sqrt(config.noise_var);
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = eta[i] + sd * normal(rng);
    } else {
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = uniform(rng) < logistic(eta[i]) ? 1.0 : 0.0;
    }
    return Batch(t, std::move(X), std::move(y), config.covariate_names(), config.family);
}

std::vector<Batch> generate_batches(const ScenarioConfig& config, std::uint64_t replicate) {
    std::vector<Batch> batches;
    batches.reserve(static_cast<std::size_t>(config.n_batches));
    for (int t = 1; t <= config.n_batches; ++t) batches.push_back(generate_batch(config, replicate, t));
    return batches;
}

// ------------------------------------------------------------- aggregation

double sample_quantile(std::vector<double> values, double q) {
    if (values.empty()) return kNaN;
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

void TrajectoryResult::resize(std::size_t replicates, std::size_t batches) {
    loss.assign(replicates, std::vector<double>(batches, kNaN));
    lambda.assign(replicates, std::vector<double>(batches, kNaN));
    snapshot.assign(replicates, std::vector<std::vector<double>>(
                                    batches, std::vector<double>(tracked.size(), kNaN)));
}

void TrajectoryResult::aggregate() {
    const std::size_t T = batches();
    mean_loss.assign(T, kNaN);
    defined_count.assign(T, 0);
    quantiles.assign(T, std::vector<Quantiles>(tracked.size()));
    for (std::size_t t = 0; t < T; ++t) {
        double total = 0.0;
        int count = 0;
        for (const auto& rep : loss)
            if (std::isfinite(rep[t])) {
                total += rep[t];
                ++count;
            }
        defined_count[t] = count;
        if (count > 0) mean_loss[t] = total / count;
        for (std::size_t c = 0; c < tracked.size(); ++c) {
            std::vector<double> values;
            for (const auto& rep : snapshot)
                if (std::isfinite(rep[t][c])) values.push_back(rep[t][c]);
            quantiles[t][c] = {sample_quantile(values, 0.05), sample_quantile(values, 0.50),
                               sample_quantile(values, 0.95)};
        }
    }
}

// ----------------------------------------------------------------- studies

namespace {

TrajectoryResult empty_result(const ScenarioConfig& config, std::string label) {
    TrajectoryResult result;
    result.label = std::move(label);
    result.tracked = config.tracked_positions();
    result.truth = config.true_beta();
    result.resize(static_cast<std::size_t>(config.n_replicates),
                  static_cast<std::size_t>(config.n_batches));
    return result;
}

void record(TrajectoryResult& result, std::size_t rep, std::size_t t_index,
            const Eigen::VectorXd& estimate, double lambda) {
    result.loss[rep][t_index] = (estimate - result.truth).squaredNorm();
    result.lambda[rep][t_index] = lambda;
    result.snapshot[rep][t_index] = pick(estimate, result.tracked);
}

CoefficientVector initial_target(const ScenarioConfig& config, std::uint64_t rep,
                                 InitMode mode) {
    const auto names = config.covariate_names();
    switch (mode) {
        case InitMode::zero_target: return CoefficientVector::zeros(names);
        case InitMode::truth_target: return CoefficientVector::from_dense(names, config.true_beta());
        case InitMode::ridge_on_first_batch: {
            const Batch first = generate_batch(config, rep, 0);
            auto search = config.search(stream_seed(config.seed, {rep, 0, kFoldStream}));
            search.constrained = false;
            const auto state = EstimatorState::initial(config.family, CoefficientVector::zeros(names));
            return update_with_selection(state, first, search).first.current;
        }
    }
    return CoefficientVector::zeros(names);
}

}  // namespace

std::pair<TrajectoryResult, TrajectoryResult> run_study_regular_vs_updated(
    const ScenarioConfig& config) {
    config.validate();
    TrajectoryResult regular = empty_result(config, "regular");
    TrajectoryResult updated = empty_result(config, "updated");
    const auto names = config.covariate_names();

    parallel_for(static_cast<std::size_t>(config.n_replicates), [&](std::size_t rep) {
        const auto r = static_cast<std::uint64_t>(rep);
        EstimatorState state = EstimatorState::initial(
            config.family, initial_target(config, r, config.init_mode), std::string(to_string(config.init_mode)));
        const auto zero_state = EstimatorState::initial(config.family, CoefficientVector::zeros(names));
        for (int t = 1; t <= config.n_batches; ++t) {
            const Batch batch = generate_batch(config, r, t);
            const auto search = config.search(stream_seed(config.seed, {r, static_cast<std::uint64_t>(t), kFoldStream}));
            const auto t_index = static_cast<std::size_t>(t - 1);

            const auto [fresh, fresh_report] = update_with_selection(zero_state, batch, search);
            record(regular, rep, t_index, named_dense(fresh.current, names), fresh_report.chosen_lambda);

            auto [next, report] = update_with_selection(state, batch, search);
            state = std::move(next);
            record(updated, rep, t_index, named_dense(state.current, names), report.chosen_lambda);
        }
    });
    regular.aggregate();
    updated.aggregate();
    return {std::move(regular), std::move(updated)};
}

std::tuple<TrajectoryResult, TrajectoryResult, TrajectoryResult> run_study_mixed_vs_updated(
    const ScenarioConfig& config) {
    config.validate();
    if (config.family != Family::linear) throw ConfigError("the mixed-model study is linear only");
    TrajectoryResult mixed = empty_result(config, "mixed");
    TrajectoryResult zero = empty_result(config, "updated_zero");
    TrajectoryResult truth = empty_result(config, "updated_truth");
    const auto names = config.covariate_names();
    const auto xi_grid = default_xi_grid();

    parallel_for(static_cast<std::size_t>(config.n_replicates), [&](std::size_t rep) {
        const auto r = static_cast<std::uint64_t>(rep);
        EstimatorState from_zero = EstimatorState::initial(
            Family::linear, CoefficientVector::zeros(names), "zero-target");
        EstimatorState from_truth = EstimatorState::initial(
            Family::linear, CoefficientVector::from_dense(names, config.true_beta()), "truth-target");
        std::vector<Eigen::MatrixXd> designs;
        std::vector<Eigen::VectorXd> responses;
        Eigen::Index accumulated = 0;

        for (int t = 1; t <= config.n_batches; ++t) {
            const Batch batch = generate_batch(config, r, t);
            const auto search = config.search(stream_seed(config.seed, {r, static_cast<std::uint64_t>(t), kFoldStream}));
            const auto t_index = static_cast<std::size_t>(t - 1);

            designs.push_back(batch.X());
            responses.push_back(batch.y());
            accumulated += batch.n();
            if (accumulated > config.p) {
                try {
                    const MixedFit fit = estimate_xi(StackedData::stack(designs, responses), xi_grid);
                    record(mixed, rep, t_index, fit.fixed_effects, fit.xi);
                } catch (const EstimationError&) {
                    // left undefined
                }
            }

            auto [next_zero, report_zero] = update_with_selection(from_zero, batch, search);
            from_zero = std::move(next_zero);
            record(zero, rep, t_index, named_dense(from_zero.current, names), report_zero.chosen_lambda);

            auto [next_truth, report_truth] = update_with_selection(from_truth, batch, search);
            from_truth = std::move(next_truth);
            record(truth, rep, t_index, named_dense(from_truth.current, names), report_truth.chosen_lambda);
        }
    });
    mixed.aggregate();
    zero.aggregate();
    truth.aggregate();
    return {std::move(mixed), std::move(zero), std::move(truth)};
}

// ------------------------------------------------------------ trend checks

LambdaRule growth_rule(double margin) {
    return [margin](const Eigen::MatrixXd& X, int) { return margin * 2.0 * largest_singular_value_sq(X); };
}

LambdaRule constant_rule(double lambda) {
    return [lambda](const Eigen::MatrixXd&, int) { return lambda; };
}

TrendReport check_consistency_trajectory(const ScenarioConfig& config, const LambdaRule& rule,
                                         const IrlsConfig& irls) {
    if (config.p < 1 || config.n < 1 || config.n_batches < 1)
        throw ConfigError("trajectory needs p, n and n_batches >= 1");
    const auto names = config.covariate_names();
    const Eigen::VectorXd truth = config.true_beta();
    EstimatorState state = EstimatorState::initial(config.family, CoefficientVector::zeros(names));

    TrendReport report;
    report.growth_condition_met = true;
    for (int t = 1; t <= config.n_batches; ++t) {
        const Batch batch = generate_batch(config, 0, t);
        const double lambda = rule(batch.X(), t);
        if (!(lambda > 2.0 * largest_singular_value_sq(batch.X()))) report.growth_condition_met = false;
        state = config.family == Family::linear ? update(state, batch, lambda)
                                                : update_logistic(state, batch, lambda, irls);
        report.loss.push_back((named_dense(state.current, names) - truth).squaredNorm());
        report.lambda.push_back(lambda);
    }
    report.ratio = report.loss.back() / report.loss.front();
    report.asserted = report.growth_condition_met;
    report.passed = !report.asserted || report.ratio < 0.2;
    return report;
}

MomentDiscrepancy check_moment_formulas(std::span<const Eigen::MatrixXd> designs,
                                        std::span<const double> lambdas,
                                        const Eigen::VectorXd& beta, const Eigen::VectorXd& beta0,
                                        double sigma_sq, int n_mc, std::uint64_t seed) {
    if (n_mc < 2) throw ValidationError("Monte Carlo needs at least two replicates");
    MomentDiscrepancy out;
    out.exact = exact_moments_general(designs, lambdas, beta, beta0, sigma_sq);
    const Eigen::Index p = beta.size();
    const double sd = std::sqrt(sigma_sq);

    Eigen::MatrixXd draws(n_mc, p);
    for (int m = 0; m < n_mc; ++m) {
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(m)});
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd estimate = beta0;
        for (std::size_t k = 0; k < designs.size(); ++k) {
            Eigen::VectorXd y = designs[k] * beta;
            for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sd * normal(rng);
            estimate = fit_targeted_ridge(designs[k], y, lambdas[k], estimate).coefficients;
        }
        draws.row(m) = estimate.transpose();
    }
    out.mc_mean = draws.colwise().mean().transpose();
    const Eigen::MatrixXd centered = draws.rowwise() - out.mc_mean.transpose();
    out.mc_covariance = centered.transpose() * centered / static_cast<double>(n_mc - 1);

    const double N = static_cast<double>(n_mc);
    const Eigen::MatrixXd& C = out.exact.covariance;
    for (Eigen::Index i = 0; i < p; ++i) {
        const double se = std::sqrt(C(i, i) / N);
        out.max_z_mean = std::max(out.max_z_mean, std::abs(out.mc_mean[i] - out.exact.mean[i]) / se);
        for (Eigen::Index j = 0; j <= i; ++j) {
            // Var of a Gaussian sample covariance: (C_ii C_jj + C_ij^2) / N
            const double se_c = std::sqrt((C(i, i) * C(j, j) + C(i, j) * C(i, j)) / N);
            out.max_z_covariance =
                std::max(out.max_z_covariance, std::abs(out.mc_covariance(i, j) - C(i, j)) / se_c);
        }
    }
    out.max_z = std::max(out.max_z_mean, out.max_z_covariance);
    out.passed = out.max_z < 4.0;
    return out;
}

Eigen::MatrixXd random_orthonormal(int n, int p, Rng& rng) {
    if (n < p) throw ValidationError("orthonormal columns need n >= p");
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd G(n, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) G(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
}

MseComparison compare_mse_orthonormal(int p, int n, int T, double sigma_eps_sq,
                                      double sigma_gamma_sq, double margin, int replicates,
                                      std::uint64_t seed) {
    if (T < 1 || replicates < 2) throw ValidationError("need T >= 1 and at least two replicates");
    const double sigma_eps = std::sqrt(sigma_eps_sq);
    const double xi = sigma_gamma_sq / sigma_eps_sq;
    MseComparison out;
    out.replicates = replicates;
    for (int t = 1; t <= T; ++t)
        out.lambdas.push_back(margin * sigma_eps / std::sqrt(sigma_eps_sq + sigma_gamma_sq) *
                              std::pow(2.0, t / 2.0) * std::sqrt(static_cast<double>(T)));

    Eigen::VectorXd beta(p);
    for (int j = 0; j < p; ++j) beta[j] = (j + 1.0) / p;

    std::vector<double> updated(static_cast<std::size_t>(replicates));
    std::vector<double> mixed(static_cast<std::size_t>(replicates));
    parallel_for(static_cast<std::size_t>(replicates), [&](std::size_t rep) {
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(rep)});
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<Eigen::MatrixXd> designs;
        std::vector<Eigen::VectorXd> responses;
        Eigen::VectorXd estimate;
        for (int t = 1; t <= T; ++t) {
            Eigen::MatrixXd X = random_orthonormal(n, p, rng);
            Eigen::VectorXd slope = beta;
            for (Eigen::Index j = 0; j < p; ++j) slope[j] += std::sqrt(sigma_gamma_sq) * normal(rng);
            Eigen::VectorXd y = X * slope;
            for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sigma_eps * normal(rng);
            designs.push_back(X);
            responses.push_back(y);
            if (t == 1) {
                estimate = mixed_fixed_effects(StackedData::stack(designs, responses), xi);
            } else {
                estimate = fit_targeted_ridge(X, y, out.lambdas[static_cast<std::size_t>(t - 1)], estimate)
                               .coefficients;
            }
        }
        updated[rep] = (estimate - beta).squaredNorm();
        mixed[rep] = (mixed_fixed_effects(StackedData::stack(designs, responses), xi) - beta).squaredNorm();
    });

    double sum_u = 0.0, sum_m = 0.0, sum_d = 0.0, sum_d2 = 0.0;
    for (std::size_t r = 0; r < updated.size(); ++r) {
        const double d = updated[r] - mixed[r];
        sum_u += updated[r];
        sum_m += mixed[r];
        sum_d += d;
        sum_d2 += d * d;
    }
    const double N = static_cast<double>(replicates);
    out.mse_updated = sum_u / N;
    out.mse_mixed = sum_m / N;
    out.mean_difference = sum_d / N;
    out.se_difference = std::sqrt((sum_d2 / N - out.mean_difference * out.mean_difference) / (N - 1.0));
    return out;
}

}  // namespace ridge_relay
