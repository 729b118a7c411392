#include "ridge_relay/penalty_tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "ridge_relay/linear_estimator.hpp"
#include "ridge_relay/parallel.hpp"
#include "ridge_relay/rng.hpp"

namespace ridge_relay {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
    return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = y[rows[i]];
    return out;
}

double family_loss(Family family, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const Eigen::VectorXd& beta) {
    if (family == Family::linear) return (y - X * beta).squaredNorm();
    return -logistic_loglik(X, y, beta);
}

// Historic batches stacked and aligned to the current registry.
struct History {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    Eigen::VectorXd previous;
    double rhs = 0.0;
    double f_t = 0.0;
};

std::optional<History> stack_history(const EstimatorState& state, const Batch& batch,
                                     const CovariateRegistry& registry) {
    if (state.retained.empty()) return std::nullopt;
    const Eigen::Index rows = state.retained_samples();
    History history;
    history.X.resize(rows, static_cast<Eigen::Index>(registry.size()));
    history.y.resize(rows);
    Eigen::Index offset = 0;
    for (const auto& past : state.retained) {
        history.X.middleRows(offset, past->n()) = align_batch(*past, registry);
        history.y.segment(offset, past->n()) = past->y();
        offset += past->n();
    }
    history.previous = state.current.to_dense(registry);
    history.rhs = family_loss(state.family, history.X, history.y, history.previous);
    history.f_t = static_cast<double>(batch.n()) / static_cast<double>(rows + batch.n());
    return history;
}

// Evaluates (lambda, target) candidates on a fixed fold plan. The linear family
// reuses one eigendecomposition of each training Gram matrix across candidates.
class CvEngine {
public:
    CvEngine(Family family, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
             const FoldPlan& folds, const IrlsConfig& irls, const History* history)
        : family_(family), irls_(irls), history_(history) {
        folds.validate();
        if (static_cast<Eigen::Index>(folds.assignments.size()) != X.rows())
            throw ValidationError("fold plan does not match the sample count");
        folds_.resize(static_cast<std::size_t>(folds.K));
        for (int k = 0; k < folds.K; ++k) {
            auto& fold = folds_[static_cast<std::size_t>(k)];
            const auto test = folds.test_indices(k);
            const auto train = folds.train_indices(k);
            fold.X_test = take_rows(X, test);
            fold.y_test = take(y, test);
            fold.X_train = take_rows(X, train);
            fold.y_train = take(y, train);
            if (family_ == Family::linear) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fold.X_train.transpose() *
                                                                   fold.X_train);
                fold.basis = eig.eigenvectors();
                fold.spectrum = eig.eigenvalues().cwiseMax(0.0);
                fold.Xty = fold.X_train.transpose() * fold.y_train;
            }
        }
    }

    CvPoint evaluate(double lambda, const Eigen::VectorXd& target, std::vector<double> weights) const {
        CvPoint point;
        point.lambda = lambda;
        point.weights = std::move(weights);
        double score = 0.0;
        double historic = 0.0;
        for (const auto& fold : folds_) {
            std::optional<Eigen::VectorXd> beta = fit_fold(fold, lambda, target);
            if (!beta) {
                score = kInf;
                historic = kInf;
                break;
            }
            score += family_loss(family_, fold.X_test, fold.y_test, *beta);
            if (history_) historic += family_loss(family_, history_->X, history_->y, *beta);
        }
        const double K = static_cast<double>(folds_.size());
        point.score = score / K;
        if (history_) {
            point.lhs = (1.0 - history_->f_t) * historic / K;
            point.rhs = history_->rhs;
            point.feasible = point.lhs <= point.rhs;
        }
        return point;
    }

private:
    struct Fold {
        Eigen::MatrixXd X_test, X_train;
        Eigen::VectorXd y_test, y_train;
        Eigen::MatrixXd basis;
        Eigen::VectorXd spectrum;
        Eigen::VectorXd Xty;
    };

    std::optional<Eigen::VectorXd> fit_fold(const Fold& fold, double lambda,
                                            const Eigen::VectorXd& target) const {
        if (family_ == Family::linear) {
            const Eigen::VectorXd rotated = fold.basis.transpose() * (fold.Xty + lambda * target);
            return fold.basis * (rotated.array() / (fold.spectrum.array() + lambda)).matrix();
        }
        try {
            return irls_fit(fold.X_train, fold.y_train, lambda, target, irls_).coefficients;
        } catch (const ConvergenceError&) {
            return std::nullopt;
        } catch (const SingularityError&) {
            return std::nullopt;
        }
    }

    Family family_;
    IrlsConfig irls_;
    const History* history_;
    std::vector<Fold> folds_;
};

std::optional<Eigen::VectorXd> strata_for(const Batch& batch) {
    if (batch.family() == Family::logistic) return batch.y();
    return std::nullopt;
}

}  // namespace

// ------------------------------------------------------------------- folds

std::vector<Eigen::Index> FoldPlan::test_indices(int fold) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] == fold) out.push_back(static_cast<Eigen::Index>(i));
    return out;
}

std::vector<Eigen::Index> FoldPlan::train_indices(int fold) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] != fold) out.push_back(static_cast<Eigen::Index>(i));
    return out;
}

void FoldPlan::validate() const {
    if (K < 2) throw ValidationError("fold plan needs K >= 2");
    std::vector<std::size_t> sizes(static_cast<std::size_t>(K), 0);
    for (int label : assignments) {
        if (label < 0 || label >= K) throw ValidationError("fold label out of range");
        ++sizes[static_cast<std::size_t>(label)];
    }
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    if (*lo == 0) throw ValidationError("fold plan has an empty fold");
    if (*hi - *lo > 1) throw ValidationError("fold sizes differ by more than one");
}

FoldPlan make_folds(Eigen::Index n, int K, std::uint64_t seed,
                    const std::optional<Eigen::VectorXd>& strata) {
    if (K < 2) throw ValidationError("K must be at least 2");
    if (K > n)
        throw ValidationError("K = " + std::to_string(K) + " exceeds the sample count " +
                              std::to_string(n));
    if (strata && strata->size() != n) throw ValidationError("strata length differs from n");

    std::map<double, std::vector<Eigen::Index>> groups;
    for (Eigen::Index i = 0; i < n; ++i) groups[strata ? (*strata)[i] : 0.0].push_back(i);

    Rng rng = make_rng(seed, {0x666f6c64ULL});
    std::vector<Eigen::Index> order;
    order.reserve(static_cast<std::size_t>(n));
    for (auto& [label, members] : groups) {
        std::shuffle(members.begin(), members.end(), rng);
        order.insert(order.end(), members.begin(), members.end());
    }

    FoldPlan plan;
    plan.K = K;
    plan.assignments.assign(static_cast<std::size_t>(n), 0);
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        plan.assignments[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % static_cast<std::size_t>(K));
    return plan;
}

// ------------------------------------------------------------------ config

std::vector<double> PenaltySearchConfig::log_grid(double lo, double hi, int points) {
    if (!(lo > 0.0) || !(hi >= lo) || points < 1)
        throw ValidationError("log grid needs 0 < lo <= hi and at least one point");
    std::vector<double> grid(static_cast<std::size_t>(points));
    if (points == 1) {
        grid[0] = lo;
        return grid;
    }
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    for (int i = 0; i < points; ++i)
        grid[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (points - 1));
    grid.back() = hi;
    grid.front() = lo;
    return grid;
}

void PenaltySearchConfig::validate() const {
    if (grid.empty()) throw ValidationError("penalty grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0) || !std::isfinite(grid[i]))
            throw ValidationError("penalty grid values must be positive and finite");
        if (i > 0 && !(grid[i] > grid[i - 1]))
            throw ValidationError("penalty grid must be strictly increasing");
    }
    if (!loocv && K < 2) throw ValidationError("K must be at least 2");
    if (!(weight_step > 0.0) || weight_step > 1.0)
        throw ValidationError("weight step must lie in (0, 1]");
    irls.validate();
}

// ------------------------------------------------------------- operations

double cv_score(Family family, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                const Eigen::VectorXd& target, const FoldPlan& folds, const IrlsConfig& irls) {
    if (!(lambda > 0.0)) throw ValidationError("cv_score requires lambda > 0");
    folds.validate();
    if (static_cast<Eigen::Index>(folds.assignments.size()) != X.rows())
        throw ValidationError("fold plan does not match the sample count");
    double total = 0.0;
    for (int k = 0; k < folds.K; ++k) {
        const auto test = folds.test_indices(k);
        const auto train = folds.train_indices(k);
        const Eigen::MatrixXd X_train = take_rows(X, train);
        const Eigen::VectorXd y_train = take(y, train);
        Eigen::VectorXd beta;
        if (family == Family::linear) {
            beta = fit_targeted_ridge(X_train, y_train, lambda, target).coefficients;
        } else {
            try {
                beta = irls_fit(X_train, y_train, lambda, target, irls).coefficients;
            } catch (const ConvergenceError&) {
                return kInf;
            } catch (const SingularityError&) {
                return kInf;
            }
        }
        total += family_loss(family, take_rows(X, test), take(y, test), beta);
    }
    return total / folds.K;
}

std::optional<ConstraintTerms> constraint_terms(const EstimatorState& state, const Batch& batch,
                                                double lambda, const CoefficientVector& target,
                                                const FoldPlan& folds, const IrlsConfig& irls) {
    if (!(lambda > 0.0)) throw ValidationError("constraint_terms requires lambda > 0");
    if (batch.family() != state.family) throw ValidationError("batch family does not match state");
    const CovariateRegistry registry = extend_registry(state.registry, batch);
    const auto history = stack_history(state, batch, registry);
    if (!history) return std::nullopt;
    const CvEngine engine(state.family, align_batch(batch, registry), batch.y(), folds, irls,
                          &*history);
    const CvPoint point = engine.evaluate(lambda, target.to_dense(registry), {1.0});
    return ConstraintTerms{point.lhs, point.rhs, history->f_t};
}

std::vector<std::vector<double>> simplex_lattice(std::size_t groups, double step) {
    if (groups == 0) throw ValidationError("lattice needs at least one group");
    const long units = std::lround(1.0 / step);
    if (units < 1 || std::abs(units * step - 1.0) > 1e-9)
        throw ValidationError("weight step must divide 1");
    std::vector<std::vector<double>> out;
    std::vector<long> counts(groups, 0);
    // Enumerate compositions of `units` into `groups` parts, lexicographically descending in w_1.
    auto recurse = [&](auto&& self, std::size_t g, long remaining) -> void {
        if (g + 1 == groups) {
            counts[g] = remaining;
            std::vector<double> w(groups);
            for (std::size_t i = 0; i < groups; ++i)
                w[i] = static_cast<double>(counts[i]) / static_cast<double>(units);
            out.push_back(std::move(w));
            return;
        }
        for (long c = remaining; c >= 0; --c) {
            counts[g] = c;
            self(self, g + 1, remaining - c);
        }
    };
    recurse(recurse, 0, units);
    return out;
}

TargetSpec default_targets(const EstimatorState& state, const Batch& batch) {
    return TargetSpec::single(assemble_target(state, batch.covariates(), state.init_target));
}

SelectionReport select_penalty(const EstimatorState& state, const Batch& batch,
                               const PenaltySearchConfig& config, const TargetSpec& targets) {
    config.validate();
    targets.validate();
    if (batch.family() != state.family) throw ValidationError("batch family does not match state");
    if (!targets.weights && targets.size() < 2)
        throw ValidationError("tuning mixture weights needs at least two targets");

    const CovariateRegistry registry = extend_registry(state.registry, batch);
    const Eigen::MatrixXd X = align_batch(batch, registry);
    std::vector<Eigen::VectorXd> dense_targets;
    for (const auto& target : targets.targets) dense_targets.push_back(target.to_dense(registry));

    const std::vector<std::vector<double>> weight_options =
        targets.weights ? std::vector<std::vector<double>>{*targets.weights}
                        : simplex_lattice(targets.size(), config.weight_step);

    const int K = config.folds_for(batch.n());
    const FoldPlan folds = make_folds(batch.n(), K, config.seed, strata_for(batch));
    const auto history =
        config.constrained ? stack_history(state, batch, registry) : std::optional<History>{};
    const CvEngine engine(state.family, X, batch.y(), folds, config.irls,
                          history ? &*history : nullptr);

    const std::size_t n_weights = weight_options.size();
    std::vector<CvPoint> curve(config.grid.size() * n_weights);
    parallel_for(curve.size(), [&](std::size_t i) {
        const double lambda = config.grid[i / n_weights];
        const auto& weights = weight_options[i % n_weights];
        curve[i] = engine.evaluate(lambda, mix_targets(dense_targets, weights), weights);
    });

    SelectionReport report;
    report.constrained = config.constrained;
    report.constraint_evaluated = history.has_value();
    report.f_t = history ? history->f_t : std::numeric_limits<double>::quiet_NaN();
    report.folds = K;

    // Argmin in grid order; "<=" on lambda order hands ties to the larger lambda,
    // "<" within one lambda keeps the first weight vector.
    auto pick = [&](auto&& eligible) -> std::optional<std::size_t> {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            if (!eligible(curve[i]) || !std::isfinite(curve[i].score)) continue;
            if (!best) {
                best = i;
                continue;
            }
            const bool same_lambda = i / n_weights == *best / n_weights;
            if (same_lambda ? curve[i].score < curve[*best].score
                            : curve[i].score <= curve[*best].score)
                best = i;
        }
        return best;
    };

    std::optional<std::size_t> chosen =
        report.constraint_evaluated ? pick([](const CvPoint& c) { return c.feasible; })
                                    : pick([](const CvPoint&) { return true; });
    if (!chosen && report.constraint_evaluated) {
        const double largest = config.grid.back();
        chosen = pick([&](const CvPoint& c) { return c.lambda == largest; });
        report.fallback_used = chosen.has_value();
    }
    if (!chosen) throw SelectionError("every penalty candidate was disqualified");

    report.chosen_lambda = curve[*chosen].lambda;
    report.chosen_weights = curve[*chosen].weights;
    report.cv_curve = std::move(curve);
    return report;
}

std::pair<EstimatorState, SelectionReport> update_with_selection(
    const EstimatorState& state, const Batch& batch, const PenaltySearchConfig& config,
    const std::optional<TargetSpec>& targets) {
    const TargetSpec spec = targets ? *targets : default_targets(state, batch);
    SelectionReport report = select_penalty(state, batch, config, spec);
    // Targets may cover different covariates; absent ones count as zero.
    const CovariateRegistry registry = extend_registry(state.registry, batch);
    std::vector<Eigen::VectorXd> dense_targets;
    for (const auto& t : spec.targets) dense_targets.push_back(t.to_dense(registry));
    const CoefficientVector target = CoefficientVector::from_dense(
        registry, mix_targets(dense_targets, report.chosen_weights));
    EstimatorState next =
        state.family == Family::linear
            ? update_with_target(state, batch, report.chosen_lambda, target,
                                 report.chosen_weights, report)
            : update_logistic_with_target(state, batch, report.chosen_lambda, target,
                                          report.chosen_weights, config.irls, report);
    return {std::move(next), std::move(report)};
}

}  // namespace ridge_relay
