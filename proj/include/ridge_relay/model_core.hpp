#pragma once

// Domain model shared by every estimator: covariate registry, batches,
// named coefficient vectors, shrinkage targets and the sequential
// estimator state.

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ridge_relay/diagnostics.hpp"
#include "ridge_relay/errors.hpp"

namespace ridge_relay {

enum class Family { linear, logistic };

std::string_view to_string(Family family) noexcept;
Family parse_family(std::string_view text);

inline constexpr double kSimplexTolerance = 1e-12;

/// Append-only, ordered set of covariate names. Index of a name never changes.
class CovariateRegistry {
public:
    CovariateRegistry() = default;
    explicit CovariateRegistry(std::vector<std::string> names);

    /// Registers `name` if absent; returns its index either way.
    std::size_t add(const std::string& name);
    void add_all(std::span<const std::string> names);

    std::optional<std::size_t> find(std::string_view name) const;
    /// Throws RegistryError for unknown names.
    std::size_t index_of(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name).has_value(); }

    const std::vector<std::string>& names() const noexcept { return names_; }
    std::size_t size() const noexcept { return names_.size(); }

    bool operator==(const CovariateRegistry& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// One study's data. Rows are samples, columns follow `covariates()`.
class Batch {
public:
    Batch(int t, Eigen::MatrixXd X, Eigen::VectorXd y, std::vector<std::string> covariates,
          Family family);

    int t() const noexcept { return t_; }
    const Eigen::MatrixXd& X() const noexcept { return X_; }
    const Eigen::VectorXd& y() const noexcept { return y_; }
    const std::vector<std::string>& covariates() const noexcept { return covariates_; }
    Family family() const noexcept { return family_; }
    Eigen::Index n() const noexcept { return X_.rows(); }
    Eigen::Index p() const noexcept { return X_.cols(); }

    /// Same data, different time index.
    Batch with_t(int t) const;

    bool operator==(const Batch& other) const;

private:
    int t_;
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    std::vector<std::string> covariates_;
    Family family_;
};

/// Regression coefficients keyed by covariate name.
class CoefficientVector {
public:
    CoefficientVector() = default;
    explicit CoefficientVector(std::map<std::string, double> values);

    static CoefficientVector zeros(std::span<const std::string> names);
    static CoefficientVector from_dense(const CovariateRegistry& registry,
                                        const Eigen::VectorXd& values);
    static CoefficientVector from_dense(std::span<const std::string> names,
                                        const Eigen::VectorXd& values);

    /// Dense vector in registry order; names this vector lacks get `missing`.
    /// Throws RegistryError if a key is not registered.
    Eigen::VectorXd to_dense(const CovariateRegistry& registry, double missing = 0.0) const;

    std::optional<double> get(std::string_view name) const;
    double at(std::string_view name) const;
    bool contains(std::string_view name) const { return get(name).has_value(); }
    std::vector<std::string> names() const;

    const std::map<std::string, double, std::less<>>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    /// Bitwise equality of values.
    friend bool operator==(const CoefficientVector& a, const CoefficientVector& b) noexcept;

private:
    std::map<std::string, double, std::less<>> values_;
};

/// One or more shrinkage targets with optional fixed simplex weights.
/// `weights == std::nullopt` marks the weights as "to be tuned".
struct TargetSpec {
    std::vector<CoefficientVector> targets;
    std::optional<std::vector<double>> weights;

    static TargetSpec single(CoefficientVector target);
    std::size_t size() const noexcept { return targets.size(); }
    void validate() const;
};

/// Throws ValidationError unless every weight is in [0, 1] and they sum to 1
/// within kSimplexTolerance.
void validate_simplex(std::span<const double> weights);

struct HistoryRecord {
    int t = 0;
    double lambda = 0.0;
    std::vector<double> weights;
    CoefficientVector estimate;      // over the full registry at time t
    std::vector<std::string> observed;  // covariates present in the batch at t
    CoefficientVector target_used;
    double fit_loss = 0.0;  // residual SSE (linear) or minus log-likelihood (logistic) on batch t
    int iterations = 0;     // IRLS iterations; 0 for the closed-form fit
    std::optional<SelectionReport> selection;

    friend bool operator==(const HistoryRecord& a, const HistoryRecord& b) noexcept;
};

/// Sequence of updated estimates plus the raw batches the history
/// constraint needs. Treated as an immutable value: updates return a new state.
struct EstimatorState {
    Family family = Family::linear;
    int t = 0;
    CovariateRegistry registry;
    CoefficientVector current;
    CoefficientVector init_target;
    std::string init_note;
    std::vector<HistoryRecord> history;
    std::vector<std::shared_ptr<const Batch>> retained;

    /// Fresh state whose registry is seeded from the init target's names.
    static EstimatorState initial(Family family, CoefficientVector init_target,
                                  std::string init_note = "zero");

    Eigen::Index retained_samples() const;
    /// Throws StateError on broken invariants.
    void check_invariants() const;

    friend bool operator==(const EstimatorState& a, const EstimatorState& b);
};

/// Design matrix over the full registry; absent covariates become zero columns.
Eigen::MatrixXd align_batch(const Batch& batch, const CovariateRegistry& registry);

/// Per-coordinate most recent estimate over registry names plus `batch_covariates`;
/// coordinates never observed take the fallback value (0 when the fallback lacks them).
CoefficientVector assemble_target(const EstimatorState& state,
                                  std::span<const std::string> batch_covariates,
                                  const CoefficientVector& fallback);

/// Coordinate-wise convex combination of the spec's targets.
CoefficientVector mixture_target(const TargetSpec& spec, std::span<const double> weights);

/// Registry extended with any names the batch introduces.
CovariateRegistry extend_registry(const CovariateRegistry& registry, const Batch& batch);

/// Produces the successor state after a fit on `batch`. `registry` must already
/// include the batch covariates and `estimate` is in its order.
EstimatorState append_update(const EstimatorState& state, std::shared_ptr<const Batch> batch,
                             CovariateRegistry registry, const Eigen::VectorXd& estimate,
                             const Eigen::VectorXd& target_used, double lambda,
                             std::vector<double> weights, double fit_loss, int iterations,
                             std::optional<SelectionReport> selection);

}  // namespace ridge_relay
