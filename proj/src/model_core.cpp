#include "ridge_relay/model_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace ridge_relay {

std::string_view to_string(Family family) noexcept {
    return family == Family::linear ? "linear" : "logistic";
}

Family parse_family(std::string_view text) {
    if (text == "linear") return Family::linear;
    if (text == "logistic") return Family::logistic;
    throw ValidationError("unknown model family '" + std::string(text) + "'");
}

// ---------------------------------------------------------------- registry

CovariateRegistry::CovariateRegistry(std::vector<std::string> names) {
    for (auto& name : names) {
        if (index_.contains(name))
            throw RegistryError("duplicate covariate name '" + name + "'");
        add(name);
    }
}

std::size_t CovariateRegistry::add(const std::string& name) {
    if (name.empty()) throw RegistryError("empty covariate name");
    auto [it, inserted] = index_.try_emplace(name, names_.size());
    if (inserted) names_.push_back(name);
    return it->second;
}

void CovariateRegistry::add_all(std::span<const std::string> names) {
    for (const auto& name : names) add(name);
}

std::optional<std::size_t> CovariateRegistry::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t CovariateRegistry::index_of(std::string_view name) const {
    if (auto idx = find(name)) return *idx;
    throw RegistryError("covariate '" + std::string(name) + "' is not registered");
}

// ------------------------------------------------------------------- batch

Batch::Batch(int t, Eigen::MatrixXd X, Eigen::VectorXd y, std::vector<std::string> covariates,
             Family family)
    : t_(t), X_(std::move(X)), y_(std::move(y)), covariates_(std::move(covariates)),
      family_(family) {
    if (t_ < 1) throw ValidationError("batch time index must be a positive integer");
    if (X_.cols() != static_cast<Eigen::Index>(covariates_.size()))
        throw ValidationError("batch has " + std::to_string(X_.cols()) + " columns but " +
                              std::to_string(covariates_.size()) + " covariate names");
    if (X_.rows() != y_.size())
        throw ValidationError("batch has " + std::to_string(X_.rows()) + " rows but " +
                              std::to_string(y_.size()) + " responses");
    std::set<std::string_view> seen;
    for (const auto& name : covariates_) {
        if (name.empty()) throw ValidationError("empty covariate name in batch");
        if (!seen.insert(name).second)
            throw ValidationError("duplicate covariate '" + name + "' in batch");
    }
    if (!X_.allFinite() || !y_.allFinite())
        throw ValidationError("batch contains non-finite values");
    if (family_ == Family::logistic) {
        for (Eigen::Index i = 0; i < y_.size(); ++i)
            if (y_[i] != 0.0 && y_[i] != 1.0)
                throw ValidationError("logistic batch response must be 0 or 1");
    }
}

Batch Batch::with_t(int t) const { return Batch(t, X_, y_, covariates_, family_); }

bool Batch::operator==(const Batch& other) const {
    if (t_ != other.t_ || family_ != other.family_ || covariates_ != other.covariates_ ||
        X_.rows() != other.X_.rows() || X_.cols() != other.X_.cols())
        return false;
    return same_bits({X_.data(), static_cast<std::size_t>(X_.size())},
                     {other.X_.data(), static_cast<std::size_t>(other.X_.size())}) &&
           same_bits({y_.data(), static_cast<std::size_t>(y_.size())},
                     {other.y_.data(), static_cast<std::size_t>(other.y_.size())});
}

// ------------------------------------------------------- coefficient vector

CoefficientVector::CoefficientVector(std::map<std::string, double> values)
    : values_(values.begin(), values.end()) {
    for (const auto& [name, value] : values_) {
        if (name.empty()) throw ValidationError("empty coefficient name");
        if (!std::isfinite(value))
            throw ValidationError("coefficient '" + name + "' is not finite");
    }
}

CoefficientVector CoefficientVector::zeros(std::span<const std::string> names) {
    std::map<std::string, double> values;
    for (const auto& name : names) values[name] = 0.0;
    return CoefficientVector(std::move(values));
}

CoefficientVector CoefficientVector::from_dense(const CovariateRegistry& registry,
                                                const Eigen::VectorXd& values) {
    return from_dense(registry.names(), values);
}

CoefficientVector CoefficientVector::from_dense(std::span<const std::string> names,
                                                const Eigen::VectorXd& values) {
    if (static_cast<Eigen::Index>(names.size()) != values.size())
        throw ValidationError("dense vector length does not match the name list");
    std::map<std::string, double> out;
    for (std::size_t j = 0; j < names.size(); ++j) out[names[j]] = values[static_cast<Eigen::Index>(j)];
    return CoefficientVector(std::move(out));
}

Eigen::VectorXd CoefficientVector::to_dense(const CovariateRegistry& registry,
                                            double missing) const {
    Eigen::VectorXd dense = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(registry.size()), missing);
    for (const auto& [name, value] : values_)
        dense[static_cast<Eigen::Index>(registry.index_of(name))] = value;
    return dense;
}

std::optional<double> CoefficientVector::get(std::string_view name) const {
    auto it = values_.find(name);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

double CoefficientVector::at(std::string_view name) const {
    if (auto v = get(name)) return *v;
    throw RegistryError("no coefficient named '" + std::string(name) + "'");
}

std::vector<std::string> CoefficientVector::names() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [name, _] : values_) out.push_back(name);
    return out;
}

bool operator==(const CoefficientVector& a, const CoefficientVector& b) noexcept {
    if (a.values_.size() != b.values_.size()) return false;
    auto ib = b.values_.begin();
    for (const auto& [name, value] : a.values_) {
        if (name != ib->first || !same_bits(value, ib->second)) return false;
        ++ib;
    }
    return true;
}

// ------------------------------------------------------------------ targets

void validate_simplex(std::span<const double> weights) {
    if (weights.empty()) throw ValidationError("weight vector is empty");
    double total = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0 || w > 1.0)
            throw ValidationError("mixture weight outside [0, 1]");
        total += w;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance)
        throw ValidationError("mixture weights do not sum to 1");
}

TargetSpec TargetSpec::single(CoefficientVector target) {
    TargetSpec spec;
    spec.targets.push_back(std::move(target));
    spec.weights = std::vector<double>{1.0};
    return spec;
}

void TargetSpec::validate() const {
    if (targets.empty()) throw ValidationError("target spec needs at least one target");
    if (weights) {
        if (weights->size() != targets.size())
            throw ValidationError("target spec has " + std::to_string(targets.size()) +
                                  " targets but " + std::to_string(weights->size()) +
                                  " weights");
        validate_simplex(*weights);
    }
}

CoefficientVector mixture_target(const TargetSpec& spec, std::span<const double> weights) {
    if (spec.targets.empty()) throw ValidationError("target spec needs at least one target");
    if (weights.size() != spec.targets.size())
        throw ValidationError("weight count does not match target count");
    validate_simplex(weights);
    const auto names = spec.targets.front().names();
    for (const auto& target : spec.targets)
        if (target.names() != names)
            throw ValidationError("mixture targets must share one covariate set");

    std::map<std::string, double> mixed;
    for (const auto& name : names) {
        double value = 0.0;
        for (std::size_t g = 0; g < spec.targets.size(); ++g)
            value += weights[g] * spec.targets[g].at(name);
        mixed[name] = value;
    }
    return CoefficientVector(std::move(mixed));
}

// -------------------------------------------------------------------- state

bool operator==(const HistoryRecord& a, const HistoryRecord& b) noexcept {
    return a.t == b.t && same_bits(a.lambda, b.lambda) && same_bits(a.weights, b.weights) &&
           a.estimate == b.estimate && a.observed == b.observed &&
           a.target_used == b.target_used && same_bits(a.fit_loss, b.fit_loss) &&
           a.iterations == b.iterations && a.selection == b.selection;
}

EstimatorState EstimatorState::initial(Family family, CoefficientVector init_target,
                                       std::string init_note) {
    EstimatorState state;
    state.family = family;
    state.registry.add_all(init_target.names());
    state.current = init_target;
    state.init_target = std::move(init_target);
    state.init_note = std::move(init_note);
    return state;
}

Eigen::Index EstimatorState::retained_samples() const {
    Eigen::Index total = 0;
    for (const auto& batch : retained) total += batch->n();
    return total;
}

void EstimatorState::check_invariants() const {
    int last_t = 0;
    for (const auto& record : history) {
        if (record.t <= last_t) throw StateError("history is not strictly increasing in t");
        last_t = record.t;
    }
    if (!history.empty()) {
        if (t != history.back().t) throw StateError("state t differs from the last history entry");
        if (!(current == history.back().estimate))
            throw StateError("current estimate differs from the last history entry");
    } else if (t != 0) {
        throw StateError("state without history must have t = 0");
    }
    for (const auto& name : current.names())
        if (!registry.contains(name)) throw StateError("current estimate has unregistered '" + name + "'");
    for (const auto& batch : retained)
        for (const auto& name : batch->covariates())
            if (!registry.contains(name))
                throw StateError("retained batch has unregistered '" + name + "'");
}

bool operator==(const EstimatorState& a, const EstimatorState& b) {
    if (a.family != b.family || a.t != b.t || !(a.registry == b.registry) ||
        !(a.current == b.current) || !(a.init_target == b.init_target) ||
        a.init_note != b.init_note || a.history != b.history ||
        a.retained.size() != b.retained.size())
        return false;
    for (std::size_t i = 0; i < a.retained.size(); ++i)
        if (!(*a.retained[i] == *b.retained[i])) return false;
    return true;
}

// --------------------------------------------------------------- operations

Eigen::MatrixXd align_batch(const Batch& batch, const CovariateRegistry& registry) {
    Eigen::MatrixXd aligned = Eigen::MatrixXd::Zero(batch.n(), static_cast<Eigen::Index>(registry.size()));
    const auto& names = batch.covariates();
    for (std::size_t j = 0; j < names.size(); ++j)
        aligned.col(static_cast<Eigen::Index>(registry.index_of(names[j]))) =
            batch.X().col(static_cast<Eigen::Index>(j));
    return aligned;
}

CoefficientVector assemble_target(const EstimatorState& state,
                                  std::span<const std::string> batch_covariates,
                                  const CoefficientVector& fallback) {
    if (state.history.empty() && fallback.empty())
        throw ConfigError("no history and no fallback target to assemble a target from");

    std::vector<std::string> wanted = state.registry.names();
    for (const auto& name : batch_covariates)
        if (!state.registry.contains(name)) wanted.push_back(name);

    std::map<std::string, double> target;
    for (const auto& name : wanted) {
        std::optional<double> value;
        for (auto it = state.history.rbegin(); it != state.history.rend() && !value; ++it) {
            const auto& observed = it->observed;
            if (std::find(observed.begin(), observed.end(), name) != observed.end())
                value = it->estimate.get(name);
        }
        target[name] = value ? *value : fallback.get(name).value_or(0.0);
    }
    return CoefficientVector(std::move(target));
}

CovariateRegistry extend_registry(const CovariateRegistry& registry, const Batch& batch) {
    CovariateRegistry extended = registry;
    extended.add_all(batch.covariates());
    return extended;
}

EstimatorState append_update(const EstimatorState& state, std::shared_ptr<const Batch> batch,
                             CovariateRegistry registry, const Eigen::VectorXd& estimate,
                             const Eigen::VectorXd& target_used, double lambda,
                             std::vector<double> weights, double fit_loss, int iterations,
                             std::optional<SelectionReport> selection) {
    if (batch->t() <= state.t)
        throw ValidationError("batch t = " + std::to_string(batch->t()) +
                              " does not follow state t = " + std::to_string(state.t));
    if (batch->family() != state.family)
        throw ValidationError("batch family does not match the estimator family");

    EstimatorState next = state;
    next.registry = std::move(registry);
    next.t = batch->t();
    next.current = CoefficientVector::from_dense(next.registry, estimate);

    HistoryRecord record;
    record.t = batch->t();
    record.lambda = lambda;
    record.weights = std::move(weights);
    record.estimate = next.current;
    record.observed = batch->covariates();
    record.target_used = CoefficientVector::from_dense(next.registry, target_used);
    record.fit_loss = fit_loss;
    record.iterations = iterations;
    record.selection = std::move(selection);
    next.history.push_back(std::move(record));
    next.retained.push_back(std::move(batch));
    return next;
}

}  // namespace ridge_relay
