#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <set>

#include "oracles.hpp"
#include "ridge_relay/linear_estimator.hpp"
#include "ridge_relay/penalty_tuning.hpp"
#include "test_helpers.hpp"

using namespace ridge_relay;
using test::coefs;
using test::mat;
using test::vec;

namespace {

std::vector<int> fold_sizes(const FoldPlan& plan) {
    std::vector<int> sizes(static_cast<std::size_t>(plan.K), 0);
    for (int label : plan.assignments) ++sizes[static_cast<std::size_t>(label)];
    std::sort(sizes.rbegin(), sizes.rend());
    return sizes;
}

std::vector<std::string> names(int p) {
    std::vector<std::string> out;
    for (int j = 0; j < p; ++j) out.push_back("x" + std::to_string(j));
    return out;
}

Batch linear_batch(int t, const Eigen::VectorXd& beta, int n, double noise_sd, std::mt19937_64& rng) {
    const Eigen::MatrixXd X = oracle::random_matrix(n, static_cast<int>(beta.size()), rng);
    const Eigen::VectorXd y = X * beta + oracle::random_vector(n, rng, noise_sd);
    return Batch(t, X, y, names(static_cast<int>(beta.size())), Family::linear);
}

// A state after `batches` updates on informative data y = X beta + noise.
EstimatorState informative_state(const Eigen::VectorXd& beta, int batches, int n, std::mt19937_64& rng) {
    auto state = EstimatorState::initial(Family::linear, CoefficientVector::zeros(names(static_cast<int>(beta.size()))));
    for (int t = 1; t <= batches; ++t) state = update(state, linear_batch(t, beta, n, 1.0, rng), 1.0);
    return state;
}

PenaltySearchConfig small_grid_config(bool constrained, std::uint64_t seed = 1) {
    PenaltySearchConfig config;
    config.grid = PenaltySearchConfig::log_grid(1e-3, 1e4, 15);
    config.constrained = constrained;
    config.seed = seed;
    return config;
}

}  // namespace

TEST_CASE("make_folds") {
    SUBCASE("even split") {
        const auto plan = make_folds(6, 3, 11);
        CHECK(fold_sizes(plan) == std::vector<int>{2, 2, 2});
        CHECK_NOTHROW(plan.validate());
    }
    SUBCASE("remainder") {
        CHECK(fold_sizes(make_folds(7, 3, 11)) == std::vector<int>{3, 2, 2});
    }
    SUBCASE("perfect stratification") {
        const Eigen::VectorXd strata = vec({0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto plan = make_folds(10, 5, seed, strata);
            for (int k = 0; k < 5; ++k) {
                const auto test = plan.test_indices(k);
                REQUIRE(test.size() == 2);
                CHECK(strata[test[0]] + strata[test[1]] == 1.0);
            }
        }
    }
    SUBCASE("uneven strata stay within one per fold") {
        Eigen::VectorXd strata(23);
        for (Eigen::Index i = 0; i < 23; ++i) strata[i] = i < 8 ? 1.0 : 0.0;
        const auto plan = make_folds(23, 4, 5, strata);
        for (double label : {0.0, 1.0}) {
            std::vector<int> per_fold(4, 0);
            for (Eigen::Index i = 0; i < 23; ++i)
                if (strata[i] == label) ++per_fold[static_cast<std::size_t>(plan.assignments[static_cast<std::size_t>(i)])];
            const auto [lo, hi] = std::minmax_element(per_fold.begin(), per_fold.end());
            CHECK(*hi - *lo <= 1);
        }
        CHECK_NOTHROW(plan.validate());
    }
    SUBCASE("every sample in exactly one test fold") {
        const auto plan = make_folds(13, 4, 2);
        std::multiset<Eigen::Index> seen;
        for (int k = 0; k < 4; ++k)
            for (auto i : plan.test_indices(k)) seen.insert(i);
        CHECK(seen.size() == 13);
        CHECK(std::set<Eigen::Index>(seen.begin(), seen.end()).size() == 13);
    }
    SUBCASE("seeded and shuffled") {
        CHECK(make_folds(30, 5, 4).assignments == make_folds(30, 5, 4).assignments);
        CHECK(make_folds(30, 5, 4).assignments != make_folds(30, 5, 5).assignments);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(make_folds(3, 4, 0), ValidationError);
        CHECK_THROWS_AS(make_folds(3, 1, 0), ValidationError);
        FoldPlan bad{{0, 0, 0, 1}, 3};
        CHECK_THROWS_AS(bad.validate(), ValidationError);
    }
}

TEST_CASE("log grid and lattice") {
    const auto grid = PenaltySearchConfig::log_grid(1e-4, 1e6, 50);
    REQUIRE(grid.size() == 50);
    CHECK(grid.front() == 1e-4);
    CHECK(grid.back() == 1e6);
    CHECK(std::is_sorted(grid.begin(), grid.end()));
    CHECK(std::log10(grid[1] / grid[0]) == doctest::Approx(10.0 / 49.0));

    CHECK(simplex_lattice(2, 0.1).size() == 11);
    CHECK(simplex_lattice(3, 0.1).size() == 66);
    for (const auto& w : simplex_lattice(3, 0.1)) CHECK_NOTHROW(validate_simplex(w));
    CHECK_THROWS_AS(simplex_lattice(2, 0.3), ValidationError);
}

TEST_CASE("cv_score") {
    std::mt19937_64 rng(21);
    SUBCASE("noiseless data with tiny lambda") {
        const Eigen::MatrixXd X = oracle::random_matrix(40, 3, rng);
        const Eigen::VectorXd y = X * vec({1, -2, 0.5});
        const auto folds = make_folds(40, 5, 3);
        CHECK(cv_score(Family::linear, X, y, 1e-8, Eigen::VectorXd::Zero(3), folds) < 1e-12);
    }
    SUBCASE("huge lambda toward a zero target scores the zero predictor") {
        const Eigen::MatrixXd X = oracle::random_matrix(20, 2, rng);
        const Eigen::VectorXd y = oracle::random_vector(20, rng) + Eigen::VectorXd::Constant(20, 3.0);
        const auto folds = make_folds(20, 4, 3);
        CHECK(cv_score(Family::linear, X, y, 1e12, Eigen::VectorXd::Zero(2), folds) ==
              doctest::Approx(y.squaredNorm() / 4.0).epsilon(1e-9));
    }
    SUBCASE("two folds on four samples by hand") {
        const Eigen::MatrixXd X = mat({{1}, {2}, {-1}, {3}});
        const Eigen::VectorXd y = vec({1.5, 1.0, -2.0, 4.0});
        const FoldPlan folds{{0, 1, 1, 0}, 2};
        // fold 0 trains on samples 1, 2: (4 + 1 + 1) b = 2 + 2 + 1 * 0.5 -> b = 4.5 / 6
        const double b0 = (2.0 * 1.0 + (-1.0) * (-2.0) + 0.5) / (4.0 + 1.0 + 1.0);
        const double sse0 = std::pow(1.5 - b0, 2) + std::pow(4.0 - 3.0 * b0, 2);
        // fold 1 trains on samples 0, 3
        const double b1 = (1.5 + 12.0 + 0.5) / (1.0 + 9.0 + 1.0);
        const double sse1 = std::pow(1.0 - 2.0 * b1, 2) + std::pow(-2.0 + b1, 2);
        CHECK(cv_score(Family::linear, X, y, 1.0, vec({0.5}), folds) ==
              doctest::Approx((sse0 + sse1) / 2.0).epsilon(1e-14));
    }
    SUBCASE("logistic score is the held-out minus log-likelihood") {
        const Eigen::MatrixXd X = oracle::random_matrix(30, 2, rng);
        Eigen::VectorXd y(30);
        for (Eigen::Index i = 0; i < 30; ++i) y[i] = (i % 3 == 0) ? 1.0 : 0.0;
        const auto folds = make_folds(30, 3, 1, y);
        const Eigen::VectorXd target = vec({0.2, -0.1});
        double expected = 0.0;
        for (int k = 0; k < 3; ++k) {
            const auto train = folds.train_indices(k), test = folds.test_indices(k);
            const Eigen::VectorXd b = oracle::gradient_ascent_logistic(oracle::rows(X, train), oracle::rows(y, train),
                                                                       2.0, target);
            expected -= oracle::loglik(oracle::rows(X, test), oracle::rows(y, test), b);
        }
        CHECK(cv_score(Family::logistic, X, y, 2.0, target, folds) == doctest::Approx(expected / 3.0).epsilon(1e-8));
    }
    SUBCASE("non-converging fold gives +inf") {
        const Eigen::MatrixXd X = oracle::random_matrix(12, 2, rng);
        Eigen::VectorXd y(12);
        for (Eigen::Index i = 0; i < 12; ++i) y[i] = i % 2;
        IrlsConfig irls;
        irls.max_iter = 1;
        irls.tol = 1e-300;
        const auto folds = make_folds(12, 3, 1, y);
        CHECK(std::isinf(cv_score(Family::logistic, X, y, 0.5, Eigen::VectorXd::Constant(2, 3.0), folds, irls)));
    }
    SUBCASE("lambda must be positive") {
        const auto folds = make_folds(4, 2, 0);
        CHECK_THROWS_AS(cv_score(Family::linear, mat({{1}, {2}, {3}, {4}}), vec({1, 2, 3, 4}), 0.0, vec({0}), folds),
                        ValidationError);
    }
}

TEST_CASE("LOOCV through the generic path equals an explicit leave-one-out loop") {
    std::mt19937_64 rng(5);
    for (int n : {4, 7, 12}) {
        const Eigen::MatrixXd X = oracle::random_matrix(n, 3, rng);
        const Eigen::VectorXd y = oracle::random_vector(n, rng);
        const Eigen::VectorXd target = vec({0.3, 0.0, -1.0});
        for (double lambda : {0.01, 1.0, 50.0}) {
            double expected = 0.0;
            for (int i = 0; i < n; ++i) {
                std::vector<Eigen::Index> train;
                for (int j = 0; j < n; ++j)
                    if (j != i) train.push_back(j);
                const Eigen::VectorXd b =
                    oracle::ridge_by_inverse(oracle::rows(X, train), oracle::rows(y, train), lambda, target);
                expected += std::pow(y[i] - X.row(i).dot(b), 2);
            }
            expected /= n;
            const auto folds = make_folds(n, n, 9);
            CHECK(std::abs(cv_score(Family::linear, X, y, lambda, target, folds) - expected) < 1e-10);

            // The same number through select_penalty's engine.
            const Batch batch(1, X, y, names(3), Family::linear);
            const auto state = EstimatorState::initial(
                Family::linear, coefs({{"x0", 0.3}, {"x1", 0.0}, {"x2", -1.0}}));
            PenaltySearchConfig config;
            config.grid = {lambda};
            config.loocv = true;
            config.constrained = false;
            const auto report = select_penalty(state, batch, config, default_targets(state, batch));
            CHECK(report.folds == n);
            CHECK(std::abs(report.cv_curve[0].score - expected) < 1e-10);
        }
    }
}

TEST_CASE("constraint_terms") {
    std::mt19937_64 rng(8);
    SUBCASE("empty history is vacuous") {
        const auto state = EstimatorState::initial(Family::linear, CoefficientVector::zeros(names(2)));
        const Batch batch = linear_batch(1, vec({1, 1}), 10, 1.0, rng);
        CHECK_FALSE(constraint_terms(state, batch, 1.0, state.init_target, make_folds(10, 5, 0)).has_value());
    }
    SUBCASE("f_t = 1/t for equal batch sizes") {
        auto state = EstimatorState::initial(Family::linear, CoefficientVector::zeros(names(2)));
        for (int t = 1; t <= 4; ++t) {
            const Batch batch = linear_batch(t, vec({1, -1}), 25, 1.0, rng);
            if (t > 1) {
                const auto terms = constraint_terms(state, batch, 1.0, state.current, make_folds(25, 5, 0));
                REQUIRE(terms.has_value());
                CHECK(terms->f_t == 1.0 / t);
            }
            state = update(state, batch, 1.0);
        }
    }
    SUBCASE("single historic batch identical to the new one, by enumeration") {
        const Batch first = linear_batch(1, vec({2, -1}), 9, 0.5, rng);
        const auto state = update(EstimatorState::initial(Family::linear, CoefficientVector::zeros(names(2))),
                                  first, 3.0);
        const Batch second(2, first.X(), first.y(), first.covariates(), Family::linear);
        const auto folds = make_folds(9, 3, 17);
        const double lambda = 2.5;
        const Eigen::VectorXd previous = state.current.to_dense(state.registry);
        const double rhs = (first.y() - first.X() * previous).squaredNorm();
        double historic = 0.0;
        for (int k = 0; k < 3; ++k) {
            const auto train = folds.train_indices(k);
            const Eigen::VectorXd b = oracle::ridge_by_inverse(oracle::rows(first.X(), train),
                                                               oracle::rows(first.y(), train), lambda, previous);
            historic += (first.y() - first.X() * b).squaredNorm();
        }
        const double lhs = 0.5 * historic / 3.0;
        const auto terms = constraint_terms(state, second, lambda, state.current, folds);
        REQUIRE(terms.has_value());
        CHECK(terms->f_t == 0.5);
        CHECK(terms->rhs == doctest::Approx(rhs).epsilon(1e-12));
        CHECK(terms->lhs == doctest::Approx(lhs).epsilon(1e-10));
    }
    SUBCASE("historic designs are zero-filled for new covariates") {
        auto state = EstimatorState::initial(Family::linear, CoefficientVector::zeros(names(2)));
        const Batch first = linear_batch(1, vec({1, 2}), 8, 1.0, rng);
        state = update(state, first, 1.0);
        const Eigen::MatrixXd X2 = oracle::random_matrix(8, 3, rng);
        const Batch second(2, X2, oracle::random_vector(8, rng), {"x0", "x1", "new"}, Family::linear);
        const auto folds = make_folds(8, 4, 3);
        const auto target = assemble_target(state, second.covariates(), state.init_target);
        const Eigen::VectorXd t3 = vec({target.at("new"), target.at("x0"), target.at("x1")});
        double historic = 0.0;
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(8, 3);  // registry order: new, x0, x1
        H.rightCols(2) = first.X();
        Eigen::MatrixXd X2r(8, 3);
        X2r << X2.col(2), X2.col(0), X2.col(1);
        for (int k = 0; k < 4; ++k) {
            const auto train = folds.train_indices(k);
            const Eigen::VectorXd b =
                oracle::ridge_by_inverse(oracle::rows(X2r, train), oracle::rows(second.y(), train), 0.7, t3);
            historic += (first.y() - H * b).squaredNorm();
        }
        const auto terms = constraint_terms(state, second, 0.7, target, folds);
        REQUIRE(terms.has_value());
        CHECK(terms->lhs == doctest::Approx(0.5 * historic / 4.0).epsilon(1e-10));
    }
    SUBCASE("feasible at lambda = 1e12 on random states") {
        for (int rep = 0; rep < 50; ++rep) {
            const int p = 1 + rep % 4;
            const Eigen::VectorXd beta = oracle::random_vector(p, rng, 2.0);
            const auto state = informative_state(beta, 1 + rep % 3, 6 + rep % 5, rng);
            const Batch batch = linear_batch(state.t + 1, oracle::random_vector(p, rng), 10, 1.0, rng);
            const auto terms = constraint_terms(state, batch, 1e12, state.current, make_folds(10, 5, rep));
            REQUIRE(terms.has_value());
            CHECK(terms->lhs < terms->rhs);
        }
    }
}

TEST_CASE("select_penalty") {
    std::mt19937_64 rng(13);
    SUBCASE("single-candidate grid reports its feasibility") {
        const auto state = informative_state(vec({1, 1}), 2, 10, rng);
        const Batch batch = linear_batch(3, vec({1, 1}), 10, 1.0, rng);
        PenaltySearchConfig config;
        config.grid = {3.0};
        const auto report = select_penalty(state, batch, config, default_targets(state, batch));
        CHECK(report.chosen_lambda == 3.0);
        REQUIRE(report.cv_curve.size() == 1);
        CHECK(report.constraint_evaluated);
        CHECK(std::isfinite(report.cv_curve[0].lhs));
        CHECK(report.cv_curve[0].feasible == (report.cv_curve[0].lhs <= report.cv_curve[0].rhs));
        CHECK(report.fallback_used == !report.cv_curve[0].feasible);
    }
    SUBCASE("unconstrained at t = 1 leaves the constraint unevaluated") {
        const auto state = EstimatorState::initial(Family::linear, CoefficientVector::zeros(names(2)));
        const auto report = select_penalty(state, linear_batch(1, vec({1, 1}), 10, 1.0, rng), small_grid_config(true),
                                           TargetSpec::single(state.init_target));
        CHECK_FALSE(report.constraint_evaluated);
        CHECK_FALSE(report.fallback_used);
        for (const auto& point : report.cv_curve) CHECK(std::isnan(point.lhs));
    }
    SUBCASE("data generated at the target: both modes favor the largest lambda") {
        const Eigen::VectorXd beta = vec({1.5, -0.5, 2.0});
        const auto state = informative_state(beta, 2, 15, rng);
        const auto exact = TargetSpec::single(CoefficientVector::from_dense(state.registry, beta));
        const Batch batch = linear_batch(3, beta, 30, 1.0, rng);
        const auto free = select_penalty(state, batch, small_grid_config(false), exact);
        const auto constrained = select_penalty(state, batch, small_grid_config(true), exact);
        CHECK(free.chosen_lambda == constrained.chosen_lambda);
        CHECK(free.chosen_lambda == small_grid_config(false).grid.back());
        for (std::size_t i = 1; i < free.cv_curve.size(); ++i)
            CHECK(free.cv_curve[i].score <= free.cv_curve[i - 1].score * (1.0 + 1e-12));
    }
    SUBCASE("ties go to the larger lambda") {
        // y = 0 and a zero target: every fold fit is exactly zero.
        const Batch batch(1, oracle::random_matrix(10, 2, rng), Eigen::VectorXd::Zero(10), names(2), Family::linear);
        const auto state = EstimatorState::initial(Family::linear, CoefficientVector::zeros(names(2)));
        const auto report = select_penalty(state, batch, small_grid_config(false), default_targets(state, batch));
        for (const auto& point : report.cv_curve) REQUIRE(point.score == 0.0);
        CHECK(report.chosen_lambda == small_grid_config(false).grid.back());
    }
    SUBCASE("odd-one-out batch: constrained lambda is at least the unconstrained one") {
        int agree = 0;
        for (int rep = 0; rep < 100; ++rep) {
            std::mt19937_64 local(1000 + rep);
            const Eigen::VectorXd beta = vec({2, -1, 1});
            const auto state = informative_state(beta, 3, 20, local);
            const Batch noise(4, oracle::random_matrix(20, 3, local), oracle::random_vector(20, local), names(3),
                              Family::linear);
            const auto spec = default_targets(state, noise);
            const auto free = select_penalty(state, noise, small_grid_config(false, rep), spec);
            const auto constrained = select_penalty(state, noise, small_grid_config(true, rep), spec);
            if (constrained.chosen_lambda >= free.chosen_lambda) ++agree;
        }
        CHECK(agree >= 90);
    }
    SUBCASE("constrained choice lies in the feasible set unless fallback") {
        for (int rep = 0; rep < 30; ++rep) {
            const Eigen::VectorXd beta = oracle::random_vector(3, rng);
            const auto state = informative_state(beta, 2, 8, rng);
            const Batch batch = linear_batch(3, oracle::random_vector(3, rng, 2.0), 8, 1.0, rng);
            const auto report = select_penalty(state, batch, small_grid_config(true, rep), default_targets(state, batch));
            const auto it = std::find_if(report.cv_curve.begin(), report.cv_curve.end(), [&](const CvPoint& c) {
                return c.lambda == report.chosen_lambda;
            });
            REQUIRE(it != report.cv_curve.end());
            CHECK((it->feasible || report.fallback_used));
            if (!report.fallback_used)
                for (const auto& c : report.cv_curve)
                    if (c.feasible) CHECK(it->score <= c.score);
        }
    }
    SUBCASE("fallback when no grid point is feasible") {
        // An informative history and a noise batch with only small lambdas on offer.
        const auto state = informative_state(vec({3, -3}), 3, 30, rng);
        const Batch noise(4, oracle::random_matrix(30, 2, rng), oracle::random_vector(30, rng, 5.0), names(2),
                          Family::linear);
        PenaltySearchConfig config;
        config.grid = {1e-4, 1e-3};
        const auto report = select_penalty(state, noise, config, default_targets(state, noise));
        REQUIRE_FALSE(report.cv_curve[0].feasible);
        REQUIRE_FALSE(report.cv_curve[1].feasible);
        CHECK(report.fallback_used);
        CHECK(report.chosen_lambda == 1e-3);
    }
    SUBCASE("all candidates disqualified") {
        Eigen::VectorXd y(12);
        for (Eigen::Index i = 0; i < 12; ++i) y[i] = i % 2;
        const Batch batch(1, oracle::random_matrix(12, 2, rng), y, names(2), Family::logistic);
        const auto state = EstimatorState::initial(Family::logistic, coefs({{"x0", 5.0}, {"x1", -5.0}}));
        PenaltySearchConfig config = small_grid_config(false);
        config.K = 3;
        config.irls.max_iter = 1;
        config.irls.tol = 1e-300;
        CHECK_THROWS_AS(select_penalty(state, batch, config, default_targets(state, batch)), SelectionError);
    }
    SUBCASE("deterministic, independent of the worker count") {
        const auto state = informative_state(vec({1, 2}), 2, 12, rng);
        const Batch batch = linear_batch(3, vec({1, 2}), 12, 1.0, rng);
        const auto config = small_grid_config(true, 42);
        const auto a = select_penalty(state, batch, config, default_targets(state, batch));
        ::setenv("RIDGE_RELAY_THREADS", "1", 1);
        const auto b = select_penalty(state, batch, config, default_targets(state, batch));
        ::unsetenv("RIDGE_RELAY_THREADS");
        CHECK(a == b);
    }
    SUBCASE("mixture weights follow the informative target") {
        const Eigen::VectorXd beta = vec({2, -2, 1});
        const auto state = EstimatorState::initial(Family::linear, CoefficientVector::zeros(names(3)));
        const Batch batch = linear_batch(1, beta, 12, 0.5, rng);
        TargetSpec spec{{CoefficientVector::zeros(names(3)), CoefficientVector::from_dense(state.registry, beta)},
                        std::nullopt};
        const auto report = select_penalty(state, batch, small_grid_config(false), spec);
        CHECK(report.cv_curve.size() == 15 * 11);
        REQUIRE(report.chosen_weights.size() == 2);
        CHECK(report.chosen_weights[1] >= 0.7);
        CHECK_THROWS_AS(select_penalty(state, batch, small_grid_config(false),
                                       TargetSpec{{CoefficientVector::zeros(names(3))}, std::nullopt}),
                        ValidationError);
    }
}

TEST_CASE("update_with_selection applies the chosen lambda") {
    std::mt19937_64 rng(31);
    const auto state = informative_state(vec({1, -1}), 1, 10, rng);
    const Batch batch = linear_batch(2, vec({1, -1}), 10, 1.0, rng);
    const auto [next, report] = update_with_selection(state, batch, small_grid_config(true));
    const auto manual = update(state, batch, report.chosen_lambda);
    CHECK(next.current == manual.current);
    REQUIRE(next.history.back().selection.has_value());
    CHECK(*next.history.back().selection == report);
    CHECK(next.history.back().lambda == report.chosen_lambda);
}
