#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "ridge_relay/model_core.hpp"
#include "test_helpers.hpp"

using namespace ridge_relay;
using test::coefs;
using test::mat;
using test::vec;

TEST_CASE("registry is append-only with contiguous indices") {
    CovariateRegistry reg;
    CHECK(reg.add("a") == 0);
    CHECK(reg.add("b") == 1);
    CHECK(reg.add("a") == 0);
    CHECK(reg.size() == 2);
    CHECK(reg.index_of("b") == 1);
    CHECK_THROWS_AS(reg.index_of("zz"), RegistryError);
    CHECK_THROWS_AS(CovariateRegistry(std::vector<std::string>{"a", "a"}), RegistryError);
}

TEST_CASE("batch validation") {
    CHECK_NOTHROW(Batch(1, mat({{1, 2}}), vec({1}), {"a", "b"}, Family::linear));
    CHECK_THROWS_AS(Batch(1, mat({{1, 2}}), vec({1}), {"a"}, Family::linear), ValidationError);
    CHECK_THROWS_AS(Batch(1, mat({{1, 2}}), vec({1, 2}), {"a", "b"}, Family::linear), ValidationError);
    CHECK_THROWS_AS(Batch(0, mat({{1}}), vec({1}), {"a"}, Family::linear), ValidationError);
    CHECK_THROWS_AS(Batch(1, mat({{1}}), vec({0.5}), {"a"}, Family::logistic), ValidationError);
    CHECK_THROWS_AS(Batch(1, mat({{1, 1}}), vec({1}), {"a", "a"}, Family::linear), ValidationError);
    Eigen::MatrixXd bad = mat({{1}});
    bad(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(Batch(1, bad, vec({1}), {"a"}, Family::linear), ValidationError);
}

TEST_CASE("coefficient vector rejects non-finite values and unregistered keys") {
    CHECK_THROWS_AS(coefs({{"a", std::nan("")}}), ValidationError);
    CovariateRegistry reg(std::vector<std::string>{"a"});
    CHECK_THROWS_AS(coefs({{"b", 1.0}}).to_dense(reg), RegistryError);
    const auto v = coefs({{"a", 2.0}});
    CHECK(v.to_dense(CovariateRegistry(std::vector<std::string>{"z", "a"})) == vec({0.0, 2.0}));
}

TEST_CASE("align_batch") {
    CovariateRegistry ab(std::vector<std::string>{"a", "b"});
    SUBCASE("zero-fill of an absent column") {
        Batch batch(1, mat({{3}}), vec({0}), {"a"}, Family::linear);
        CHECK(align_batch(batch, ab) == mat({{3, 0}}));
    }
    SUBCASE("reordering only") {
        Batch batch(1, mat({{1, 2}}), vec({0}), {"b", "a"}, Family::linear);
        CHECK(align_batch(batch, ab) == mat({{2, 1}}));
    }
    SUBCASE("unknown name") {
        Batch batch(1, mat({{1}}), vec({0}), {"c"}, Family::linear);
        CHECK_THROWS_AS(align_batch(batch, ab), RegistryError);
    }
    SUBCASE("absolute mass is preserved") {
        std::mt19937_64 rng(3);
        Batch batch(1, oracle::random_matrix(7, 3, rng), oracle::random_vector(7, rng), {"q", "a", "r"},
                    Family::linear);
        CovariateRegistry reg(std::vector<std::string>{"r", "x", "a", "q", "y"});
        const Eigen::MatrixXd aligned = align_batch(batch, reg);
        CHECK(aligned.cwiseAbs().sum() == doctest::Approx(batch.X().cwiseAbs().sum()).epsilon(1e-15));
        CHECK(aligned.col(3) == batch.X().col(0));
        CHECK(aligned.col(1).isZero());
    }
}

TEST_CASE("assemble_target takes the latest estimate per coordinate") {
    SUBCASE("latest wins, unseen covariate falls back to zero") {
        EstimatorState state = EstimatorState::initial(Family::linear, coefs({{"a", 0.0}}));
        state.registry.add("b");
        state.history = {test::record(1, {{"a", 1.0}}), test::record(2, {{"a", 1.5}, {"b", 2.0}})};
        const std::vector<std::string> wanted{"a", "b", "c"};
        const auto target = assemble_target(state, wanted, coefs({{"a", 0.0}, {"b", 0.0}}));
        CHECK(target == coefs({{"a", 1.5}, {"b", 2.0}, {"c", 0.0}}));
    }
    SUBCASE("fallback only") {
        const auto state = EstimatorState::initial(Family::linear, coefs({{"a", 0.7}}));
        const std::vector<std::string> wanted{"a"};
        CHECK(assemble_target(state, wanted, coefs({{"a", 0.7}})) == coefs({{"a", 0.7}}));
    }
    SUBCASE("coordinate unobserved at t = 2 keeps its t = 1 value") {
        EstimatorState state = EstimatorState::initial(Family::linear, coefs({{"a", 0.0}, {"b", 0.0}}));
        auto second = test::record(2, {{"a", 2.0}, {"b", 99.0}});
        second.observed = {"a"};  // b was carried along but not observed
        state.history = {test::record(1, {{"a", 1.0}, {"b", 3.0}}), second};
        const std::vector<std::string> wanted{"a", "b"};
        const auto target = assemble_target(state, wanted, state.init_target);
        CHECK(target == coefs({{"a", 2.0}, {"b", 3.0}}));
        CHECK(assemble_target(state, wanted, state.init_target) == target);  // idempotent
    }
    SUBCASE("empty history and empty fallback") {
        EstimatorState state;
        const std::vector<std::string> wanted{"a"};
        CHECK_THROWS_AS(assemble_target(state, wanted, CoefficientVector{}), ConfigError);
    }
}

TEST_CASE("mixture_target") {
    SUBCASE("single target") {
        TargetSpec spec = TargetSpec::single(coefs({{"a", 2.0}}));
        const std::vector<double> w{1.0};
        CHECK(mixture_target(spec, w) == coefs({{"a", 2.0}}));
    }
    SUBCASE("midpoint") {
        TargetSpec spec{{coefs({{"a", 0.0}}), coefs({{"a", 4.0}})}, std::nullopt};
        const std::vector<double> w{0.5, 0.5};
        CHECK(mixture_target(spec, w) == coefs({{"a", 2.0}}));
    }
    SUBCASE("convex combination") {
        TargetSpec spec{{coefs({{"a", 1.0}, {"b", 0.0}}), coefs({{"a", 0.0}, {"b", 1.0}})}, std::nullopt};
        const std::vector<double> w{0.25, 0.75};
        CHECK(mixture_target(spec, w) == coefs({{"a", 0.25}, {"b", 0.75}}));
    }
    SUBCASE("degenerate weight returns that target exactly") {
        TargetSpec spec{{coefs({{"a", 0.1}, {"b", -3.3}}), coefs({{"a", 7.0}, {"b", 1e-300}})}, std::nullopt};
        const std::vector<double> w{0.0, 1.0};
        CHECK(mixture_target(spec, w) == spec.targets[1]);
    }
    SUBCASE("simplex violations") {
        TargetSpec spec{{coefs({{"a", 0.0}}), coefs({{"a", 4.0}})}, std::nullopt};
        const std::vector<double> over{0.6, 0.5};
        const std::vector<double> negative{-0.1, 1.1};
        const std::vector<double> slightly{0.5, 0.5 + 1e-10};
        CHECK_THROWS_AS(mixture_target(spec, over), ValidationError);
        CHECK_THROWS_AS(mixture_target(spec, negative), ValidationError);
        CHECK_THROWS_AS(mixture_target(spec, slightly), ValidationError);
        const std::vector<double> within{0.5, 0.5 + 1e-13};
        CHECK_NOTHROW(mixture_target(spec, within));
    }
}

TEST_CASE("append_update keeps the state invariants") {
    auto state = EstimatorState::initial(Family::linear, coefs({{"a", 0.0}}));
    auto batch = std::make_shared<const Batch>(1, mat({{1, 2}}), vec({1}), std::vector<std::string>{"a", "b"},
                                               Family::linear);
    const auto reg = extend_registry(state.registry, *batch);
    const auto next = append_update(state, batch, reg, vec({0.5, 0.25}), vec({0, 0}), 1.0, {1.0}, 0.1, 0,
                                    std::nullopt);
    CHECK(next.t == 1);
    CHECK(next.registry.names() == std::vector<std::string>{"a", "b"});
    CHECK(next.current == coefs({{"a", 0.5}, {"b", 0.25}}));
    CHECK_NOTHROW(next.check_invariants());
    CHECK(state.history.empty());  // input untouched
    CHECK_THROWS_AS(append_update(next, batch, reg, vec({0, 0}), vec({0, 0}), 1.0, {1.0}, 0, 0, std::nullopt),
                    ValidationError);
    auto wrong = std::make_shared<const Batch>(2, mat({{1}}), vec({1}), std::vector<std::string>{"a"},
                                               Family::logistic);
    CHECK_THROWS_AS(append_update(next, wrong, reg, vec({0, 0}), vec({0, 0}), 1.0, {1.0}, 0, 0, std::nullopt),
                    ValidationError);
}
