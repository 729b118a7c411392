#pragma once

#include <bit>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace ridge_relay {

/// Bitwise double equality: NaN equals NaN, and 0.0 differs from -0.0.
inline bool same_bits(double a, double b) noexcept {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

inline bool same_bits(std::span<const double> a, std::span<const double> b) noexcept {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!same_bits(a[i], b[i])) return false;
    return true;
}

/// One evaluated penalty candidate. `lhs`/`rhs` are NaN when no history
/// constraint was evaluated.
struct CvPoint {
    double lambda = 0.0;
    std::vector<double> weights;
    double score = std::numeric_limits<double>::infinity();
    bool feasible = true;
    double lhs = std::numeric_limits<double>::quiet_NaN();
    double rhs = std::numeric_limits<double>::quiet_NaN();

    friend bool operator==(const CvPoint& a, const CvPoint& b) noexcept {
        return same_bits(a.lambda, b.lambda) && same_bits(a.weights, b.weights) &&
               same_bits(a.score, b.score) && a.feasible == b.feasible &&
               same_bits(a.lhs, b.lhs) && same_bits(a.rhs, b.rhs);
    }
};

/// Outcome of a penalty search, kept in the update history.
struct SelectionReport {
    double chosen_lambda = 0.0;
    std::vector<double> chosen_weights;
    std::vector<CvPoint> cv_curve;
    bool constrained = false;
    // True when the history constraint was actually evaluated (history non-empty).
    bool constraint_evaluated = false;
    bool fallback_used = false;
    double f_t = std::numeric_limits<double>::quiet_NaN();
    int folds = 0;

    friend bool operator==(const SelectionReport& a, const SelectionReport& b) noexcept {
        return same_bits(a.chosen_lambda, b.chosen_lambda) &&
               same_bits(a.chosen_weights, b.chosen_weights) && a.cv_curve == b.cv_curve &&
               a.constrained == b.constrained &&
               a.constraint_evaluated == b.constraint_evaluated &&
               a.fallback_used == b.fallback_used && same_bits(a.f_t, b.f_t) &&
               a.folds == b.folds;
    }
};

}  // namespace ridge_relay
