#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "grade/model.hpp"

namespace grade {

// Counter-based pseudo-random stream: output i is a fixed mix of (key, i),
// so every (seed, pair-id) gets an independent, platform-stable sequence.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    std::uint64_t next();
    // Uniform in [0, n) without modulo bias.
    std::uint64_t bounded(std::uint64_t n);
    // Uniform in [0, 1).
    double uniform();
    // Standard normal via Box-Muller.
    double gaussian();

    template <typename T>
    void shuffle(std::span<T> xs) {
        for (std::size_t i = xs.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(xs[i - 1], xs[j]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stable stream key for one model pair under a run-level seed.
std::uint64_t derive_stream_seed(std::uint64_t seed, std::string_view pair_id);

struct PermutationOptions {
    long n_permutations = 100000;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    // When set, p = (count + 1) / (N + 1) instead of count / N.
    bool plus_one_correction = false;
};

// Two-tailed Monte-Carlo permutation test on the difference of means.
// p = #{ |D_perm| >= |D_obs| } / N, with the count clamped to >= 1 so the
// p-value stays in (0, 1]. Deterministic given the seed.
PermutationTestResult permutation_test(std::span<const double> a, std::span<const double> b,
                                       const PermutationOptions& options = {});

enum class CorrelationMethod { pearson, spearman };

// Two-tailed p for a correlation coefficient via t = r*sqrt((n-2)/(1-r^2))
// against the t distribution with n-2 degrees of freedom. |r| = 1 -> 0.
double correlation_pvalue(double r, std::size_t n, CorrelationMethod method);

// Regularized incomplete beta I_x(a, b); exposed for verification.
double regularized_incomplete_beta(double a, double b, double x);

}  // namespace grade
