#include "grade/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "grade/errors.hpp"

namespace grade {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t CounterRng::next() {
    return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++);
}

std::uint64_t CounterRng::bounded(std::uint64_t n) {
    if (n == 0) throw GradeError("CounterRng::bounded: n must be > 0");
    // Lemire's multiply-shift with rejection of the biased low range.
    std::uint64_t x = next();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    std::uint64_t low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double CounterRng::uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double CounterRng::gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    have_spare_ = true;
    return mag * std::cos(two_pi * u2);
}

std::uint64_t derive_stream_seed(std::uint64_t seed, std::string_view pair_id) {
    std::uint64_t h = splitmix64(seed);
    for (const char c : pair_id) {
        h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    }
    return h;
}

PermutationTestResult permutation_test(std::span<const double> a, std::span<const double> b,
                                       const PermutationOptions& options) {
    if (a.empty() || b.empty()) {
        throw ValidationError("permutation_test: both score vectors must be non-empty");
    }
    if (options.n_permutations < 1) {
        throw ValidationError("permutation_test: n_permutations must be >= 1");
    }
    for (const double v : a) {
        if (!std::isfinite(v)) throw ValidationError("permutation_test: non-finite score in a");
    }
    for (const double v : b) {
        if (!std::isfinite(v)) throw ValidationError("permutation_test: non-finite score in b");
    }

    const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
    const double d_obs = mean_a - mean_b;

    std::vector<double> pool;
    pool.reserve(a.size() + b.size());
    pool.insert(pool.end(), a.begin(), a.end());
    pool.insert(pool.end(), b.begin(), b.end());
    const std::size_t na = a.size();
    const double inv_na = 1.0 / static_cast<double>(na);
    const double inv_nb = 1.0 / static_cast<double>(pool.size() - na);

    // Small slack so a permutation that reproduces the observed labeling is
    // never undercounted by summation-order noise.
    const double threshold = std::abs(d_obs) - 1e-12;

    CounterRng rng(options.seed);
    long count = 0;
    for (long k = 0; k < options.n_permutations; ++k) {
        rng.shuffle(std::span<double>(pool));
        double sum_a = 0.0;
        for (std::size_t i = 0; i < na; ++i) sum_a += pool[i];
        double sum_b = 0.0;
        for (std::size_t i = na; i < pool.size(); ++i) sum_b += pool[i];
        const double d_perm = sum_a * inv_na - sum_b * inv_nb;
        if (std::abs(d_perm) >= threshold) ++count;
    }

    PermutationTestResult result;
    result.d_obs = d_obs;
    result.n_permutations = options.n_permutations;
    result.alpha = options.alpha;
    result.seed = options.seed;
    if (options.plus_one_correction) {
        result.p_value = static_cast<double>(count + 1) /
                         static_cast<double>(options.n_permutations + 1);
    } else {
        result.p_value = static_cast<double>(std::max(count, 1L)) /
                         static_cast<double>(options.n_permutations);
    }
    result.significant = result.p_value < options.alpha;
    return result;
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw ValidationError("incomplete beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;

    // Continued fraction (modified Lentz), swapping tails for convergence.
    const auto betacf = [](double aa, double bb, double xx) {
        const double tiny = 1e-300;
        const int max_iter = 300;
        const double eps = std::numeric_limits<double>::epsilon();
        const double qab = aa + bb;
        const double qap = aa + 1.0;
        const double qam = aa - 1.0;
        double c = 1.0;
        double d = 1.0 - qab * xx / qap;
        if (std::abs(d) < tiny) d = tiny;
        d = 1.0 / d;
        double h = d;
        for (int m = 1; m <= max_iter; ++m) {
            const double m2 = 2.0 * m;
            double num = m * (bb - m) * xx / ((qam + m2) * (aa + m2));
            d = 1.0 + num * d;
            if (std::abs(d) < tiny) d = tiny;
            c = 1.0 + num / c;
            if (std::abs(c) < tiny) c = tiny;
            d = 1.0 / d;
            h *= d * c;
            num = -(aa + m) * (qab + m) * xx / ((aa + m2) * (qap + m2));
            d = 1.0 + num * d;
            if (std::abs(d) < tiny) d = tiny;
            c = 1.0 + num / c;
            if (std::abs(c) < tiny) c = tiny;
            d = 1.0 / d;
            const double delta = d * c;
            h *= delta;
            if (std::abs(delta - 1.0) < eps) break;
        }
        return h;
    };

    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double correlation_pvalue(double r, std::size_t n, CorrelationMethod /*method*/) {
    if (n < 3) throw ValidationError("correlation_pvalue: need n >= 3");
    if (std::abs(r) > 1.0 + 1e-12) throw ValidationError("correlation_pvalue: |r| > 1");
    r = std::clamp(r, -1.0, 1.0);
    if (std::abs(r) == 1.0) return 0.0;
    if (r == 0.0) return 1.0;
    const double df = static_cast<double>(n - 2);
    const double t2 = r * r * df / (1.0 - r * r);
    // Two-tailed: P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2). The t statistic
    // approximation applies to Spearman's rho the same way.
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t2));
}

}  // namespace grade
