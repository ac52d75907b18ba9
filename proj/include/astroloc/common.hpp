#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace astroloc {

// Error taxonomy. Every failure the engine can raise carries one of these
// codes; the CLI maps them onto its documented exit codes (format -> 2,
// precondition -> 3, numeric -> 4).
enum class ErrorCode {
    invalid_tile,
    degenerate_geometry,
    antimeridian_crossing,
    invalid_point,
    dimension_mismatch,
    zero_vector,
    bad_magic,
    bad_version,
    truncated_file,
    bad_metadata,
    non_finite_value,
    invalid_batch,
    insufficient_cluster,
    cannot_fill_batch,
    missing_footprint,
    grid_capacity,
    empty_index,
    io_error,
    precondition,
};

enum class ErrorClass { format, precondition, numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}

    ErrorCode code() const { return code_; }

    ErrorClass classify() const {
        switch (code_) {
            case ErrorCode::bad_magic:
            case ErrorCode::bad_version:
            case ErrorCode::truncated_file:
            case ErrorCode::bad_metadata:
            case ErrorCode::io_error:
                return ErrorClass::format;
            case ErrorCode::non_finite_value:
                return ErrorClass::numeric;
            default:
                return ErrorClass::precondition;
        }
    }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

// Deterministic random source. All draws go through explicit helpers so the
// produced streams depend only on the seed, not on the standard library's
// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // unbiased integer in [0, n)
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) raise(ErrorCode::precondition, "uniform_index: empty range");
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t r;
        do {
            r = gen_();
        } while (r >= limit);
        return static_cast<std::size_t>(r % bound);
    }

    // standard normal via Box-Muller, spare value cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare_ = mag * std::sin(two_pi * u2);
        has_spare_ = true;
        return mag * std::cos(two_pi * u2);
    }

    // Fisher-Yates draw of k distinct indices from [0, n)
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) raise(ErrorCode::precondition, "sample_without_replacement: k > n");
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + uniform_index(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

namespace vec {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline std::vector<double> normalized(const std::vector<double>& a) {
    const double n = norm(a);
    if (!(n > 0.0) || !std::isfinite(n))
        raise(ErrorCode::zero_vector, "cannot normalize zero or non-finite vector");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / n;
    return out;
}

inline std::vector<double> to_double(const std::vector<float>& a) {
    return std::vector<double>(a.begin(), a.end());
}

inline std::vector<float> to_float(const std::vector<double>& a) {
    return std::vector<float>(a.begin(), a.end());
}

}  // namespace vec

}  // namespace astroloc
