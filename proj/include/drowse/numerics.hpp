#ifndef DROWSE_NUMERICS_HPP_
#define DROWSE_NUMERICS_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "error.hpp"

namespace drowse {

//-----------------------------------------------------------------------------
// Tensor
//-----------------------------------------------------------------------------

/// Dense row-major array of doubles with rank <= 3.
class Tensor
{
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
        : dims_(std::move(dims))
    {
        if (dims_.empty() || dims_.size() > 3)
            throw std::invalid_argument("Tensor: rank must be 1..3");
        for (auto d : dims_)
            if (d == 0)
                throw std::invalid_argument("Tensor: dimensions must be positive");
        values_.assign(count(dims_), fill);
    }

    Tensor(std::vector<std::size_t> dims, std::vector<double> values)
        : Tensor(std::move(dims))
    {
        if (values.size() != values_.size())
            throw std::invalid_argument("Tensor: value count does not match dims");
        values_ = std::move(values);
    }

    static std::size_t count(const std::vector<std::size_t>& dims)
    {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                               std::multiplies<>{});
    }

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    const double& operator[](std::size_t i) const noexcept { return values_[i]; }

    double& operator()(std::size_t i, std::size_t j) noexcept
    {
        return values_[i * dims_[1] + j];
    }
    const double& operator()(std::size_t i, std::size_t j) const noexcept
    {
        return values_[i * dims_[1] + j];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept
    {
        return values_[(i * dims_[1] + j) * dims_[2] + k];
    }
    const double& operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept
    {
        return values_[(i * dims_[1] + j) * dims_[2] + k];
    }

    void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

    bool all_finite() const noexcept
    {
        return std::all_of(values_.begin(), values_.end(),
                           [](double v) { return std::isfinite(v); });
    }

    bool same_shape(const Tensor& other) const noexcept { return dims_ == other.dims_; }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> dims_;
    std::vector<double> values_;
};

//-----------------------------------------------------------------------------
// Rng
//-----------------------------------------------------------------------------

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
{
    return (x << k) | (x >> (64 - k));
}

} // namespace detail

/// xoshiro256** seeded through splitmix64. The bit stream depends only on the
/// seed; floating-point draws use only IEEE arithmetic and <cmath>.
class Rng
{
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 1) noexcept : seed_(seed)
    {
        std::uint64_t sm = seed;
        for (auto& s : state_)
            s = detail::splitmix64(sm);
    }

    std::uint64_t seed() const noexcept { return seed_; }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept
    {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept { return next_u64(); }

    std::uint64_t next_u64() noexcept
    {
        const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept
    {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n)
    {
        if (n == 0)
            throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t r = 0;
        do {
            r = next_u64();
        } while (r >= limit);
        return r % n;
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Standard normal via Box-Muller (one value per pair is cached).
    double normal() noexcept
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

    /// Independent generator keyed by (seed, stream).
    Rng split(std::uint64_t stream) const noexcept
    {
        std::uint64_t sm = seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1));
        const std::uint64_t a = detail::splitmix64(sm);
        return Rng(a ^ detail::splitmix64(sm));
    }

    template <typename T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

//-----------------------------------------------------------------------------
// Basic statistics
//-----------------------------------------------------------------------------

inline double mean(std::span<const double> v)
{
    if (v.empty())
        throw std::invalid_argument("mean: empty input");
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

/// Standard deviation with divisor n - ddof.
inline double stddev(std::span<const double> v, int ddof = 0)
{
    if (v.size() <= static_cast<std::size_t>(ddof))
        throw std::invalid_argument("stddev: not enough values");
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v)
        ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - ddof));
}

inline bool all_finite(std::span<const double> v) noexcept
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

//-----------------------------------------------------------------------------
// softmax
//-----------------------------------------------------------------------------

inline std::vector<double> softmax(std::span<const double> v)
{
    if (v.empty())
        throw std::invalid_argument("softmax: empty input");
    if (!all_finite(v))
        throw NumericError("softmax: non-finite input");
    const double top = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - top);
        sum += out[i];
    }
    for (double& x : out)
        x /= sum;
    return out;
}

//-----------------------------------------------------------------------------
// Discrete Fourier transform
//-----------------------------------------------------------------------------

/// Direct O(n^2) DFT of a real signal, bins 0..n/2. Twiddles come from a single
/// table indexed by (k*t) mod n so large k*t products lose no phase accuracy.
inline std::vector<std::complex<double>> real_dft(std::span<const double> x)
{
    const std::size_t n = x.size();
    if (n == 0)
        throw std::invalid_argument("real_dft: empty input");
    std::vector<double> cos_table(n), sin_table(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(m) /
                             static_cast<double>(n);
        cos_table[m] = std::cos(angle);
        sin_table[m] = std::sin(angle);
    }
    std::vector<std::complex<double>> out(n / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        double re = 0.0, im = 0.0;
        std::size_t idx = 0;
        for (std::size_t t = 0; t < n; ++t) {
            re += x[t] * cos_table[idx];
            im -= x[t] * sin_table[idx];
            idx += k;
            if (idx >= n)
                idx -= n;
        }
        out[k] = {re, im};
    }
    return out;
}

struct PowerSpectrum
{
    std::vector<double> frequencies;
    std::vector<double> power;
};

/// One-sided power spectrum of the mean-removed signal, normalized so the bins
/// sum to the signal's mean square.
inline PowerSpectrum dft_power(std::span<const double> signal, double rate)
{
    const std::size_t n = signal.size();
    if (n < 2)
        throw std::invalid_argument("dft_power: need at least 2 points");
    if (!(rate > 0.0))
        throw std::invalid_argument("dft_power: rate must be positive");

    const double m = mean(signal);
    std::vector<double> centered(signal.begin(), signal.end());
    for (double& x : centered)
        x -= m;

    const auto bins = real_dft(centered);
    const double nn = static_cast<double>(n);
    PowerSpectrum spec;
    spec.frequencies.resize(bins.size());
    spec.power.resize(bins.size());
    for (std::size_t k = 0; k < bins.size(); ++k) {
        spec.frequencies[k] = rate * static_cast<double>(k) / nn;
        double p = std::norm(bins[k]) / (nn * nn);
        const bool nyquist = (n % 2 == 0) && (k == n / 2);
        if (k != 0 && !nyquist)
            p *= 2.0;
        spec.power[k] = p;
    }
    return spec;
}

//-----------------------------------------------------------------------------
// normalization
//-----------------------------------------------------------------------------

namespace detail {

inline std::string format_g9(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace detail

inline constexpr double kDegenerateStd = 1e-12;

/// Zero mean, unit population std. Inputs with std below 1e-12 map to zeros.
inline std::vector<double> normalize_mean_std(std::span<const double> v)
{
    if (v.empty())
        throw std::invalid_argument("normalize_mean_std: empty input");
    const double m = mean(v);
    const double sd = stddev(v, 0);
    std::vector<double> out(v.size(), 0.0);
    if (!(sd >= kDegenerateStd))
        return out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = (v[i] - m) / sd;
    return out;
}

//-----------------------------------------------------------------------------
// Student t
//-----------------------------------------------------------------------------

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x)
{
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny)
        d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny)
            d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny)
            c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny)
            d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny)
            c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps)
            return h;
    }
    throw NumericError("incomplete beta: continued fraction did not converge");
}

} // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw std::invalid_argument("incomplete_beta: a and b must be positive");
    if (x < 0.0 || x > 1.0)
        throw std::invalid_argument("incomplete_beta: x outside [0, 1]");
    if (x == 0.0 || x == 1.0)
        return x;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Two-tailed P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double student_t_two_tailed(double t, double df)
{
    if (!(df > 0.0))
        throw std::invalid_argument("student_t_two_tailed: df must be positive");
    if (!std::isfinite(t))
        return 0.0;
    return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

struct TTestResult
{
    double t = 0.0;
    double p = 1.0;
    std::size_t df = 0;
};

/// Paired two-tailed t-test on d = a - b.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw std::invalid_argument("paired_t_test: length mismatch");
    if (a.size() < 2)
        throw std::invalid_argument("paired_t_test: need at least 2 pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        d[i] = a[i] - b[i];
    if (!all_finite(d))
        throw NumericError("paired_t_test: non-finite input");

    // Rounding in a - b leaves ~1e-17 scatter on "constant" differences.
    double scale = 1.0;
    for (double x : d)
        scale = std::max(scale, std::abs(x));
    const double sd = stddev(d, 1);
    if (!(sd > kDegenerateStd * scale))
        throw DegenerateError("paired_t_test: differences have zero variance");
    const double n = static_cast<double>(d.size());
    TTestResult r;
    r.df = d.size() - 1;
    r.t = mean(d) / (sd / std::sqrt(n));
    r.p = student_t_two_tailed(r.t, static_cast<double>(r.df));
    return r;
}

} // namespace drowse

#endif // DROWSE_NUMERICS_HPP_
