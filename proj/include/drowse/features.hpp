#ifndef DROWSE_FEATURES_HPP_
#define DROWSE_FEATURES_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataio.hpp"
#include "numerics.hpp"

namespace drowse {

//-----------------------------------------------------------------------------
// Welch PSD and band powers
//-----------------------------------------------------------------------------

inline constexpr std::size_t kWelchSegment = 128;
inline constexpr std::size_t kWelchStep = 64;

struct Psd
{
    std::vector<double> frequencies;
    std::vector<double> density;  // one-sided, uV^2 / Hz
};

/// Periodic Hamming window.
inline std::vector<double> hamming(std::size_t n)
{
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(n));
    return w;
}

/// Welch estimate for a 384-point window at 128 Hz: five 128-point Hamming
/// segments with 50% overlap, each mean-removed, averaged periodograms.
inline Psd welch_psd(std::span<const double> x, double rate = kSampleRateHz)
{
    if (x.size() != kWindowLength)
        throw std::invalid_argument("welch_psd: expected 384 samples, got " +
                                    std::to_string(x.size()));
    const auto window = hamming(kWelchSegment);
    double window_power = 0.0;
    for (double w : window)
        window_power += w * w;

    const std::size_t bins = kWelchSegment / 2 + 1;
    Psd psd;
    psd.frequencies.resize(bins);
    psd.density.assign(bins, 0.0);
    for (std::size_t k = 0; k < bins; ++k)
        psd.frequencies[k] = rate * static_cast<double>(k) / static_cast<double>(kWelchSegment);

    std::size_t segments = 0;
    std::vector<double> seg(kWelchSegment);
    for (std::size_t start = 0; start + kWelchSegment <= x.size(); start += kWelchStep) {
        const double m = mean(x.subspan(start, kWelchSegment));
        for (std::size_t i = 0; i < kWelchSegment; ++i)
            seg[i] = (x[start + i] - m) * window[i];
        const auto spectrum = real_dft(seg);
        for (std::size_t k = 0; k < bins; ++k) {
            double p = std::norm(spectrum[k]) / (rate * window_power);
            if (k != 0 && k != kWelchSegment / 2)
                p *= 2.0;
            psd.density[k] += p;
        }
        ++segments;
    }
    for (double& p : psd.density)
        p /= static_cast<double>(segments);
    return psd;
}

inline Psd welch_psd(const EegSample& s)
{
    const std::vector<double> x(s.values.begin(), s.values.end());
    return welch_psd(x);
}

/// Trapezoidal integral of the PSD over bins with lo <= f <= hi.
inline double band_power(const Psd& psd, double lo, double hi)
{
    double area = 0.0;
    for (std::size_t k = 0; k + 1 < psd.frequencies.size(); ++k) {
        const double f0 = psd.frequencies[k], f1 = psd.frequencies[k + 1];
        if (f0 >= lo && f1 <= hi)
            area += 0.5 * (psd.density[k] + psd.density[k + 1]) * (f1 - f0);
    }
    return area;
}

struct BandPowers
{
    double delta = 0.0;  // 1-4 Hz
    double theta = 0.0;  // 4-8 Hz
    double alpha = 0.0;  // 8-12 Hz
    double beta = 0.0;   // 12-30 Hz

    double total() const noexcept { return delta + theta + alpha + beta; }
};

inline BandPowers band_powers(const Psd& psd)
{
    return {band_power(psd, 1.0, 4.0), band_power(psd, 4.0, 8.0), band_power(psd, 8.0, 12.0),
            band_power(psd, 12.0, 30.0)};
}

enum class FeatureKind
{
    relative_power,
    power_ratio,
    four_entropies,
};

inline const char* to_string(FeatureKind k)
{
    switch (k) {
    case FeatureKind::relative_power: return "relative_power";
    case FeatureKind::power_ratio: return "power_ratio";
    case FeatureKind::four_entropies: return "four_entropies";
    }
    return "unknown";
}

struct FeatureVector
{
    FeatureKind kind = FeatureKind::relative_power;
    std::array<double, 4> values{};
};

/// delta, theta, alpha, beta as fractions of their sum.
inline FeatureVector relative_powers(const BandPowers& bp)
{
    const double total = bp.total();
    if (!(total > 0.0))
        throw DegenerateError("relative_powers: zero power in 1-30 Hz");
    return {FeatureKind::relative_power,
            {bp.delta / total, bp.theta / total, bp.alpha / total, bp.beta / total}};
}

inline FeatureVector relative_powers(std::span<const double> x)
{
    return relative_powers(band_powers(welch_psd(x)));
}

inline constexpr double kRatioFloor = 1e-12;

/// (theta+alpha)/beta, alpha/beta, (theta+alpha)/(alpha+beta), theta/beta.
inline FeatureVector power_ratios(const BandPowers& bp)
{
    const double beta = std::max(bp.beta, kRatioFloor);
    const double alpha_beta = std::max(bp.alpha + bp.beta, kRatioFloor);
    return {FeatureKind::power_ratio,
            {(bp.theta + bp.alpha) / beta, bp.alpha / beta, (bp.theta + bp.alpha) / alpha_beta,
             bp.theta / beta}};
}

inline FeatureVector power_ratios(std::span<const double> x)
{
    return power_ratios(band_powers(welch_psd(x)));
}

//-----------------------------------------------------------------------------
// Entropies
//-----------------------------------------------------------------------------

inline constexpr std::size_t kEmbedding = 2;
inline constexpr double kToleranceFactor = 0.2;

/// Tolerance r = 0.2 * SD(x), SD with the n-1 divisor.
inline double default_tolerance(std::span<const double> x)
{
    return kToleranceFactor * stddev(x, 1);
}

namespace detail {

inline void check_entropy_input(std::span<const double> x, std::size_t m, const char* who)
{
    if (m == 0 || x.size() < m + 2)
        throw std::invalid_argument(std::string(who) + ": need at least m + 2 samples");
    if (!all_finite(x))
        throw NumericError(std::string(who) + ": non-finite input");
}

inline double chebyshev(std::span<const double> x, std::size_t i, std::size_t j, std::size_t len)
{
    double d = 0.0;
    for (std::size_t k = 0; k < len; ++k)
        d = std::max(d, std::abs(x[i + k] - x[j + k]));
    return d;
}

} // namespace detail

/// Approximate entropy (self-matches included, Chebyshev distance, d <= r).
/// Returns 0 when r is 0 (constant input).
inline double approximate_entropy(std::span<const double> x, std::size_t m, double r)
{
    detail::check_entropy_input(x, m, "approximate_entropy");
    if (!(r > 0.0))
        return 0.0;
    const std::size_t n = x.size();
    auto phi = [&](std::size_t len) {
        const std::size_t count = n - len + 1;
        double sum = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            std::size_t matches = 0;
            for (std::size_t j = 0; j < count; ++j) {
                std::size_t k = 0;
                while (k < len && std::abs(x[i + k] - x[j + k]) <= r)
                    ++k;
                matches += (k == len);
            }
            sum += std::log(static_cast<double>(matches) / static_cast<double>(count));
        }
        return sum / static_cast<double>(count);
    };
    return phi(m) - phi(m + 1);
}

inline double approximate_entropy(std::span<const double> x)
{
    return approximate_entropy(x, kEmbedding, default_tolerance(x));
}

/// Sample entropy -ln(A/B) over the first n - m templates of both lengths,
/// self-matches excluded. When no match exists at either length the value is
/// capped at ln((n-m)(n-m-1)/2), the largest finite value the ratio allows.
inline double sample_entropy(std::span<const double> x, std::size_t m, double r)
{
    detail::check_entropy_input(x, m, "sample_entropy");
    if (!(r > 0.0))
        return 0.0;
    const std::size_t templates = x.size() - m;
    std::size_t b = 0, a = 0;
    for (std::size_t i = 0; i < templates; ++i)
        for (std::size_t j = i + 1; j < templates; ++j) {
            std::size_t k = 0;
            while (k < m && std::abs(x[i + k] - x[j + k]) <= r)
                ++k;
            if (k < m)
                continue;
            ++b;
            a += std::abs(x[i + m] - x[j + m]) <= r;
        }
    if (a == 0 || b == 0) {
        const double pairs = 0.5 * static_cast<double>(templates) * static_cast<double>(templates - 1);
        return std::log(pairs);
    }
    return -std::log(static_cast<double>(a) / static_cast<double>(b));
}

inline double sample_entropy(std::span<const double> x)
{
    return sample_entropy(x, kEmbedding, default_tolerance(x));
}

/// Fuzzy entropy: baseline-removed templates, similarity exp(-d^n / r) with
/// Chebyshev d, averaged over distinct template pairs; ln phi_m - ln phi_{m+1}.
inline double fuzzy_entropy(std::span<const double> x, std::size_t m, double r,
                            double n_power = 2.0)
{
    detail::check_entropy_input(x, m, "fuzzy_entropy");
    if (!(r > 0.0))
        return 0.0;
    const std::size_t templates = x.size() - m;
    auto phi = [&](std::size_t len) {
        std::vector<double> centered(templates * len);
        for (std::size_t i = 0; i < templates; ++i) {
            double mu = 0.0;
            for (std::size_t k = 0; k < len; ++k)
                mu += x[i + k];
            mu /= static_cast<double>(len);
            for (std::size_t k = 0; k < len; ++k)
                centered[i * len + k] = x[i + k] - mu;
        }
        double total = 0.0;
        for (std::size_t i = 0; i < templates; ++i)
            for (std::size_t j = i + 1; j < templates; ++j) {
                double d = 0.0;
                for (std::size_t k = 0; k < len; ++k)
                    d = std::max(d, std::abs(centered[i * len + k] - centered[j * len + k]));
                total += std::exp(-std::pow(d, n_power) / r);
            }
        // Each unordered pair stands for (i, j) and (j, i).
        return 2.0 * total /
               (static_cast<double>(templates) * static_cast<double>(templates - 1));
    };
    return std::log(phi(m)) - std::log(phi(m + 1));
}

inline double fuzzy_entropy(std::span<const double> x)
{
    return fuzzy_entropy(x, kEmbedding, default_tolerance(x), 2.0);
}

/// Normalized Shannon entropy of the Welch PSD bins in 1-30 Hz, in [0, 1].
inline double spectral_entropy(const Psd& psd, double lo = 1.0, double hi = 30.0)
{
    std::vector<double> p;
    for (std::size_t k = 0; k < psd.frequencies.size(); ++k)
        if (psd.frequencies[k] >= lo && psd.frequencies[k] <= hi)
            p.push_back(psd.density[k]);
    double total = 0.0;
    for (double v : p)
        total += v;
    if (!(total > 0.0))
        throw DegenerateError("spectral_entropy: zero power in band");
    if (p.size() < 2)
        return 0.0;
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) {
            const double q = v / total;
            h -= q * std::log(q);
        }
    return h / std::log(static_cast<double>(p.size()));
}

inline double spectral_entropy(std::span<const double> x)
{
    return spectral_entropy(welch_psd(x));
}

/// Sample, fuzzy, approximate and spectral entropy with m = 2, r = 0.2 SD, n = 2.
inline FeatureVector four_entropies(std::span<const double> x)
{
    return {FeatureKind::four_entropies,
            {sample_entropy(x), fuzzy_entropy(x), approximate_entropy(x), spectral_entropy(x)}};
}

inline FeatureVector extract_features(const EegSample& s, FeatureKind kind)
{
    const std::vector<double> x(s.values.begin(), s.values.end());
    switch (kind) {
    case FeatureKind::relative_power: return relative_powers(x);
    case FeatureKind::power_ratio: return power_ratios(x);
    case FeatureKind::four_entropies: return four_entropies(x);
    }
    throw std::invalid_argument("extract_features: unknown kind");
}

} // namespace drowse

#endif // DROWSE_FEATURES_HPP_
