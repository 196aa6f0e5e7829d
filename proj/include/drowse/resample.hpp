#ifndef DROWSE_RESAMPLE_HPP_
#define DROWSE_RESAMPLE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace drowse {

/// Kaiser-window beta for a given stopband attenuation in dB.
inline double kaiser_beta(double attenuation_db)
{
    if (attenuation_db > 50.0)
        return 0.1102 * (attenuation_db - 8.7);
    if (attenuation_db >= 21.0)
        return 0.5842 * std::pow(attenuation_db - 21.0, 0.4) +
               0.07886 * (attenuation_db - 21.0);
    return 0.0;
}

/// Rational-ratio polyphase resampler built on a Kaiser-windowed sinc.
///
/// The prototype low-pass is designed on the virtual up-sampled grid
/// (input_rate * up). Each output sample at input position p = m * down / up
/// is a weighted sum over the input samples within half a filter span of p.
/// Every phase's weights are renormalized to sum to one, so DC passes with
/// unit gain exactly. Samples needed beyond either end of the input are
/// supplied by odd (point) reflection about the end sample, which preserves
/// constants and linear trends.
class RationalResampler
{
public:
    RationalResampler(int up, int down, double input_rate, double cutoff_hz,
                      double transition_hz, double attenuation_db)
        : up_(up), down_(down)
    {
        if (up <= 0 || down <= 0)
            throw std::invalid_argument("RationalResampler: ratio must be positive");
        if (!(cutoff_hz > 0.0) || !(transition_hz > 0.0) || !(input_rate > 0.0))
            throw std::invalid_argument("RationalResampler: bad filter parameters");

        const double fs_up = input_rate * up;
        const double delta_omega = 2.0 * std::numbers::pi * transition_hz / fs_up;
        const auto taps = static_cast<std::ptrdiff_t>(
            std::ceil((attenuation_db - 7.95) / (2.285 * delta_omega)));
        half_ = (taps + 1) / 2;
        const double beta = kaiser_beta(attenuation_db);
        const double i0_beta = std::cyl_bessel_i(0.0, beta);
        const double fc = cutoff_hz / fs_up;

        // Taps of the prototype are indexed -half_..half_ on the fine grid.
        auto prototype = [&](std::ptrdiff_t n) {
            if (n < -half_ || n > half_)
                return 0.0;
            const double x = static_cast<double>(n);
            const double sinc = (n == 0) ? 2.0 * fc
                                         : std::sin(2.0 * std::numbers::pi * fc * x) /
                                               (std::numbers::pi * x);
            const double r = x / static_cast<double>(half_);
            const double window =
                std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
            return sinc * window;
        };

        reach_ = half_ / up_ + 1;
        const std::size_t width = static_cast<std::size_t>(2 * reach_ + 1);
        phases_.assign(static_cast<std::size_t>(up_), std::vector<double>(width, 0.0));
        for (int q = 0; q < up_; ++q) {
            auto& w = phases_[static_cast<std::size_t>(q)];
            double sum = 0.0;
            for (std::ptrdiff_t j = -reach_; j <= reach_; ++j) {
                const double v = prototype(q - j * up_);
                w[static_cast<std::size_t>(j + reach_)] = v;
                sum += v;
            }
            for (double& v : w)
                v /= sum;
        }
    }

    int up() const noexcept { return up_; }
    int down() const noexcept { return down_; }

    /// Number of input samples spanned by one output's weights.
    std::size_t span() const noexcept { return static_cast<std::size_t>(2 * reach_ + 1); }

    std::size_t output_length(std::size_t input_length) const noexcept
    {
        return static_cast<std::size_t>(
            std::llround(static_cast<double>(input_length) * up_ / down_));
    }

    /// Resample the whole input; output length is round(n * up / down).
    template <typename T>
    std::vector<double> process(std::span<const T> x) const
    {
        return process_segment(x, 0, x.size());
    }

    /// Resample the input samples [start, start + count) while drawing filter
    /// context from the rest of x where it exists. Output sample m sits at
    /// input position start + m * down / up.
    template <typename T>
    std::vector<double> process_segment(std::span<const T> x, std::size_t start,
                                        std::size_t count) const
    {
        if (x.size() < span())
            throw std::invalid_argument("RationalResampler: input shorter than filter span");
        if (start + count > x.size())
            throw std::out_of_range("RationalResampler: segment outside input");

        const auto n = static_cast<std::ptrdiff_t>(x.size());
        auto sample = [&](std::ptrdiff_t i) -> double {
            if (i < 0)
                return 2.0 * static_cast<double>(x[0]) - static_cast<double>(x[static_cast<std::size_t>(-i)]);
            if (i >= n)
                return 2.0 * static_cast<double>(x[static_cast<std::size_t>(n - 1)]) -
                       static_cast<double>(x[static_cast<std::size_t>(2 * (n - 1) - i)]);
            return static_cast<double>(x[static_cast<std::size_t>(i)]);
        };

        const std::size_t out_len = output_length(count);
        std::vector<double> out(out_len);
        for (std::size_t m = 0; m < out_len; ++m) {
            const auto fine = static_cast<std::ptrdiff_t>(start) * up_ +
                              static_cast<std::ptrdiff_t>(m) * down_;
            const std::ptrdiff_t base = fine / up_;
            const auto& w = phases_[static_cast<std::size_t>(fine % up_)];
            double acc = 0.0;
            for (std::ptrdiff_t j = -reach_; j <= reach_; ++j)
                acc += w[static_cast<std::size_t>(j + reach_)] * sample(base + j);
            out[m] = acc;
        }
        return out;
    }

private:
    int up_;
    int down_;
    std::ptrdiff_t half_ = 0;
    std::ptrdiff_t reach_ = 0;
    std::vector<std::vector<double>> phases_;
};

inline constexpr double kSessionRateHz = 500.0;
inline constexpr double kSampleRateHz = 128.0;

/// The 500 Hz -> 128 Hz converter: cutoff 57.6 Hz, stopband from 64 Hz, 64 dB.
inline const RationalResampler& eeg_downsampler()
{
    static const RationalResampler resampler(32, 125, kSessionRateHz, 0.9 * 64.0,
                                             2.0 * (64.0 - 0.9 * 64.0), 64.0);
    return resampler;
}

template <typename T>
std::vector<double> resample_500_to_128(std::span<const T> x)
{
    return eeg_downsampler().process(x);
}

inline std::vector<double> resample_500_to_128(const std::vector<double>& x)
{
    return resample_500_to_128(std::span<const double>(x));
}

} // namespace drowse

#endif // DROWSE_RESAMPLE_HPP_
