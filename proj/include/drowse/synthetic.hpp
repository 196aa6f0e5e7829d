#ifndef DROWSE_SYNTHETIC_HPP_
#define DROWSE_SYNTHETIC_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "dataio.hpp"
#include "numerics.hpp"

namespace drowse {

/// Per-subject traits of the synthetic generator.
struct SubjectProfile
{
    std::uint16_t id = 0;
    double gain = 1.0;           // overall amplitude scaling
    double noise_uv = 4.0;       // pink background, std in uV
    double alpha_hz = 10.0;      // spindle center frequency
    double spindle_uv = 18.0;    // spindle peak amplitude
    double emg_uv = 10.0;        // broadband 15-45 Hz amplitude (rms)
    double drift_prob = 0.3;     // chance of a slow drift in an alert window
};

inline SubjectProfile make_subject_profile(std::uint16_t id, Rng& rng)
{
    SubjectProfile p;
    p.id = id;
    p.gain = rng.uniform(0.7, 1.4);
    p.noise_uv = rng.uniform(3.0, 5.0);
    p.alpha_hz = rng.uniform(9.0, 11.0);
    p.spindle_uv = rng.uniform(15.0, 24.0);
    p.emg_uv = rng.uniform(8.0, 12.0);
    p.drift_prob = rng.uniform(0.15, 0.4);
    return p;
}

/// Start and length of a spindle burst, in 128 Hz samples.
struct SpindleBurst
{
    std::size_t start = 0;
    std::size_t length = 0;

    std::size_t end() const noexcept { return start + length; }
};

namespace detail {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Approximately 1/f noise (Kellet's three-pole filter over white noise),
/// scaled to unit standard deviation.
inline std::array<double, kWindowLength> pink_noise(Rng& rng)
{
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    std::array<double, kWindowLength> out{};
    constexpr int kBurnIn = 256;
    for (int i = -kBurnIn; i < static_cast<int>(kWindowLength); ++i) {
        const double white = rng.normal();
        b0 = 0.99765 * b0 + white * 0.0990460;
        b1 = 0.96300 * b1 + white * 0.2965164;
        b2 = 0.57000 * b2 + white * 1.0526913;
        if (i >= 0)
            out[static_cast<std::size_t>(i)] = b0 + b1 + b2 + white * 0.1848;
    }
    // Stationary std of the filter output for unit white noise.
    constexpr double kScale = 1.0 / 2.6;
    for (double& v : out)
        v *= kScale;
    return out;
}

inline void add_spindle(std::array<double, kWindowLength>& x, const SpindleBurst& burst,
                        double freq_hz, double amp_uv, double phase)
{
    for (std::size_t k = 0; k < burst.length && burst.start + k < kWindowLength; ++k) {
        const double u = (static_cast<double>(k) + 0.5) / static_cast<double>(burst.length);
        const double envelope = std::sin(std::numbers::pi * u);
        const double t = static_cast<double>(burst.start + k) / kSampleRateHz;
        x[burst.start + k] += amp_uv * envelope * envelope * std::sin(kTwoPi * freq_hz * t + phase);
    }
}

inline EegSample to_sample(const std::array<double, kWindowLength>& x, std::uint16_t subject,
                           Label label, double gain)
{
    EegSample s;
    s.subject_id = subject;
    s.label = label;
    for (std::size_t i = 0; i < kWindowLength; ++i)
        s.values[i] = static_cast<float>(gain * x[i]);
    return s;
}

} // namespace detail

/// Drowsy window: one or two 9-11 Hz spindle bursts over pink noise. A fixed
/// burst may be requested, in which case exactly that burst is drawn.
inline EegSample synth_drowsy(Rng& rng, const SubjectProfile& p,
                              std::optional<SpindleBurst> fixed = std::nullopt)
{
    auto x = detail::pink_noise(rng);
    for (double& v : x)
        v *= p.noise_uv;

    std::vector<SpindleBurst> bursts;
    if (fixed) {
        bursts.push_back(*fixed);
    } else {
        const std::size_t count = rng.bernoulli(0.5) ? 2 : 1;
        for (std::size_t b = 0; b < count; ++b) {
            SpindleBurst burst;
            burst.length = 77 + static_cast<std::size_t>(rng.below(78)); // 0.6-1.2 s
            burst.start = static_cast<std::size_t>(rng.below(kWindowLength - burst.length + 1));
            bursts.push_back(burst);
        }
    }
    for (const auto& burst : bursts) {
        const double freq = p.alpha_hz + rng.uniform(-0.3, 0.3);
        const double amp = p.spindle_uv * rng.uniform(0.8, 1.2);
        detail::add_spindle(x, burst, freq, amp, rng.uniform(0.0, detail::kTwoPi));
    }
    return detail::to_sample(x, p.id, Label::drowsy, p.gain);
}

/// Alert window: broadband 15-45 Hz muscle-like activity with a slowly varying
/// envelope, occasionally a sub-2 Hz drift, over pink noise.
inline EegSample synth_alert(Rng& rng, const SubjectProfile& p)
{
    auto x = detail::pink_noise(rng);
    for (double& v : x)
        v *= p.noise_uv;

    constexpr int kComponents = 16;
    const double comp_amp = p.emg_uv * std::sqrt(2.0 / kComponents);
    const double env_freq = rng.uniform(0.2, 0.8);
    const double env_phase = rng.uniform(0.0, detail::kTwoPi);
    std::array<double, kComponents> freq{}, phase{}, amp{};
    for (int c = 0; c < kComponents; ++c) {
        freq[c] = rng.uniform(15.0, 45.0);
        phase[c] = rng.uniform(0.0, detail::kTwoPi);
        amp[c] = comp_amp * rng.uniform(0.6, 1.4);
    }
    for (std::size_t i = 0; i < kWindowLength; ++i) {
        const double t = static_cast<double>(i) / kSampleRateHz;
        const double envelope = 1.0 + 0.4 * std::sin(detail::kTwoPi * env_freq * t + env_phase);
        double emg = 0.0;
        for (int c = 0; c < kComponents; ++c)
            emg += amp[c] * std::sin(detail::kTwoPi * freq[c] * t + phase[c]);
        x[i] += envelope * emg;
    }
    if (rng.bernoulli(p.drift_prob)) {
        const double f = rng.uniform(0.3, 1.5);
        const double a = rng.uniform(8.0, 16.0);
        const double ph = rng.uniform(0.0, detail::kTwoPi);
        for (std::size_t i = 0; i < kWindowLength; ++i)
            x[i] += a * std::sin(detail::kTwoPi * f * static_cast<double>(i) / kSampleRateHz + ph);
    }
    return detail::to_sample(x, p.id, Label::alert, p.gain);
}

/// Balanced synthetic data set: subjects 1..n_subjects, per_class samples of
/// each label per subject, alternating alert/drowsy. Deterministic per seed.
inline SampleSet generate_synthetic(std::size_t n_subjects, std::size_t per_class,
                                    std::uint64_t seed)
{
    if (n_subjects < 2)
        throw std::invalid_argument("generate_synthetic: need at least 2 subjects");
    if (per_class < 10)
        throw std::invalid_argument("generate_synthetic: need at least 10 samples per class");
    if (n_subjects > 0xFFFF)
        throw std::invalid_argument("generate_synthetic: too many subjects");

    const Rng root(seed);
    std::vector<EegSample> samples;
    samples.reserve(n_subjects * per_class * 2);
    for (std::size_t s = 0; s < n_subjects; ++s) {
        const auto id = static_cast<std::uint16_t>(s + 1);
        Rng rng = root.split(id);
        const auto profile = make_subject_profile(id, rng);
        for (std::size_t k = 0; k < per_class; ++k) {
            samples.push_back(synth_alert(rng, profile));
            samples.push_back(synth_drowsy(rng, profile));
        }
    }
    return SampleSet(std::move(samples));
}

} // namespace drowse

#endif // DROWSE_SYNTHETIC_HPP_
