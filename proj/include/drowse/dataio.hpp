#ifndef DROWSE_DATAIO_HPP_
#define DROWSE_DATAIO_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "error.hpp"
#include "numerics.hpp"
#include "resample.hpp"

namespace drowse {

inline constexpr std::size_t kWindowLength = 384;
inline constexpr double kWindowSeconds = 3.0;

enum class Label : std::uint8_t
{
    alert = 0,
    drowsy = 1,
};

inline const char* to_string(Label l) { return l == Label::alert ? "alert" : "drowsy"; }
inline int to_int(Label l) { return static_cast<int>(l); }

/// One 3 s window at 128 Hz from a single channel, in microvolts.
struct EegSample
{
    std::uint16_t subject_id = 0;
    Label label = Label::alert;
    std::array<float, kWindowLength> values{};

    friend bool operator==(const EegSample&, const EegSample&) = default;
};

/// Immutable ordered collection of samples with a per-subject index.
class SampleSet
{
public:
    SampleSet() = default;

    explicit SampleSet(std::vector<EegSample> samples) : samples_(std::move(samples))
    {
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const auto& s = samples_[i];
            if (s.label != Label::alert && s.label != Label::drowsy)
                throw std::invalid_argument("SampleSet: invalid label");
            index_[s.subject_id].push_back(i);
        }
    }

    const std::vector<EegSample>& samples() const noexcept { return samples_; }
    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    const EegSample& operator[](std::size_t i) const { return samples_.at(i); }

    /// Subject ids in ascending order.
    std::vector<std::uint16_t> subjects() const
    {
        std::vector<std::uint16_t> ids;
        ids.reserve(index_.size());
        for (const auto& [id, _] : index_)
            ids.push_back(id);
        return ids;
    }

    const std::vector<std::size_t>& indices_of(std::uint16_t subject) const
    {
        static const std::vector<std::size_t> none;
        const auto it = index_.find(subject);
        return it == index_.end() ? none : it->second;
    }

    std::size_t count(std::uint16_t subject, Label label) const
    {
        std::size_t n = 0;
        for (auto i : indices_of(subject))
            n += samples_[i].label == label;
        return n;
    }

    std::size_t count(Label label) const
    {
        return static_cast<std::size_t>(std::count_if(
            samples_.begin(), samples_.end(), [&](const auto& s) { return s.label == label; }));
    }

    /// Indices of every sample whose subject differs from `subject`.
    std::vector<std::size_t> indices_except(std::uint16_t subject) const
    {
        std::vector<std::size_t> out;
        out.reserve(samples_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i)
            if (samples_[i].subject_id != subject)
                out.push_back(i);
        return out;
    }

    friend bool operator==(const SampleSet& a, const SampleSet& b)
    {
        return a.samples_ == b.samples_;
    }

private:
    std::vector<EegSample> samples_;
    std::map<std::uint16_t, std::vector<std::size_t>> index_;
};

//-----------------------------------------------------------------------------
// Sessions and reaction-time labeling
//-----------------------------------------------------------------------------

struct LaneEvent
{
    double event_onset = 0.0;
    double response_onset = 0.0;
    double response_offset = 0.0;

    friend bool operator==(const LaneEvent&, const LaneEvent&) = default;
};

/// Continuous single-channel recording with lane-departure events.
struct SessionRecord
{
    double rate = kSessionRateHz;
    std::vector<float> signal;
    std::vector<LaneEvent> events;

    double duration() const noexcept { return static_cast<double>(signal.size()) / rate; }

    friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

/// Throws std::invalid_argument unless events are ordered, well formed, and
/// inside the recording.
inline void validate_events(const SessionRecord& session)
{
    const double end = session.duration();
    for (std::size_t i = 0; i < session.events.size(); ++i) {
        const auto& e = session.events[i];
        if (!(e.event_onset < e.response_onset) || !(e.response_onset <= e.response_offset))
            throw std::invalid_argument("event " + std::to_string(i) +
                                        ": expected onset < response onset <= response offset");
        if (e.event_onset < 0.0 || e.response_offset > end)
            throw std::invalid_argument("event " + std::to_string(i) +
                                        ": outside the recording");
        if (i > 0 && e.event_onset < session.events[i - 1].event_onset)
            throw std::invalid_argument("event " + std::to_string(i) +
                                        ": onsets are not monotone");
    }
}

enum class Verdict
{
    alert,
    drowsy,
    excluded,
};

struct RtLabel
{
    double local_rt = 0.0;
    double global_rt = 0.0;
    double alert_rt = 0.0;
    Verdict verdict = Verdict::excluded;
};

inline constexpr std::size_t kMinEventsPerSession = 20;
inline constexpr double kGlobalRtWindowSeconds = 90.0;
inline constexpr double kAlertFactor = 1.5;
inline constexpr double kDrowsyFactor = 2.5;

/// Percentile by linear interpolation between order statistics (p in [0, 100]).
inline double percentile(std::vector<double> values, double p)
{
    if (values.empty())
        throw std::invalid_argument("percentile: empty input");
    std::sort(values.begin(), values.end());
    const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

/// Verdict for one event: alert iff both RTs are below 1.5 alert-RT, drowsy iff
/// both exceed 2.5 alert-RT (strict inequalities), otherwise excluded.
inline Verdict classify_rt(double local_rt, double global_rt, double alert_rt)
{
    if (local_rt < kAlertFactor * alert_rt && global_rt < kAlertFactor * alert_rt)
        return Verdict::alert;
    if (local_rt > kDrowsyFactor * alert_rt && global_rt > kDrowsyFactor * alert_rt)
        return Verdict::drowsy;
    return Verdict::excluded;
}

inline std::vector<RtLabel> label_session(const SessionRecord& session)
{
    const auto& events = session.events;
    if (events.size() < kMinEventsPerSession)
        throw std::invalid_argument("label_session: need at least 20 events, got " +
                                    std::to_string(events.size()));
    validate_events(session);

    std::vector<double> local(events.size());
    for (std::size_t i = 0; i < events.size(); ++i)
        local[i] = events[i].response_onset - events[i].event_onset;
    const double alert_rt = percentile(local, 5.0);

    std::vector<RtLabel> labels(events.size());
    std::size_t window_begin = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const double t = events[i].event_onset;
        while (window_begin < i && events[window_begin].event_onset < t - kGlobalRtWindowSeconds)
            ++window_begin;
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t j = window_begin; j < i && events[j].event_onset < t; ++j) {
            sum += local[j];
            ++n;
        }
        auto& lab = labels[i];
        lab.local_rt = local[i];
        lab.global_rt = n > 0 ? sum / static_cast<double>(n) : local[i];
        lab.alert_rt = alert_rt;
        lab.verdict = classify_rt(lab.local_rt, lab.global_rt, alert_rt);
    }
    return labels;
}

/// A resampled window plus the reaction time of the event that follows it.
struct LabeledWindow
{
    EegSample sample;
    double local_rt = 0.0;
};

/// Windows [onset - 3 s, onset) for every non-excluded event, resampled to
/// 128 Hz. The low-pass draws context from the surrounding recording, so the
/// result equals cutting the window out of the downsampled session.
inline std::vector<LabeledWindow> extract_windows(const SessionRecord& session,
                                                  std::span<const RtLabel> labels,
                                                  std::uint16_t subject_id = 0)
{
    if (session.rate != kSessionRateHz)
        throw std::invalid_argument("extract_windows: session rate must be 500 Hz");
    if (labels.size() != session.events.size())
        throw std::invalid_argument("extract_windows: one label per event required");

    const auto raw_window = static_cast<std::size_t>(kWindowSeconds * session.rate);
    const std::span<const float> signal(session.signal);
    std::vector<LabeledWindow> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].verdict == Verdict::excluded)
            continue;
        const double onset = session.events[i].event_onset;
        if (onset < kWindowSeconds)
            continue;
        const auto end = static_cast<std::size_t>(std::llround(onset * session.rate));
        if (end > signal.size() || end < raw_window)
            continue;
        const auto resampled =
            eeg_downsampler().process_segment(signal, end - raw_window, raw_window);
        LabeledWindow w;
        w.sample.subject_id = subject_id;
        w.sample.label = labels[i].verdict == Verdict::alert ? Label::alert : Label::drowsy;
        for (std::size_t k = 0; k < kWindowLength; ++k)
            w.sample.values[k] = static_cast<float>(resampled[k]);
        w.local_rt = labels[i].local_rt;
        out.push_back(w);
    }
    return out;
}

//-----------------------------------------------------------------------------
// Balancing
//-----------------------------------------------------------------------------

struct SessionWindows
{
    std::uint32_t session_id = 0;
    std::uint16_t subject_id = 0;
    std::vector<LabeledWindow> windows;

    std::size_t count(Label l) const
    {
        return static_cast<std::size_t>(std::count_if(
            windows.begin(), windows.end(), [&](const auto& w) { return w.sample.label == l; }));
    }
};

inline constexpr std::size_t kMinSamplesPerClass = 50;

/// Session-level class balancing:
///  1. drop sessions with fewer than 50 samples of either class;
///  2. per subject keep the session minimizing |alert - drowsy|
///     (ties: larger total, then lower session id);
///  3. trim the majority class to the minority count, keeping the shortest-RT
///     alert or longest-RT drowsy samples.
/// Retained samples keep their recording order; subjects appear in ascending id.
inline SampleSet balance(const std::vector<SessionWindows>& sessions)
{
    std::map<std::uint16_t, const SessionWindows*> chosen;
    auto better = [](const SessionWindows& a, const SessionWindows& b) {
        const auto gap = [](const SessionWindows& s) {
            const auto na = s.count(Label::alert), nd = s.count(Label::drowsy);
            return na > nd ? na - nd : nd - na;
        };
        if (gap(a) != gap(b))
            return gap(a) < gap(b);
        if (a.windows.size() != b.windows.size())
            return a.windows.size() > b.windows.size();
        return a.session_id < b.session_id;
    };
    for (const auto& s : sessions) {
        if (s.count(Label::alert) < kMinSamplesPerClass ||
            s.count(Label::drowsy) < kMinSamplesPerClass)
            continue;
        auto& slot = chosen[s.subject_id];
        if (slot == nullptr || better(s, *slot))
            slot = &s;
    }
    if (chosen.empty())
        throw std::runtime_error("balance: every session was discarded");

    std::vector<EegSample> out;
    for (const auto& [subject, session] : chosen) {
        const auto na = session->count(Label::alert);
        const auto nd = session->count(Label::drowsy);
        const Label majority = na > nd ? Label::alert : Label::drowsy;
        const std::size_t keep_n = std::min(na, nd);

        std::vector<std::size_t> majority_idx;
        for (std::size_t i = 0; i < session->windows.size(); ++i)
            if (session->windows[i].sample.label == majority)
                majority_idx.push_back(i);
        // Most representative first: short RTs for alert, long RTs for drowsy.
        std::stable_sort(majority_idx.begin(), majority_idx.end(), [&](auto a, auto b) {
            const double ra = session->windows[a].local_rt;
            const double rb = session->windows[b].local_rt;
            return majority == Label::alert ? ra < rb : ra > rb;
        });
        std::vector<bool> keep(session->windows.size(), true);
        for (std::size_t k = keep_n; k < majority_idx.size(); ++k)
            keep[majority_idx[k]] = false;

        for (std::size_t i = 0; i < session->windows.size(); ++i) {
            if (!keep[i])
                continue;
            EegSample s = session->windows[i].sample;
            s.subject_id = subject;
            out.push_back(s);
        }
    }
    return SampleSet(std::move(out));
}

//-----------------------------------------------------------------------------
// File formats
//-----------------------------------------------------------------------------

inline constexpr std::uint32_t kFormatVersion = 1;

inline void write_sampleset(const SampleSet& set, std::ostream& os)
{
    detail::ByteWriter w(os);
    w.bytes("EEGD");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(set.size()));
    w.u32(static_cast<std::uint32_t>(kWindowLength));
    w.u32(static_cast<std::uint32_t>(kSampleRateHz));
    for (const auto& s : set.samples()) {
        w.u16(s.subject_id);
        w.u8(static_cast<std::uint8_t>(s.label));
        w.u8(0);
        for (float v : s.values)
            w.f32(v);
    }
    w.check("sample set");
}

inline SampleSet read_sampleset(std::istream& is, const std::string& context = "sample set")
{
    detail::ByteReader r(is, context);
    if (r.bytes(4) != "EEGD")
        throw FormatError(FormatErrc::bad_magic, context);
    if (const auto v = r.u32(); v != kFormatVersion)
        throw FormatError(FormatErrc::bad_version, context + ": version " + std::to_string(v));
    const auto n = r.u32();
    const auto points = r.u32();
    const auto rate = r.u32();
    if (points != kWindowLength || rate != static_cast<std::uint32_t>(kSampleRateHz))
        throw FormatError(FormatErrc::bad_header, context + ": expected 384 points at 128 Hz");

    std::vector<EegSample> samples(n);
    for (auto& s : samples) {
        s.subject_id = r.u16();
        const auto label = r.u8();
        if (label > 1)
            throw FormatError(FormatErrc::bad_header, context + ": invalid label");
        s.label = static_cast<Label>(label);
        r.u8();
        for (float& v : s.values) {
            v = r.f32();
            if (!std::isfinite(v))
                throw FormatError(FormatErrc::bad_header, context + ": non-finite value");
        }
    }
    if (!r.at_end())
        throw FormatError(FormatErrc::bad_header, context + ": trailing bytes");
    return SampleSet(std::move(samples));
}

inline void write_session(const SessionRecord& session, std::ostream& os)
{
    detail::ByteWriter w(os);
    w.bytes("EEGS");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(std::llround(session.rate)));
    w.u64(session.signal.size());
    for (float v : session.signal)
        w.f32(v);
    w.u32(static_cast<std::uint32_t>(session.events.size()));
    for (const auto& e : session.events) {
        w.f64(e.event_onset);
        w.f64(e.response_onset);
        w.f64(e.response_offset);
    }
    w.check("session");
}

inline SessionRecord read_session(std::istream& is, const std::string& context = "session")
{
    detail::ByteReader r(is, context);
    if (r.bytes(4) != "EEGS")
        throw FormatError(FormatErrc::bad_magic, context);
    if (const auto v = r.u32(); v != kFormatVersion)
        throw FormatError(FormatErrc::bad_version, context + ": version " + std::to_string(v));
    SessionRecord s;
    s.rate = r.u32();
    if (s.rate <= 0)
        throw FormatError(FormatErrc::bad_header, context + ": zero sampling rate");
    const auto n = r.u64();
    s.signal.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 28)));
    for (std::uint64_t i = 0; i < n; ++i)
        s.signal.push_back(r.f32());
    const auto n_events = r.u32();
    s.events.resize(n_events);
    for (auto& e : s.events) {
        e.event_onset = r.f64();
        e.response_onset = r.f64();
        e.response_offset = r.f64();
    }
    if (!r.at_end())
        throw FormatError(FormatErrc::bad_header, context + ": trailing bytes");
    return s;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw FormatError(FormatErrc::io, "cannot open " + path.string() + " for writing");
    return os;
}

inline std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError(FormatErrc::io, "cannot open " + path.string());
    return is;
}

} // namespace detail

inline void write_sampleset(const SampleSet& set, const std::filesystem::path& path)
{
    auto os = detail::open_out(path);
    write_sampleset(set, os);
}

inline SampleSet read_sampleset(const std::filesystem::path& path)
{
    auto is = detail::open_in(path);
    return read_sampleset(is, path.string());
}

inline void write_session(const SessionRecord& session, const std::filesystem::path& path)
{
    auto os = detail::open_out(path);
    write_session(session, os);
}

inline SessionRecord read_session(const std::filesystem::path& path)
{
    auto is = detail::open_in(path);
    return read_session(is, path.string());
}

} // namespace drowse

#endif // DROWSE_DATAIO_HPP_
