#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace drowse;

namespace {

std::vector<double> tone(std::size_t n, double freq, double rate, double phase = 0.3)
{
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate + phase);
    return x;
}

double rms(std::span<const double> x)
{
    double s = 0.0;
    for (double v : x)
        s += v * v;
    return std::sqrt(s / static_cast<double>(x.size()));
}

/// Session of `seconds` length with one event per entry of `rts`, spaced `gap`
/// seconds apart starting at `first`.
SessionRecord make_session(double seconds, const std::vector<double>& rts, double first = 5.0,
                           double gap = 8.0, std::uint64_t seed = 1)
{
    SessionRecord s;
    s.signal.resize(static_cast<std::size_t>(seconds * kSessionRateHz));
    Rng rng(seed);
    for (float& v : s.signal)
        v = static_cast<float>(rng.normal(0.0, 10.0));
    for (std::size_t i = 0; i < rts.size(); ++i) {
        const double onset = first + gap * static_cast<double>(i);
        s.events.push_back({onset, onset + rts[i], onset + rts[i] + 0.5});
    }
    return s;
}

LabeledWindow window(Label l, double rt, float tag)
{
    LabeledWindow w;
    w.sample.label = l;
    w.sample.values[0] = static_cast<float>(rt);
    w.sample.values[1] = tag;
    w.local_rt = rt;
    return w;
}

SessionWindows session_windows(std::uint32_t id, std::uint16_t subject, std::size_t alert,
                               std::size_t drowsy)
{
    SessionWindows s{id, subject, {}};
    for (std::size_t i = 0; i < alert; ++i)
        s.windows.push_back(window(Label::alert, 0.4 + 0.01 * static_cast<double>((i * 37) % alert),
                                   static_cast<float>(id)));
    for (std::size_t i = 0; i < drowsy; ++i)
        s.windows.push_back(window(Label::drowsy, 2.0 + 0.01 * static_cast<double>((i * 37) % drowsy),
                                   static_cast<float>(id)));
    return s;
}

SampleSet random_set(Rng& rng, std::size_t n)
{
    std::vector<EegSample> v(n);
    for (auto& s : v) {
        s.subject_id = static_cast<std::uint16_t>(rng.below(65536));
        s.label = rng.bernoulli(0.5) ? Label::drowsy : Label::alert;
        for (float& x : s.values)
            x = static_cast<float>(rng.normal(0.0, 50.0));
    }
    return SampleSet(std::move(v));
}

} // namespace

//-----------------------------------------------------------------------------
// Labeling
//-----------------------------------------------------------------------------

TEST(ClassifyRt, ThresholdRules)
{
    EXPECT_EQ(classify_rt(0.6, 0.7, 0.5), Verdict::alert);
    EXPECT_EQ(classify_rt(1.3, 1.4, 0.5), Verdict::drowsy);
    EXPECT_EQ(classify_rt(0.6, 2.0, 0.5), Verdict::excluded);
    // strict inequalities at both thresholds
    EXPECT_EQ(classify_rt(0.75, 0.5, 0.5), Verdict::excluded);
    EXPECT_EQ(classify_rt(1.25, 1.5, 0.5), Verdict::excluded);
}

TEST(Percentile, LinearInterpolation)
{
    EXPECT_DOUBLE_EQ(percentile({3.0, 1.0, 2.0}, 50.0), 2.0);
    EXPECT_DOUBLE_EQ(percentile({1.0, 2.0}, 5.0), 1.05);
    std::vector<double> v(21);
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<double>(20 - i);
    EXPECT_DOUBLE_EQ(percentile(v, 5.0), 1.0);
}

TEST(LabelSession, MatchesDirectComputation)
{
    Rng rng(8);
    std::vector<double> rts(60);
    for (auto& r : rts)
        r = rng.bernoulli(0.5) ? rng.uniform(0.4, 0.7) : rng.uniform(1.5, 3.0);
    // irregular spacing so the 90 s window holds a varying number of events
    SessionRecord s = make_session(800.0, {}, 0.0);
    double t = 4.0;
    for (double r : rts) {
        s.events.push_back({t, t + r, t + r + 0.3});
        t += rng.uniform(4.0, 12.0);
    }
    const auto labels = label_session(s);
    ASSERT_EQ(labels.size(), rts.size());

    auto sorted = rts;
    std::sort(sorted.begin(), sorted.end());
    const double pos = 0.05 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double alert_rt = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);

    std::size_t alert = 0, drowsy = 0, excluded = 0;
    for (std::size_t i = 0; i < rts.size(); ++i) {
        const double onset = s.events[i].event_onset;
        double sum = 0.0;
        int n = 0;
        for (std::size_t j = 0; j < rts.size(); ++j) {
            const double o = s.events[j].event_onset;
            if (o >= onset - 90.0 && o < onset) {
                sum += rts[j];
                ++n;
            }
        }
        const double global = n > 0 ? sum / n : rts[i];
        EXPECT_NEAR(labels[i].local_rt, rts[i], 1e-12);
        EXPECT_NEAR(labels[i].global_rt, global, 1e-12);
        EXPECT_NEAR(labels[i].alert_rt, alert_rt, 1e-12);
        const bool is_alert = rts[i] < 1.5 * alert_rt && global < 1.5 * alert_rt;
        const bool is_drowsy = rts[i] > 2.5 * alert_rt && global > 2.5 * alert_rt;
        EXPECT_EQ(labels[i].verdict,
                  is_alert ? Verdict::alert : (is_drowsy ? Verdict::drowsy : Verdict::excluded));
        alert += labels[i].verdict == Verdict::alert;
        drowsy += labels[i].verdict == Verdict::drowsy;
        excluded += labels[i].verdict == Verdict::excluded;
    }
    EXPECT_EQ(alert + drowsy + excluded, rts.size());
    EXPECT_EQ(labels[0].global_rt, labels[0].local_rt);
}

TEST(LabelSession, Errors)
{
    EXPECT_THROW(label_session(make_session(300.0, std::vector<double>(19, 0.5))),
                 std::invalid_argument);
    auto s = make_session(300.0, std::vector<double>(25, 0.5));
    std::swap(s.events[3], s.events[4]);
    EXPECT_THROW(label_session(s), std::invalid_argument);
}

//-----------------------------------------------------------------------------
// Resampling and windows
//-----------------------------------------------------------------------------

TEST(Resample, TenHertzKeepsAmplitude)
{
    const auto y = resample_500_to_128(tone(1500, 10.0, 500.0));
    ASSERT_EQ(y.size(), 384u);
    // 3 s hold exactly 30 cycles, so the 10 Hz DFT bin gives the amplitude.
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = 2.0 * std::numbers::pi * 30.0 * static_cast<double>(i) / 384.0;
        re += y[i] * std::cos(a);
        im += y[i] * std::sin(a);
    }
    const double amp = 2.0 * std::hypot(re, im) / 384.0;
    EXPECT_NEAR(amp, 1.0, 0.01);
}

TEST(Resample, HundredHertzIsRejected)
{
    const auto y = resample_500_to_128(tone(1500, 100.0, 500.0));
    ASSERT_EQ(y.size(), 384u);
    // Edge transients from the signal extension are excluded: half a filter
    // span at each end, in output samples.
    const std::size_t skip = eeg_downsampler().span() / 2 * 32 / 125 + 1;
    const std::span<const double> interior(y.data() + skip, y.size() - 2 * skip);
    const double atten_db = 20.0 * std::log10(rms(interior) / std::sqrt(0.5));
    EXPECT_LT(atten_db, -40.0);
}

TEST(Resample, ConstantPassesUnchanged)
{
    const std::vector<double> x(1500, -12.5);
    for (double v : resample_500_to_128(x))
        EXPECT_NEAR(v, -12.5, 1e-6);
}

TEST(Resample, LengthsAndErrors)
{
    EXPECT_EQ(eeg_downsampler().output_length(1500), 384u);
    EXPECT_EQ(eeg_downsampler().output_length(1000), 256u);
    EXPECT_THROW(resample_500_to_128(std::vector<double>(eeg_downsampler().span() - 1, 1.0)),
                 std::invalid_argument);
}

TEST(ExtractWindows, WindowEqualsSliceOfResampledSession)
{
    auto s = make_session(40.0, std::vector<double>(20, 0.5), 10.0, 1.0);
    std::vector<RtLabel> labels(s.events.size());
    for (auto& l : labels)
        l.verdict = Verdict::excluded;
    labels[0].verdict = Verdict::alert;  // event at t = 10 s
    const auto w = extract_windows(s, labels, 4);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].sample.subject_id, 4);
    EXPECT_EQ(w[0].sample.label, Label::alert);

    const auto whole = eeg_downsampler().process(std::span<const float>(s.signal));
    for (std::size_t k = 0; k < kWindowLength; ++k)
        ASSERT_EQ(w[0].sample.values[k], static_cast<float>(whole[7 * 128 + k]));
}

TEST(ExtractWindows, SkipsEarlyAndExcludedEvents)
{
    auto s = make_session(200.0, std::vector<double>(25, 0.5), 2.0, 6.0);
    std::vector<RtLabel> labels(s.events.size());
    std::size_t expected = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i].verdict = i % 3 == 0 ? Verdict::excluded : (i % 3 == 1 ? Verdict::alert : Verdict::drowsy);
        labels[i].local_rt = 0.5;
        expected += labels[i].verdict != Verdict::excluded && s.events[i].event_onset >= 3.0;
    }
    labels[0].verdict = Verdict::alert;  // onset 2 s: not enough history
    EXPECT_EQ(extract_windows(s, labels).size(), expected);

    for (auto& l : labels)
        l.verdict = Verdict::excluded;
    EXPECT_TRUE(extract_windows(s, labels).empty());
}

//-----------------------------------------------------------------------------
// Balancing
//-----------------------------------------------------------------------------

TEST(Balance, DiscardsThinSessions)
{
    const std::vector<SessionWindows> sessions{session_windows(0, 1, 49, 120),
                                               session_windows(1, 2, 60, 60)};
    const auto set = balance(sessions);
    EXPECT_EQ(set.subjects(), std::vector<std::uint16_t>{2});
    EXPECT_THROW(balance({session_windows(0, 1, 49, 120)}), std::runtime_error);
}

TEST(Balance, PicksMostBalancedSession)
{
    const auto set = balance({session_windows(0, 1, 60, 80), session_windows(1, 1, 70, 72)});
    EXPECT_EQ(set.count(1, Label::alert), 70u);
    EXPECT_EQ(set.count(1, Label::drowsy), 70u);
    for (const auto& s : set.samples())
        EXPECT_EQ(s.values[1], 1.0f);
}

TEST(Balance, TieBreaksOnTotalThenId)
{
    auto a = balance({session_windows(3, 1, 60, 60), session_windows(2, 1, 65, 65)});
    EXPECT_EQ(a[0].values[1], 2.0f);
    auto b = balance({session_windows(3, 1, 60, 60), session_windows(2, 1, 60, 60)});
    EXPECT_EQ(b[0].values[1], 2.0f);
}

TEST(Balance, TrimsLongestAlertRts)
{
    const auto session = session_windows(0, 1, 70, 60);
    const auto set = balance({session});
    EXPECT_EQ(set.count(1, Label::alert), 60u);
    EXPECT_EQ(set.count(1, Label::drowsy), 60u);

    std::vector<float> all_alert;
    for (const auto& w : session.windows)
        if (w.sample.label == Label::alert)
            all_alert.push_back(w.sample.values[0]);
    std::sort(all_alert.begin(), all_alert.end());
    const float cutoff = all_alert[59];
    for (const auto& s : set.samples()) {
        if (s.label == Label::alert) {
            EXPECT_LE(s.values[0], cutoff);
        }
    }
}

TEST(Balance, TrimsShortestDrowsyRts)
{
    const auto set = balance({session_windows(0, 1, 55, 75)});
    EXPECT_EQ(set.count(1, Label::drowsy), 55u);
    std::size_t low = 0;
    for (const auto& s : set.samples())
        if (s.label == Label::drowsy)
            low += s.values[0] < 2.0f + 0.195f;  // the 20 shortest are 2.00 .. 2.19
    EXPECT_EQ(low, 0u);
}

TEST(Balance, EqualCountsPerSubject)
{
    Rng rng(2);
    std::vector<SessionWindows> sessions;
    for (std::uint32_t id = 0; id < 12; ++id)
        sessions.push_back(session_windows(id, static_cast<std::uint16_t>(id % 5),
                                           50 + rng.below(40), 50 + rng.below(40)));
    const auto set = balance(sessions);
    for (auto subject : set.subjects())
        EXPECT_EQ(set.count(subject, Label::alert), set.count(subject, Label::drowsy));
}

//-----------------------------------------------------------------------------
// Files
//-----------------------------------------------------------------------------

TEST(SampleSetFile, RoundTripIsBitExact)
{
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const auto set = random_set(rng, rng.below(30));
        std::stringstream ss;
        write_sampleset(set, ss);
        EXPECT_EQ(read_sampleset(ss), set);
    }
}

TEST(SampleSetFile, LargeRoundTripThroughDisk)
{
    Rng rng(5);
    const auto set = random_set(rng, 2022);
    const auto path = std::filesystem::temp_directory_path() / "drowse_roundtrip.eegd";
    write_sampleset(set, path);
    EXPECT_EQ(read_sampleset(path), set);
    std::filesystem::remove(path);
}

namespace {

FormatErrc read_error(const std::string& bytes)
{
    std::istringstream is(bytes);
    try {
        read_sampleset(is);
    } catch (const FormatError& e) {
        return e.code();
    }
    return FormatErrc::io;
}

std::string encoded(const SampleSet& set)
{
    std::ostringstream os;
    write_sampleset(set, os);
    return os.str();
}

} // namespace

TEST(SampleSetFile, DistinctErrors)
{
    Rng rng(3);
    const std::string good = encoded(random_set(rng, 100));

    std::string bad_magic = good;
    bad_magic.replace(0, 4, "XXXX");
    EXPECT_EQ(read_error(bad_magic), FormatErrc::bad_magic);

    std::string bad_version = good;
    bad_version[4] = 2;
    EXPECT_EQ(read_error(bad_version), FormatErrc::bad_version);

    const std::size_t record = 4 + 384 * 4;
    EXPECT_EQ(read_error(good.substr(0, good.size() - record)), FormatErrc::truncated);
    EXPECT_EQ(read_error(good.substr(0, 10)), FormatErrc::truncated);

    std::string bad_label = good;
    bad_label[20 + 2] = 7;
    EXPECT_EQ(read_error(bad_label), FormatErrc::bad_header);
}

TEST(SessionFile, RoundTripAndErrors)
{
    const auto s = make_session(30.0, std::vector<double>(3, 0.6));
    std::stringstream ss;
    write_session(s, ss);
    const std::string bytes = ss.str();
    EXPECT_EQ(read_session(ss), s);

    std::istringstream short_in(bytes.substr(0, bytes.size() - 5));
    try {
        read_session(short_in);
        FAIL() << "truncated session accepted";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.code(), FormatErrc::truncated);
    }
    std::string magic = bytes;
    magic[3] = 'D';
    std::istringstream magic_in(magic);
    EXPECT_THROW(read_session(magic_in), FormatError);
    EXPECT_THROW(read_session(std::filesystem::path("/nonexistent/x.eegs")), FormatError);
}

//-----------------------------------------------------------------------------
// Synthetic data
//-----------------------------------------------------------------------------

TEST(Synthetic, Deterministic)
{
    EXPECT_EQ(generate_synthetic(3, 12, 9), generate_synthetic(3, 12, 9));
    EXPECT_FALSE(generate_synthetic(3, 12, 9) == generate_synthetic(3, 12, 10));
}

TEST(Synthetic, ShapeAndBalance)
{
    const auto set = generate_synthetic(4, 15, 1);
    EXPECT_EQ(set.size(), 120u);
    EXPECT_EQ(set.subjects(), (std::vector<std::uint16_t>{1, 2, 3, 4}));
    for (auto s : set.subjects()) {
        EXPECT_EQ(set.count(s, Label::alert), 15u);
        EXPECT_EQ(set.count(s, Label::drowsy), 15u);
    }
    EXPECT_THROW(generate_synthetic(1, 15, 1), std::invalid_argument);
    EXPECT_THROW(generate_synthetic(2, 9, 1), std::invalid_argument);
}

TEST(Synthetic, ClassSignaturesInBandPower)
{
    const auto set = generate_synthetic(6, 50, 3);
    for (const auto& s : set.samples()) {
        const auto rp = extract_features(s, FeatureKind::relative_power).values;
        if (s.label == Label::drowsy)
            EXPECT_GT(rp[2], rp[3]) << "drowsy sample with beta >= alpha";
        else
            EXPECT_GT(rp[3], rp[2]) << "alert sample with alpha >= beta";
    }
}

TEST(Synthetic, PinkNoiseHasUnitScale)
{
    Rng rng(12);
    double s2 = 0.0;
    std::size_t n = 0;
    for (int rep = 0; rep < 400; ++rep)
        for (double v : detail::pink_noise(rng)) {
            s2 += v * v;
            ++n;
        }
    EXPECT_NEAR(std::sqrt(s2 / static_cast<double>(n)), 1.0, 0.25);
}

TEST(Synthetic, FixedBurstIsPlaced)
{
    Rng rng(1);
    const auto profile = make_subject_profile(1, rng);
    const SpindleBurst burst{250, 100};
    const auto s = synth_drowsy(rng, profile, burst);
    double inside = 0.0, outside = 0.0;
    for (std::size_t i = 0; i < kWindowLength; ++i) {
        const double e = static_cast<double>(s.values[i]) * s.values[i];
        (i >= burst.start && i < burst.end() ? inside : outside) += e;
    }
    EXPECT_GT(inside / 100.0, 4.0 * outside / 284.0);
}
