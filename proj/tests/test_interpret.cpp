#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace drowse;

namespace {

LstmTrace trace_from_hidden(const std::vector<std::array<double, 2>>& h)
{
    LstmTrace tr;
    tr.hidden = Tensor({1, h.size(), 2});
    for (std::size_t t = 0; t < h.size(); ++t) {
        tr.hidden(0, t, 0) = h[t][0];
        tr.hidden(0, t, 1) = h[t][1];
    }
    return tr;
}

std::vector<double> block_values(const std::vector<double>& m)
{
    std::vector<double> out;
    for (std::size_t i = 0; i < m.size(); i += 8)
        out.push_back(m[i]);
    return out;
}

} // namespace

TEST(HiddenLikelihoods, ZeroStatesGiveHalf)
{
    const auto tr = trace_from_hidden(std::vector<std::array<double, 2>>(48, {0.0, 0.0}));
    for (double v : hidden_likelihoods(tr, 0, Label::drowsy))
        EXPECT_EQ(v, 0.5);
}

TEST(HiddenLikelihoods, LastStepIsModelOutput)
{
    Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        ModelParams p = init_params(rng);
        Tensor in({2, 1, kWindowLength});
        for (double& v : in.values())
            v = rng.normal(0.0, 15.0);
        const auto tr = model_forward(in, p, Mode::eval);
        for (std::size_t item = 0; item < 2; ++item)
            for (Label c : {Label::alert, Label::drowsy}) {
                const auto h = hidden_likelihoods(tr, c, item);
                ASSERT_EQ(h.size(), 48u);
                EXPECT_NEAR(h.back(), tr.probabilities(item, static_cast<std::size_t>(to_int(c))),
                            1e-15);
                for (double v : h) {
                    EXPECT_GT(v, 0.0);
                    EXPECT_LT(v, 1.0);
                }
            }
    }
}

TEST(AccumulatedHeatmap, RepeatsEachLikelihood)
{
    std::vector<double> h(48);
    for (std::size_t t = 0; t < h.size(); ++t)
        h[t] = 0.01 * static_cast<double>(t + 1);
    const auto m = accumulated_heatmap(h);
    ASSERT_EQ(m.size(), 384u);
    for (std::size_t i = 0; i < 384; ++i)
        EXPECT_EQ(m[i], h[i / 8]);

    for (double v : accumulated_heatmap(std::vector<double>(48, 0.7)))
        EXPECT_EQ(v, 0.7);
    EXPECT_THROW(accumulated_heatmap(std::vector<double>(47, 0.5)), std::invalid_argument);
}

TEST(RelativeHeatmap, ConstantLikelihoods)
{
    const auto m = relative_heatmap(std::vector<double>(48, 0.7));
    ASSERT_EQ(m.size(), 384u);
    const auto b = block_values(m);
    EXPECT_GT(b[0], 0.0);
    double mean = 0.0, ss = 0.0;
    for (std::size_t t = 1; t < 48; ++t) {
        EXPECT_LT(b[t], 0.0);
        EXPECT_EQ(b[t], b[1]);
    }
    for (double v : b)
        mean += v;
    mean /= 48.0;
    for (double v : b)
        ss += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(ss / 48.0), 1.0, 1e-12);
    // increments [h, 0, ..., 0]: one spike among 47 zeros standardizes to sqrt(47)
    EXPECT_NEAR(b[0], std::sqrt(47.0), 1e-12);
    EXPECT_NEAR(b[1], -1.0 / std::sqrt(47.0), 1e-12);
}

TEST(RelativeHeatmap, StandardizedIncrementsAndErrors)
{
    Rng rng(13);
    std::vector<double> h(48);
    for (double& v : h)
        v = rng.uniform(0.05, 0.95);
    const auto b = block_values(relative_heatmap(h));

    std::vector<double> delta(48);
    delta[0] = h[0];
    for (std::size_t t = 1; t < 48; ++t)
        delta[t] = h[t] - h[t - 1];
    double sum = 0.0;
    for (double d : delta)
        sum += d;
    EXPECT_NEAR(sum, h.back(), 1e-12);

    double mean = sum / 48.0, ss = 0.0;
    for (double d : delta)
        ss += (d - mean) * (d - mean);
    const double sd = std::sqrt(ss / 48.0);
    for (std::size_t t = 0; t < 48; ++t)
        EXPECT_NEAR(b[t], (delta[t] - mean) / sd, 1e-12);

    EXPECT_THROW(relative_heatmap(std::vector<double>(49, 0.5)), std::invalid_argument);
    for (double v : relative_heatmap(std::vector<double>(48, 0.0)))
        EXPECT_EQ(v, 0.0);
}

TEST(ExplainSample, TelescopingComplementAndBlocks)
{
    oracle::HeatmapCheck acc;
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
        oracle::check_heatmap_draw(seed, acc);
    EXPECT_LT(acc.max_telescoping_error, 1e-12);
    EXPECT_LT(acc.max_complement_error, 1e-15);
    EXPECT_TRUE(acc.lengths_ok);
    EXPECT_TRUE(acc.blocks_exact);
}

TEST(ExplainSample, LastBlockIsPredictedLikelihood)
{
    Rng rng(21);
    const auto p = init_params(rng);
    const auto data = generate_synthetic(2, 10, 21);
    for (const auto& s : data.samples()) {
        const auto pair = explain_sample(s, p);
        const auto c = static_cast<std::size_t>(to_int(pair.predicted));
        EXPECT_NEAR(pair.m_acc[383], pair.likelihoods[c], 1e-15);
        EXPECT_GE(pair.likelihoods[c], 0.5);
        for (std::size_t i = 0; i < 384; ++i)
            EXPECT_EQ(pair.m_rel[i], pair.m_rel[i - i % 8]);
    }
}

TEST(ExplainSample, TopBlockFollowsSpindleBurst)
{
    // Block 0 always carries the largest increment (the likelihood rises from
    // the h*_0 = 0 anchor), so the search starts at block 1.
    // Take the best epoch snapshot of the first seed that fits the data well.
    const auto data = generate_synthetic(4, 50, 1);
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    TrainConfig cfg;
    cfg.max_epochs = 15;
    ModelParams p = zero_params();
    double best = 0.0;
    for (std::uint64_t seed = 1; seed <= 5 && best < 0.98; ++seed) {
        Rng rng(seed);
        ModelParams q = init_params(rng);
        train(q, data, idx, cfg, rng, [&](std::size_t, const ModelParams& snap, double) {
            const double acc = evaluate(snap, data);
            if (acc > best) {
                best = acc;
                p = snap;
            }
        });
    }
    ASSERT_GE(best, 0.98);

    Rng gen(77);
    const int n = 40;
    int inside = 0, first_block = 0, drowsy = 0;
    for (int k = 0; k < n; ++k) {
        const auto profile = make_subject_profile(static_cast<std::uint16_t>(1 + k % 4), gen);
        SpindleBurst burst;
        burst.length = 100;
        burst.start = 200 + static_cast<std::size_t>(gen.below(84));
        const auto s = synth_drowsy(gen, profile, burst);
        const auto pair = explain_sample(s, p);
        drowsy += pair.predicted == Label::drowsy;

        const auto b = block_values(pair.m_rel);
        std::size_t top = 1, top_any = 0;
        for (std::size_t t = 0; t < 48; ++t) {
            if (std::fabs(b[t]) > std::fabs(b[top_any]))
                top_any = t;
            if (t > 0 && std::fabs(b[t]) > std::fabs(b[top]))
                top = t;
        }
        first_block += top_any == 0;
        inside += top * 8 < burst.end() && top * 8 + 8 > burst.start;
    }
    EXPECT_EQ(drowsy, n);
    EXPECT_EQ(first_block, n);
    // measured 39 of 40 here, 32 with a weaker 9-epoch model
    EXPECT_GE(inside, 28) << inside << " of " << n;
}

TEST(HeatmapFiles, CsvRoundTripAndSvg)
{
    Rng rng(31);
    const auto p = init_params(rng);
    const auto data = generate_synthetic(2, 10, 31);
    const auto& s = data[3];
    const auto pair = explain_sample(s, p);

    std::ostringstream os;
    write_heatmap_csv(pair, s, os);
    std::istringstream is(os.str());
    std::string line;
    std::size_t meta = 0, rows = 0;
    while (std::getline(is, line)) {
        if (line.rfind("# ", 0) == 0)
            ++meta;
        else if (line != "index,signal_uV,m_rel,m_acc")
            ++rows;
    }
    EXPECT_EQ(meta, 4u);
    EXPECT_EQ(rows, 384u);

    std::istringstream again(os.str());
    const auto f = read_heatmap_csv(again);
    EXPECT_EQ(f.subject, s.subject_id);
    EXPECT_EQ(f.label, s.label);
    ASSERT_EQ(f.m_rel.size(), 384u);
    for (std::size_t i = 0; i < 384; ++i) {
        EXPECT_EQ(static_cast<float>(f.signal[i]), s.values[i]);
        EXPECT_NEAR(f.m_rel[i], pair.m_rel[i], 1e-6 * std::max(1.0, std::fabs(pair.m_rel[i])));
        EXPECT_NEAR(f.m_acc[i], pair.m_acc[i], 1e-7);
    }
    EXPECT_NEAR(f.likelihoods[0], pair.likelihoods[0], 1e-8);
    EXPECT_NEAR(f.likelihoods[1], pair.likelihoods[1], 1e-8);

    const auto dir = std::filesystem::temp_directory_path() / "drowse_heatmap_test";
    std::filesystem::create_directories(dir);
    emit_heatmap(pair, s, dir / "h.csv", dir / "h.svg");
    std::ifstream svg(dir / "h.svg");
    std::stringstream text;
    text << svg.rdbuf();
    EXPECT_EQ(text.str().rfind("<svg", 0), 0u);
    EXPECT_NE(text.str().find("</svg>"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir / "h.csv"));
    std::filesystem::remove_all(dir);
}
