#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <drowse/drowse.hpp>

namespace fs = std::filesystem;
using namespace drowse;

namespace {

class Cli : public ::testing::Test
{
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("drowse_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }

    void TearDown() override { fs::remove_all(dir_); }

    /// Runs the CLI with `args`, stdout to out.txt and stderr to err.txt.
    int run(const std::string& args) const
    {
        const std::string cmd = std::string("\"") + DROWSE_CLI_PATH + "\" " + args + " >\"" +
                                (dir_ / "out.txt").string() + "\" 2>\"" +
                                (dir_ / "err.txt").string() + "\"";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    static std::string slurp(const fs::path& p)
    {
        std::ifstream is(p);
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    }

    std::string out() const { return slurp(dir_ / "out.txt"); }
    std::string err() const { return slurp(dir_ / "err.txt"); }

    fs::path dir_;
};

/// Session with an alert block (RT 0.5 s) followed by a drowsy block (RT 3 s),
/// one event every 8 s.
SessionRecord two_block_session(std::size_t per_block, std::uint64_t seed)
{
    SessionRecord s;
    const std::size_t events = 2 * per_block;
    const double seconds = 10.0 + 8.0 * static_cast<double>(events);
    s.signal.resize(static_cast<std::size_t>(seconds * kSessionRateHz));
    Rng rng(seed);
    for (float& v : s.signal)
        v = static_cast<float>(rng.normal(0.0, 10.0));
    for (std::size_t i = 0; i < events; ++i) {
        const double onset = 5.0 + 8.0 * static_cast<double>(i);
        const double rt = i < per_block ? 0.5 : 3.0;
        s.events.push_back({onset, onset + rt, onset + rt + 0.4});
    }
    return s;
}

} // namespace

TEST_F(Cli, HelpForEverySubcommand)
{
    EXPECT_EQ(run("--help"), 0);
    for (const char* sub : {"prepare", "synth", "train", "loso", "explain", "baseline"}) {
        EXPECT_EQ(run(std::string(sub) + " --help"), 0) << sub;
        EXPECT_NE(out().find("--"), std::string::npos) << sub;
    }
}

TEST_F(Cli, UsageErrorsExitOne)
{
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("train --data x.eegd"), 1); // --model missing
    EXPECT_EQ(run("baseline --data x.eegd --features wavelets"), 1);
    EXPECT_EQ(run("baseline --data x.eegd --clf svm"), 1);
    EXPECT_EQ(run("loso --data x.eegd --out r.csv --epochs nine"), 1);
}

TEST_F(Cli, MissingInputExitsTwo)
{
    EXPECT_EQ(run("baseline --data " + path("absent.eegd")), 2);
    EXPECT_NE(err().find("error:"), std::string::npos);
}

TEST_F(Cli, SynthBaselineTrainExplain)
{
    const auto data = path("synth.eegd");
    ASSERT_EQ(run("synth --out " + data + " --subjects 3 --per-class 10 --seed 4"), 0);
    EXPECT_NE(out().find("Total"), std::string::npos);
    const auto set = read_sampleset(data);
    EXPECT_EQ(set.size(), 60u);
    EXPECT_EQ(set, generate_synthetic(3, 10, 4));

    ASSERT_EQ(run("baseline --data " + data + " --features relpower --clf lda --out " +
                  path("b.csv") + " --dump " + path("f.csv")),
              0);
    const auto csv = slurp(path("b.csv"));
    EXPECT_EQ(csv.rfind("# features=relative_power\n# classifier=lda\nsubject_id,accuracy\n", 0), 0u);
    EXPECT_NE(csv.find("\nmean,"), std::string::npos);
    EXPECT_EQ(out(), csv);
    EXPECT_EQ(slurp(path("f.csv")).rfind("# features=relative_power\nsubject_id,label,f1,f2,f3,f4\n", 0),
              0u);

    const auto model = path("m.eglm");
    ASSERT_EQ(run("train --data " + data + " --model " + model + " --epochs 2 --batch 20"), 0);
    EXPECT_NE(out().find("epoch  2"), std::string::npos);
    EXPECT_NO_THROW(load_params(fs::path(model)));

    ASSERT_EQ(run("explain --model " + model + " --data " + data + " --sample 7 --out " +
                  path("h/heat.csv") + " --svg " + path("h/heat.svg")),
              0);
    std::ifstream heat(path("h/heat.csv"));
    const auto parsed = read_heatmap_csv(heat);
    EXPECT_EQ(parsed.m_rel.size(), 384u);
    EXPECT_EQ(parsed.subject, set[7].subject_id);
    EXPECT_NE(slurp(path("h/heat.svg")).find("</svg>"), std::string::npos);

    EXPECT_EQ(run("explain --model " + model + " --data " + data + " --sample 60 --out " +
                  path("x.csv")),
              1);
    EXPECT_NE(err().find("out of range"), std::string::npos);
    EXPECT_EQ(run("explain --model " + path("none.eglm") + " --data " + data +
                  " --sample 0 --out " + path("x.csv")),
              2);
}

TEST_F(Cli, LosoIsThreadIndependent)
{
    const auto data = path("s.eegd");
    ASSERT_EQ(run("synth --out " + data + " --subjects 3 --per-class 10"), 0);
    const std::string common = "loso --data " + data + " --repeats 2 --epochs 2 --batch 20 --seed 3";
    ASSERT_EQ(run(common + " --threads 1 --out " + path("one.csv")), 0);
    ASSERT_EQ(run(common + " --threads 3 --out " + path("three.csv")), 0);
    EXPECT_EQ(slurp(path("one.csv")), slurp(path("three.csv")));
    EXPECT_EQ(slurp(path("one.summary.csv")), slurp(path("three.summary.csv")));
    EXPECT_EQ(slurp(path("one.csv")).rfind("subject_id,repeat,epoch,accuracy\n", 0), 0u);
    EXPECT_EQ(slurp(path("one.summary.csv")).rfind("epoch,mean_acc,sd_acc\n", 0), 0u);
}

TEST_F(Cli, PrepareLabelsAndBalancesSessions)
{
    write_session(two_block_session(70, 1), fs::path(path("s01_a.eegs")));
    write_session(two_block_session(65, 2), fs::path(path("s02_a.eegs")));
    SessionRecord thin = two_block_session(5, 3);
    write_session(thin, fs::path(path("s03_thin.eegs")));

    const auto out_set = path("prepared.eegd");
    ASSERT_EQ(run("prepare --data " + path("s01_a.eegs") + " " + path("s02_a.eegs") + " " +
                  path("s03_thin.eegs") + " --out " + out_set),
              0)
        << err();
    EXPECT_NE(err().find("s03_thin.eegs"), std::string::npos);
    EXPECT_NE(out().find("Total"), std::string::npos);

    const auto set = read_sampleset(out_set);
    EXPECT_EQ(set.subjects(), (std::vector<std::uint16_t>{1, 2}));
    for (auto id : set.subjects()) {
        EXPECT_EQ(set.count(id, Label::alert), set.count(id, Label::drowsy));
        EXPECT_GE(set.count(id, Label::alert), 50u);
    }

    EXPECT_EQ(run("prepare --data " + path("s03_thin.eegs") + " --out " + path("none.eegd")), 2);
    EXPECT_NE(err().find("no usable sessions"), std::string::npos);
}
