// Command-line front end: prepare, synth, train, loso, explain, baseline.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <drowse/drowse.hpp>

namespace fs = std::filesystem;
using namespace drowse;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// Thrown for bad arguments discovered after parsing (for example an index
/// past the end of the data set).
struct UsageError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

std::ofstream open_text(const fs::path& path)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os)
        throw FormatError(FormatErrc::io, "cannot open " + path.string() + " for writing");
    return os;
}

std::size_t resolve_threads(std::size_t flag)
{
    return flag > 0 ? flag : default_thread_count();
}

/// Subject id from a `sNN_...` file name, or `fallback`.
std::uint16_t subject_from_name(const fs::path& path, std::uint16_t fallback)
{
    static const std::regex pattern(R"(^[sS](\d{1,5})_)");
    std::smatch m;
    const std::string name = path.filename().string();
    if (std::regex_search(name, m, pattern)) {
        const unsigned long id = std::stoul(m[1].str());
        if (id <= 0xFFFF)
            return static_cast<std::uint16_t>(id);
    }
    return fallback;
}

void print_counts(const SampleSet& set)
{
    std::printf("%-8s %8s %8s\n", "subject", "alert", "drowsy");
    for (auto id : set.subjects())
        std::printf("%-8u %8zu %8zu\n", static_cast<unsigned>(id), set.count(id, Label::alert),
                    set.count(id, Label::drowsy));
    std::printf("%-8s %8zu %8zu\n", "Total", set.count(Label::alert), set.count(Label::drowsy));
}

fs::path summary_path(const fs::path& detail)
{
    fs::path p = detail;
    p.replace_extension();
    return p.string() + ".summary.csv";
}

int cmd_prepare(const std::vector<std::string>& inputs, const fs::path& out)
{
    std::vector<SessionWindows> sessions;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const fs::path path = inputs[i];
        SessionRecord rec;
        try {
            rec = read_session(path);
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ": " + e.what());
        }
        if (rec.events.size() < kMinEventsPerSession) {
            std::cerr << "warning: " << path.string() << ": only " << rec.events.size()
                      << " events (need " << kMinEventsPerSession << "), skipped\n";
            continue;
        }
        const auto subject = subject_from_name(path, static_cast<std::uint16_t>(i + 1));
        try {
            const auto labels = label_session(rec);
            sessions.push_back({static_cast<std::uint32_t>(i), subject,
                                extract_windows(rec, labels, subject)});
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ": " + e.what());
        }
    }
    if (sessions.empty())
        throw std::runtime_error("no usable sessions");
    const SampleSet set = balance(sessions);
    if (set.empty())
        throw std::runtime_error("no samples survived balancing");
    write_sampleset(set, out);
    print_counts(set);
    return 0;
}

int cmd_synth(std::size_t subjects, std::size_t per_class, std::uint64_t seed, const fs::path& out)
{
    const SampleSet set = generate_synthetic(subjects, per_class, seed);
    write_sampleset(set, out);
    print_counts(set);
    return 0;
}

int cmd_train(const fs::path& data_path, const fs::path& model_path, const TrainConfig& cfg)
{
    const SampleSet data = read_sampleset(data_path);
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i)
        all[i] = i;
    Rng rng(cfg.seed);
    ModelParams params = init_params(rng);
    train(params, data, all, cfg, rng, [&](std::size_t epoch, const ModelParams& p, double loss) {
        std::printf("epoch %2zu  loss %.6f  train_acc %.4f\n", epoch, loss, evaluate(p, data));
        std::fflush(stdout);
    });
    save_params(params, model_path);
    return 0;
}

int cmd_loso(const fs::path& data_path, const fs::path& out, const TrainConfig& cfg,
             std::size_t threads)
{
    const SampleSet data = read_sampleset(data_path);
    const auto subjects = data.subjects();
    std::size_t done = 0;
    const std::size_t total = subjects.size() * cfg.repeats;
    const CvReport report = run_loso(data, cfg, threads, {}, [&](std::uint16_t s, std::size_t r) {
        std::fprintf(stderr, "fold %zu/%zu done (subject %u, repeat %zu)\n", ++done, total,
                     static_cast<unsigned>(s), r + 1);
    });
    {
        auto os = open_text(out);
        write_report_detail(report, os);
    }
    {
        auto os = open_text(summary_path(out));
        write_report_summary(report, os);
    }
    std::printf("epoch  mean_acc  sd_acc\n");
    for (std::size_t e = 1; e <= report.epochs(); ++e)
        std::printf("%5zu  %8s  %6s\n", e, format_g6(report.epoch_mean(e)).c_str(),
                    format_g6(report.epoch_sd(e)).c_str());
    return 0;
}

int cmd_explain(const fs::path& model_path, const fs::path& data_path, std::size_t index,
                const fs::path& out, const fs::path& svg)
{
    const SampleSet data = read_sampleset(data_path);
    if (index >= data.size())
        throw UsageError("--sample " + std::to_string(index) + " out of range (data set has " +
                         std::to_string(data.size()) + " samples)");
    const ModelParams params = load_params(model_path);
    const auto& sample = data[index];
    const auto pair = explain_sample(sample, params);
    if (out.has_parent_path())
        fs::create_directories(out.parent_path());
    if (svg.has_parent_path())
        fs::create_directories(svg.parent_path());
    emit_heatmap(pair, sample, out, svg);
    std::printf("sample %zu  subject %u  label %s  predicted %s  p_alert %.6f  p_drowsy %.6f\n",
                index, static_cast<unsigned>(sample.subject_id), to_string(sample.label),
                to_string(pair.predicted), pair.likelihoods[0], pair.likelihoods[1]);
    return 0;
}

int cmd_baseline(const fs::path& data_path, FeatureKind features, ClassifierKind clf,
                 const fs::path& out, const fs::path& dump, std::size_t threads)
{
    const SampleSet data = read_sampleset(data_path);
    const FeatureTable table = extract_feature_table(data, features, threads);
    if (!dump.empty()) {
        auto os = open_text(dump);
        write_feature_csv(data, table, os);
    }
    const BaselineReport report = run_baseline_loso(data, table, clf);
    if (!out.empty()) {
        auto os = open_text(out);
        write_baseline_csv(report, os);
    }
    write_baseline_csv(report, std::cout);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Interpretable CNN-LSTM drowsiness recognition from single-channel EEG"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    TrainConfig cfg;
    std::string data, out, model, svg, dump;
    std::vector<std::string> sessions;
    std::size_t sample = 0, threads = 0, subjects = 8, per_class = 100;

    const std::map<std::string, FeatureKind> feature_names{
        {"relpower", FeatureKind::relative_power},
        {"ratios", FeatureKind::power_ratio},
        {"entropies", FeatureKind::four_entropies}};
    const std::map<std::string, ClassifierKind> clf_names{
        {"lr", ClassifierKind::lr},   {"lda", ClassifierKind::lda}, {"qda", ClassifierKind::qda},
        {"gnb", ClassifierKind::gnb}, {"knn", ClassifierKind::knn}};
    FeatureKind features = FeatureKind::relative_power;
    ClassifierKind clf = ClassifierKind::lda;

    auto add_training_flags = [&](CLI::App* sub) {
        sub->add_option("--epochs", cfg.max_epochs, "Training epochs (1-50)")
            ->capture_default_str()
            ->check(CLI::Range(1, 50));
        sub->add_option("--batch", cfg.batch_size, "Mini-batch size")
            ->capture_default_str()
            ->check(CLI::Range(2, 1 << 20));
        sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    };
    auto add_threads = [&](CLI::App* sub) {
        sub->add_option("--threads", threads,
                        "Worker threads (0: DROWSE_THREADS or all cores)")
            ->capture_default_str();
    };

    auto* prepare = app.add_subcommand("prepare", "Label, window and balance session files");
    prepare->add_option("--data", sessions, "Session files (.eegs); subject id from sNN_ prefix")
        ->required()
        ->expected(1, -1);
    prepare->add_option("--out", out, "Output sample set (.eegd)")->required();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic sample set");
    synth->add_option("--out", out, "Output sample set (.eegd)")->required();
    synth->add_option("--subjects", subjects, "Number of subjects")
        ->capture_default_str()
        ->check(CLI::Range(2, 65535));
    synth->add_option("--per-class", per_class, "Samples per class per subject")
        ->capture_default_str()
        ->check(CLI::Range(10, 1000000));
    synth->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();

    auto* trn = app.add_subcommand("train", "Train one model on a whole sample set");
    trn->add_option("--data", data, "Sample set (.eegd)")->required();
    trn->add_option("--model", model, "Output model file (.eglm)")->required();
    add_training_flags(trn);

    auto* loso = app.add_subcommand("loso", "Leave-one-subject-out cross validation");
    loso->add_option("--data", data, "Sample set (.eegd)")->required();
    loso->add_option("--out", out, "Detail report CSV; summary goes to <stem>.summary.csv")
        ->required();
    loso->add_option("--repeats", cfg.repeats, "Repetitions")
        ->capture_default_str()
        ->check(CLI::Range(1, 1000));
    add_training_flags(loso);
    add_threads(loso);

    auto* explain = app.add_subcommand("explain", "Heatmaps for one sample");
    explain->add_option("--model", model, "Model file (.eglm)")->required();
    explain->add_option("--data", data, "Sample set (.eegd)")->required();
    explain->add_option("--sample", sample, "Sample index (0-based)")->required();
    explain->add_option("--out", out, "Heatmap CSV")->required();
    explain->add_option("--svg", svg, "Also write an SVG rendering to this path");

    auto* baseline = app.add_subcommand("baseline", "Conventional features + classifier, LOSO");
    baseline->add_option("--data", data, "Sample set (.eegd)")->required();
    baseline->add_option("--features", features, "Feature set")
        ->transform(CLI::CheckedTransformer(feature_names, CLI::ignore_case))
        ->default_str("relpower");
    baseline->add_option("--clf", clf, "Classifier")
        ->transform(CLI::CheckedTransformer(clf_names, CLI::ignore_case))
        ->default_str("lda");
    baseline->add_option("--out", out, "Per-subject accuracy CSV");
    baseline->add_option("--dump", dump, "Also write the feature table CSV");
    add_threads(baseline);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*prepare)
            return cmd_prepare(sessions, out);
        if (*synth)
            return cmd_synth(subjects, per_class, cfg.seed, out);
        if (*trn)
            return cmd_train(data, model, cfg);
        if (*loso)
            return cmd_loso(data, out, cfg, resolve_threads(threads));
        if (*explain)
            return cmd_explain(model, data, sample, out, svg);
        if (*baseline)
            return cmd_baseline(data, features, clf, out, dump, resolve_threads(threads));
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
