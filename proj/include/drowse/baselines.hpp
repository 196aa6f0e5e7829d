#ifndef DROWSE_BASELINES_HPP_
#define DROWSE_BASELINES_HPP_

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "classifiers.hpp"
#include "dataio.hpp"
#include "features.hpp"
#include "numerics.hpp"
#include "training.hpp"

namespace drowse {

/// One feature row per sample, in sample order.
struct FeatureTable
{
    FeatureKind kind = FeatureKind::relative_power;
    std::vector<std::vector<double>> rows;
};

inline FeatureTable extract_feature_table(const SampleSet& data, FeatureKind kind,
                                          std::size_t threads = 1)
{
    FeatureTable table{kind, std::vector<std::vector<double>>(data.size())};
    detail::parallel_for(data.size(), threads, [&](std::size_t i) {
        const auto f = extract_features(data[i], kind);
        table.rows[i].assign(f.values.begin(), f.values.end());
    });
    return table;
}

/// Per-subject accuracies of a leave-one-subject-out run, subjects ascending.
struct BaselineReport
{
    FeatureKind features = FeatureKind::relative_power;
    ClassifierKind classifier = ClassifierKind::lda;
    std::vector<std::uint16_t> subjects;
    std::vector<double> accuracy;

    double mean_accuracy() const { return mean(accuracy); }
    double sd_accuracy() const { return accuracy.size() > 1 ? stddev(accuracy, 1) : 0.0; }
};

inline BaselineReport run_baseline_loso(const SampleSet& data, const FeatureTable& table,
                                        ClassifierKind clf, const ClassifierOptions& opt = {})
{
    if (table.rows.size() != data.size())
        throw std::invalid_argument("run_baseline_loso: feature table does not match data");
    const auto subjects = data.subjects();
    if (subjects.size() < 2)
        throw std::invalid_argument("run_baseline_loso: need at least 2 subjects");

    BaselineReport report{table.kind, clf, subjects, {}};
    for (const auto subject : subjects) {
        std::vector<std::vector<double>> x;
        std::vector<Label> y;
        for (auto i : data.indices_except(subject)) {
            x.push_back(table.rows[i]);
            y.push_back(data[i].label);
        }
        const auto model = fit_classifier(clf, x, y, opt);
        const auto& test = data.indices_of(subject);
        std::size_t correct = 0;
        for (auto i : test)
            correct += model.predict(table.rows[i]) == data[i].label;
        report.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
    }
    return report;
}

inline BaselineReport run_baseline_loso(const SampleSet& data, FeatureKind kind,
                                        ClassifierKind clf, std::size_t threads = 1)
{
    return run_baseline_loso(data, extract_feature_table(data, kind, threads), clf);
}

/// `# features=<kind>` then `subject_id,label,f1,f2,f3,f4`.
inline void write_feature_csv(const SampleSet& data, const FeatureTable& table, std::ostream& os)
{
    os << "# features=" << to_string(table.kind) << '\n' << "subject_id,label,f1,f2,f3,f4\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        os << data[i].subject_id << ',' << to_int(data[i].label);
        for (double v : table.rows[i])
            os << ',' << detail::format_g9(v);
        os << '\n';
    }
}

/// Per-subject accuracy rows followed by `mean` and `sd` footer rows.
inline void write_baseline_csv(const BaselineReport& r, std::ostream& os)
{
    os << "# features=" << to_string(r.features) << '\n'
       << "# classifier=" << to_string(r.classifier) << '\n'
       << "subject_id,accuracy\n";
    for (std::size_t s = 0; s < r.subjects.size(); ++s)
        os << r.subjects[s] << ',' << detail::format_g9(r.accuracy[s]) << '\n';
    os << "mean," << detail::format_g9(r.mean_accuracy()) << '\n'
       << "sd," << detail::format_g9(r.sd_accuracy()) << '\n';
}

} // namespace drowse

#endif // DROWSE_BASELINES_HPP_
