#ifndef DROWSE_INTERPRET_HPP_
#define DROWSE_INTERPRET_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataio.hpp"
#include "error.hpp"
#include "network.hpp"
#include "numerics.hpp"

namespace drowse {

/// Heatmaps of one classified sample. Both maps hold one value per input
/// point and are constant on each pooling block.
struct HeatmapPair
{
    Label predicted = Label::alert;
    std::array<double, 2> likelihoods{};  // p_alert, p_drowsy
    std::vector<double> m_rel;            // relative heatmap
    std::vector<double> m_acc;            // accumulated heatmap, values in [0, 1]
};

/// Class-c likelihood after each LSTM step: softmax(h_t)[c] for t = 1..T.
inline std::vector<double> hidden_likelihoods(const LstmTrace& trace, std::size_t item,
                                              Label c)
{
    const std::size_t steps = trace.hidden.dim(1);
    std::vector<double> out(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        const std::array<double, 2> h{trace.hidden(item, t, 0), trace.hidden(item, t, 1)};
        out[t] = softmax(h)[static_cast<std::size_t>(to_int(c))];
    }
    return out;
}

inline std::vector<double> hidden_likelihoods(const ForwardTrace& trace, Label c,
                                              std::size_t item = 0)
{
    return hidden_likelihoods(trace.lstm, item, c);
}

/// Repeats each element `factor` times, undoing a pooling of that width.
inline std::vector<double> upsample_blocks(std::span<const double> v, std::size_t factor)
{
    std::vector<double> out;
    out.reserve(v.size() * factor);
    for (double x : v)
        out.insert(out.end(), factor, x);
    return out;
}

/// Per-step increments of the likelihood sequence, with the value before the
/// first step taken as 0 (so the first increment equals the first likelihood).
inline std::vector<double> likelihood_increments(std::span<const double> likelihoods)
{
    std::vector<double> delta(likelihoods.size());
    double prev = 0.0;
    for (std::size_t t = 0; t < likelihoods.size(); ++t) {
        delta[t] = likelihoods[t] - prev;
        prev = likelihoods[t];
    }
    return delta;
}

namespace detail {

inline void check_steps(std::span<const double> h, std::size_t steps, const char* who)
{
    if (h.size() != steps)
        throw std::invalid_argument(std::string(who) + ": expected " + std::to_string(steps) +
                                    " likelihoods, got " + std::to_string(h.size()));
}

} // namespace detail

/// Accumulated heatmap: the likelihood sequence, each value held for one
/// pooling block.
inline std::vector<double> accumulated_heatmap(std::span<const double> likelihoods,
                                               const Architecture& arch = {})
{
    detail::check_steps(likelihoods, arch.steps(), "accumulated_heatmap");
    return upsample_blocks(likelihoods, arch.pool);
}

/// Relative heatmap: likelihood increments standardized over the T block
/// values (zero mean, unit population std), each held for one pooling block.
inline std::vector<double> relative_heatmap(std::span<const double> likelihoods,
                                            const Architecture& arch = {})
{
    detail::check_steps(likelihoods, arch.steps(), "relative_heatmap");
    const auto normalized = normalize_mean_std(likelihood_increments(likelihoods));
    return upsample_blocks(normalized, arch.pool);
}

/// Classifies one sample in eval mode and builds both heatmaps for the
/// predicted class.
inline HeatmapPair explain_sample(const EegSample& sample, const ModelParams& params)
{
    Tensor input({1, 1, kWindowLength});
    for (std::size_t t = 0; t < kWindowLength; ++t)
        input(0, 0, t) = static_cast<double>(sample.values[t]);
    const auto trace = model_forward(input, params, Mode::eval);

    HeatmapPair pair;
    pair.likelihoods = {trace.probabilities(0, 0), trace.probabilities(0, 1)};
    pair.predicted = predict_label(pair.likelihoods[0], pair.likelihoods[1]);
    const auto h = hidden_likelihoods(trace, pair.predicted);
    pair.m_acc = accumulated_heatmap(h, params.arch);
    pair.m_rel = relative_heatmap(h, params.arch);
    return pair;
}

//-----------------------------------------------------------------------------
// Output files
//-----------------------------------------------------------------------------

namespace detail {

inline std::string rgb(double r, double g, double b)
{
    auto c = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c(r), c(g), c(b));
    return buf;
}

/// Blue-white-red around zero, saturating at +-3.
inline std::string diverging_color(double v)
{
    const double u = std::clamp(v / 3.0, -1.0, 1.0);
    return u >= 0.0 ? rgb(1.0, 1.0 - u, 1.0 - u) : rgb(1.0 + u, 1.0 + u, 1.0);
}

/// White to dark red over [0, 1].
inline std::string sequential_color(double v)
{
    const double u = std::clamp(v, 0.0, 1.0);
    return rgb(1.0 - 0.35 * u, 1.0 - u, 1.0 - u);
}

} // namespace detail

/// Heatmap CSV: four `# key=value` lines, then `index,signal_uV,m_rel,m_acc`.
inline void write_heatmap_csv(const HeatmapPair& pair, const EegSample& sample, std::ostream& os)
{
    if (pair.m_rel.size() != kWindowLength || pair.m_acc.size() != kWindowLength)
        throw std::invalid_argument("write_heatmap_csv: heatmaps must have 384 points");
    os << "# subject=" << sample.subject_id << '\n'
       << "# label=" << to_int(sample.label) << '\n'
       << "# p_alert=" << detail::format_g9(pair.likelihoods[0]) << '\n'
       << "# p_drowsy=" << detail::format_g9(pair.likelihoods[1]) << '\n'
       << "index,signal_uV,m_rel,m_acc\n";
    for (std::size_t i = 0; i < kWindowLength; ++i)
        os << i << ',' << detail::format_g9(sample.values[i]) << ','
           << detail::format_g9(pair.m_rel[i]) << ',' << detail::format_g9(pair.m_acc[i]) << '\n';
}

/// Parsed contents of a heatmap CSV.
struct HeatmapFile
{
    std::uint16_t subject = 0;
    Label label = Label::alert;
    std::array<double, 2> likelihoods{};
    std::vector<double> signal;
    std::vector<double> m_rel;
    std::vector<double> m_acc;
};

inline HeatmapFile read_heatmap_csv(std::istream& is)
{
    HeatmapFile f;
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        if (line.front() == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                continue;
            const auto key = line.substr(2, eq - 2);
            const auto value = line.substr(eq + 1);
            if (key == "subject")
                f.subject = static_cast<std::uint16_t>(std::stoul(value));
            else if (key == "label")
                f.label = std::stoi(value) == 0 ? Label::alert : Label::drowsy;
            else if (key == "p_alert")
                f.likelihoods[0] = std::stod(value);
            else if (key == "p_drowsy")
                f.likelihoods[1] = std::stod(value);
            continue;
        }
        if (!header_seen) {
            if (line != "index,signal_uV,m_rel,m_acc")
                throw std::runtime_error("heatmap csv: unexpected header: " + line);
            header_seen = true;
            continue;
        }
        std::istringstream row(line);
        std::string cell;
        std::array<double, 4> v{};
        for (auto& x : v) {
            if (!std::getline(row, cell, ','))
                throw std::runtime_error("heatmap csv: short row: " + line);
            x = std::stod(cell);
        }
        f.signal.push_back(v[1]);
        f.m_rel.push_back(v[2]);
        f.m_acc.push_back(v[3]);
    }
    return f;
}

/// Two stacked panels of the signal trace, colored by the relative heatmap
/// (top) and the accumulated heatmap (bottom).
inline void write_heatmap_svg(const HeatmapPair& pair, const EegSample& sample, std::ostream& os)
{
    constexpr double kWidth = 960.0, kPanel = 200.0, kMargin = 40.0;
    const double height = 2.0 * kPanel + 3.0 * kMargin;
    const auto [lo_it, hi_it] = std::minmax_element(sample.values.begin(), sample.values.end());
    const double lo = *lo_it, hi = *hi_it;
    const double range = (hi - lo) > 0.0 ? (hi - lo) : 1.0;
    const double dx = (kWidth - 2.0 * kMargin) / static_cast<double>(kWindowLength - 1);

    auto y_of = [&](std::size_t i, double top) {
        return top + kPanel - (static_cast<double>(sample.values[i]) - lo) / range * kPanel;
    };
    auto panel = [&](double top, const std::vector<double>& heat, bool diverging,
                     const std::string& title) {
        os << "<text x=\"" << kMargin << "\" y=\"" << top - 8.0
           << "\" font-family=\"sans-serif\" font-size=\"13\">" << title << "</text>\n";
        os << "<rect x=\"" << kMargin << "\" y=\"" << top << "\" width=\"" << kWidth - 2.0 * kMargin
           << "\" height=\"" << kPanel << "\" fill=\"none\" stroke=\"#999\"/>\n";
        for (std::size_t i = 0; i + 1 < kWindowLength; ++i) {
            const std::string color =
                diverging ? detail::diverging_color(heat[i]) : detail::sequential_color(heat[i]);
            os << "<line x1=\"" << kMargin + dx * static_cast<double>(i) << "\" y1=\"" << y_of(i, top)
               << "\" x2=\"" << kMargin + dx * static_cast<double>(i + 1) << "\" y2=\""
               << y_of(i + 1, top) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        }
    };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
       << height << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#777\"/>\n";
    std::ostringstream caption;
    caption << "subject " << sample.subject_id << ", label " << to_string(sample.label)
            << ", p(alert)=" << detail::format_g9(pair.likelihoods[0])
            << ", p(drowsy)=" << detail::format_g9(pair.likelihoods[1]);
    panel(kMargin, pair.m_rel, true, "relative heatmap - " + caption.str());
    panel(2.0 * kMargin + kPanel, pair.m_acc, false,
          std::string("accumulated heatmap (") + to_string(pair.predicted) + ")");
    os << "</svg>\n";
}

/// Writes the CSV and, when svg_path is non-empty, the SVG rendering.
inline void emit_heatmap(const HeatmapPair& pair, const EegSample& sample,
                         const std::filesystem::path& csv_path,
                         const std::filesystem::path& svg_path = {})
{
    {
        std::ofstream os(csv_path);
        if (!os)
            throw FormatError(FormatErrc::io, "cannot open " + csv_path.string());
        write_heatmap_csv(pair, sample, os);
        if (!os)
            throw FormatError(FormatErrc::io, "write failed: " + csv_path.string());
    }
    if (!svg_path.empty()) {
        std::ofstream os(svg_path);
        if (!os)
            throw FormatError(FormatErrc::io, "cannot open " + svg_path.string());
        write_heatmap_svg(pair, sample, os);
        if (!os)
            throw FormatError(FormatErrc::io, "write failed: " + svg_path.string());
    }
}

} // namespace drowse

#endif // DROWSE_INTERPRET_HPP_
