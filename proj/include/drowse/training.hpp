#ifndef DROWSE_TRAINING_HPP_
#define DROWSE_TRAINING_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dataio.hpp"
#include "error.hpp"
#include "network.hpp"
#include "numerics.hpp"

namespace drowse {

struct TrainConfig
{
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 50;
    std::size_t max_epochs = 50;
    std::size_t repeats = 10;
    std::uint64_t seed = 1;

    void validate() const
    {
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("TrainConfig: learning rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("TrainConfig: betas must lie in [0, 1)");
        if (!(adam_eps > 0.0))
            throw std::invalid_argument("TrainConfig: adam epsilon must be positive");
        if (batch_size < 2)
            throw std::invalid_argument("TrainConfig: batch size must be at least 2");
        if (max_epochs < 1 || max_epochs > 50)
            throw std::invalid_argument("TrainConfig: epochs must lie in [1, 50]");
        if (repeats < 1)
            throw std::invalid_argument("TrainConfig: repeats must be at least 1");
    }
};

//-----------------------------------------------------------------------------
// Adam
//-----------------------------------------------------------------------------

struct AdamState
{
    Gradients m;
    Gradients v;
    std::uint64_t step = 0;

    explicit AdamState(const Architecture& arch)
        : m(zero_gradients(arch)), v(zero_gradients(arch))
    {}
};

namespace detail {

// Visits (param, grad, m, v) tensors side by side.
template <typename F>
void zip_learnable(ModelParams& p, const Gradients& g, AdamState& s, F&& f)
{
    std::vector<Tensor*> params;
    std::vector<const Tensor*> grads;
    std::vector<Tensor*> ms, vs;
    for_each_learnable(p, [&](const std::string&, Tensor& t) { params.push_back(&t); });
    for_each_learnable(g, [&](const std::string&, const Tensor& t) { grads.push_back(&t); });
    for_each_learnable(s.m, [&](const std::string&, Tensor& t) { ms.push_back(&t); });
    for_each_learnable(s.v, [&](const std::string&, Tensor& t) { vs.push_back(&t); });
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(*ms[i]) ||
            !params[i]->same_shape(*vs[i]))
            throw std::invalid_argument("adam_step: tensor shape mismatch");
        f(*params[i], *grads[i], *ms[i], *vs[i]);
    }
}

} // namespace detail

/// One bias-corrected Adam update of every learnable tensor.
inline void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
                      const TrainConfig& cfg)
{
    bool finite = true;
    for_each_learnable(grads, [&](const std::string&, const Tensor& t) {
        finite = finite && t.all_finite();
    });
    if (!finite)
        throw NumericError("adam_step: non-finite gradient");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    detail::zip_learnable(params, grads, state,
                          [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
                              for (std::size_t i = 0; i < p.size(); ++i) {
                                  m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                                  v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                                  const double m_hat = m[i] / correction1;
                                  const double v_hat = v[i] / correction2;
                                  p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
                              }
                          });
}

//-----------------------------------------------------------------------------
// Training loop
//-----------------------------------------------------------------------------

/// Called after each epoch with the 1-based epoch number, the current
/// parameters, and that epoch's mean training loss.
using EpochCallback = std::function<void(std::size_t epoch, const ModelParams&, double loss)>;

/// Mini-batch training of `params` on data[indices]. Each epoch reshuffles
/// with `rng`; a trailing batch of fewer than two samples is dropped.
/// Returns the mean loss of every epoch.
inline std::vector<double> train(ModelParams& params, const SampleSet& data,
                                 std::span<const std::size_t> indices, const TrainConfig& cfg,
                                 Rng& rng, const EpochCallback& on_epoch = {})
{
    cfg.validate();
    if (indices.empty())
        throw std::invalid_argument("train: empty training set");
    bool has_alert = false, has_drowsy = false;
    for (auto i : indices) {
        has_alert = has_alert || data[i].label == Label::alert;
        has_drowsy = has_drowsy || data[i].label == Label::drowsy;
    }
    if (!has_alert || !has_drowsy)
        throw std::invalid_argument("train: training set must contain both classes");

    AdamState state(params.arch);
    std::vector<std::size_t> order(indices.begin(), indices.end());
    std::vector<double> losses;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            if (len < 2)
                break;
            const std::span<const std::size_t> part(order.data() + start, len);
            const auto labels = batch_labels(data, part);
            const auto result = model_gradients(make_batch(data, part), labels, params);
            adam_step(params, result.grads, state, cfg);
            update_running_stats(params, result.trace);
            loss_sum += result.loss * static_cast<double>(len);
            seen += len;
        }
        losses.push_back(seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0);
        if (on_epoch)
            on_epoch(epoch, params, losses.back());
    }
    return losses;
}

/// Fraction of samples whose argmax prediction (ties -> alert) matches the label.
inline double evaluate(const ModelParams& params, const SampleSet& data,
                       std::span<const std::size_t> indices)
{
    if (indices.empty())
        throw std::invalid_argument("evaluate: empty test set");
    const Tensor prob = predict_proba(params, data, indices);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < indices.size(); ++i)
        correct += predict_label(prob(i, 0), prob(i, 1)) == data[indices[i]].label;
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

inline double evaluate(const ModelParams& params, const SampleSet& data)
{
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i)
        all[i] = i;
    return evaluate(params, data, all);
}

//-----------------------------------------------------------------------------
// Leave-one-subject-out
//-----------------------------------------------------------------------------

/// Accuracies indexed by (subject, repeat, epoch); subjects in ascending id.
class CvReport
{
public:
    CvReport() = default;
    CvReport(std::vector<std::uint16_t> subjects, std::size_t repeats, std::size_t epochs)
        : subjects_(std::move(subjects)), repeats_(repeats), epochs_(epochs),
          acc_(subjects_.size() * repeats * epochs, 0.0)
    {}

    const std::vector<std::uint16_t>& subjects() const noexcept { return subjects_; }
    std::size_t repeats() const noexcept { return repeats_; }
    std::size_t epochs() const noexcept { return epochs_; }

    /// `epoch` is 1-based; subject and repeat are positions.
    double& at(std::size_t subject_pos, std::size_t repeat, std::size_t epoch)
    {
        return acc_.at((subject_pos * repeats_ + repeat) * epochs_ + (epoch - 1));
    }
    double at(std::size_t subject_pos, std::size_t repeat, std::size_t epoch) const
    {
        return acc_.at((subject_pos * repeats_ + repeat) * epochs_ + (epoch - 1));
    }

    /// Accuracy of one subject at `epoch`, averaged over repeats.
    double subject_mean(std::size_t subject_pos, std::size_t epoch) const
    {
        double s = 0.0;
        for (std::size_t r = 0; r < repeats_; ++r)
            s += at(subject_pos, r, epoch);
        return s / static_cast<double>(repeats_);
    }

    std::vector<double> subject_means(std::size_t epoch) const
    {
        std::vector<double> out(subjects_.size());
        for (std::size_t s = 0; s < out.size(); ++s)
            out[s] = subject_mean(s, epoch);
        return out;
    }

    /// Mean over subjects of the per-subject means.
    double epoch_mean(std::size_t epoch) const { return mean(subject_means(epoch)); }

    /// Sample standard deviation across subjects of the per-subject means.
    double epoch_sd(std::size_t epoch) const
    {
        const auto m = subject_means(epoch);
        return m.size() > 1 ? stddev(m, 1) : 0.0;
    }

private:
    std::vector<std::uint16_t> subjects_;
    std::size_t repeats_ = 0;
    std::size_t epochs_ = 0;
    std::vector<double> acc_;
};

inline std::size_t default_thread_count()
{
    if (const char* env = std::getenv("DROWSE_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0)
                return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

/// Runs task(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers finish.
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& task)
{
    threads = std::max<std::size_t>(1, std::min(threads, n));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                task(i);
            } catch (...) {
                const std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next.store(n);
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace detail

/// The random stream owning initialization and shuffling for one fold.
inline Rng fold_rng(std::uint64_t seed, std::size_t repeat, std::uint16_t subject)
{
    return Rng(seed).split(repeat).split(subject);
}

using FoldProgress = std::function<void(std::uint16_t subject, std::size_t repeat)>;

/// Leave-one-subject-out cross validation: for every repeat and held-out
/// subject, a fresh model is trained on the remaining subjects and scored on
/// the held-out one after each epoch. Folds may run concurrently; every fold
/// writes only its own slots, so the report does not depend on scheduling.
inline CvReport run_loso(const SampleSet& data, const TrainConfig& cfg,
                         std::size_t threads = 1, const Architecture& arch = {},
                         const FoldProgress& progress = {})
{
    cfg.validate();
    const auto subjects = data.subjects();
    if (subjects.size() < 2)
        throw std::invalid_argument("run_loso: need at least 2 subjects");

    CvReport report(subjects, cfg.repeats, cfg.max_epochs);
    std::mutex progress_mutex;
    const std::size_t folds = subjects.size() * cfg.repeats;
    detail::parallel_for(folds, threads, [&](std::size_t task) {
        const std::size_t repeat = task / subjects.size();
        const std::size_t pos = task % subjects.size();
        const std::uint16_t subject = subjects[pos];
        const auto train_idx = data.indices_except(subject);
        const auto& test_idx = data.indices_of(subject);

        Rng rng = fold_rng(cfg.seed, repeat, subject);
        ModelParams params = init_params(rng, arch);
        train(params, data, train_idx, cfg, rng,
              [&](std::size_t epoch, const ModelParams& p, double) {
                  report.at(pos, repeat, epoch) = evaluate(p, data, test_idx);
              });
        if (progress) {
            const std::lock_guard lock(progress_mutex);
            progress(subject, repeat);
        }
    });
    return report;
}

/// Paired t-test between two per-subject accuracy vectors.
inline TTestResult paired_comparison(std::span<const double> a, std::span<const double> b)
{
    return paired_t_test(a, b);
}

//-----------------------------------------------------------------------------
// Report files
//-----------------------------------------------------------------------------

inline std::string format_g6(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// `subject_id,repeat,epoch,accuracy`, repeat and epoch 1-based.
inline void write_report_detail(const CvReport& r, std::ostream& os)
{
    os << "subject_id,repeat,epoch,accuracy\n";
    for (std::size_t s = 0; s < r.subjects().size(); ++s)
        for (std::size_t rep = 0; rep < r.repeats(); ++rep)
            for (std::size_t e = 1; e <= r.epochs(); ++e)
                os << r.subjects()[s] << ',' << rep + 1 << ',' << e << ','
                   << format_g6(r.at(s, rep, e)) << '\n';
}

/// `epoch,mean_acc,sd_acc`.
inline void write_report_summary(const CvReport& r, std::ostream& os)
{
    os << "epoch,mean_acc,sd_acc\n";
    for (std::size_t e = 1; e <= r.epochs(); ++e)
        os << e << ',' << format_g6(r.epoch_mean(e)) << ',' << format_g6(r.epoch_sd(e)) << '\n';
}

} // namespace drowse

#endif // DROWSE_TRAINING_HPP_
