#ifndef DROWSE_NETWORK_HPP_
#define DROWSE_NETWORK_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "binary_io.hpp"
#include "dataio.hpp"
#include "error.hpp"
#include "loss.hpp"
#include "numerics.hpp"

namespace drowse {

/// Layer sizes of the convolutional LSTM. Defaults are the full model; the
/// gradient checks run on smaller instances.
struct Architecture
{
    std::size_t input_length = kWindowLength;
    std::size_t kernels = 32;
    std::size_t kernel_length = 64;
    std::size_t pool = 8;

    /// LSTM state size; equals the number of classes so h_T feeds softmax directly.
    static constexpr std::size_t hidden = 2;

    std::size_t steps() const noexcept { return input_length / pool; }
    std::size_t pad_left() const noexcept { return (kernel_length - 1) / 2; }
    std::size_t pad_right() const noexcept { return kernel_length - 1 - pad_left(); }

    void validate() const
    {
        if (input_length == 0 || kernels == 0 || kernel_length == 0 || pool == 0)
            throw std::invalid_argument("Architecture: sizes must be positive");
        if (input_length % pool != 0)
            throw std::invalid_argument("Architecture: input length not divisible by pool size");
    }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

enum class Mode
{
    train,
    eval,
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// LSTM gate order used by every per-gate array below.
enum Gate : std::size_t
{
    kInput = 0,
    kForget = 1,
    kCandidate = 2,
    kOutput = 3,
};
inline constexpr std::array<std::string_view, 4> kGateSuffix{"i", "f", "g", "o"};

struct ModelParams
{
    Architecture arch;
    Tensor conv_w;      // [kernels, 1, kernel_length]
    Tensor conv_b;      // [kernels]
    Tensor bn_gamma;    // [kernels]
    Tensor bn_beta;
    Tensor bn_run_mean;
    Tensor bn_run_var;
    std::array<Tensor, 4> lstm_W;   // [2, kernels]
    std::array<Tensor, 4> lstm_U;   // [2, 2]
    std::array<Tensor, 4> lstm_b;   // [2]

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Same layout as the learnable part of ModelParams.
struct Gradients
{
    Tensor conv_w;
    Tensor conv_b;
    Tensor bn_gamma;
    Tensor bn_beta;
    std::array<Tensor, 4> lstm_W;
    std::array<Tensor, 4> lstm_U;
    std::array<Tensor, 4> lstm_b;

    friend bool operator==(const Gradients&, const Gradients&) = default;
};

/// Calls f(name, tensor) for every learnable tensor, in file order.
template <typename P, typename F>
void for_each_learnable(P& p, F&& f)
{
    f(std::string("conv.w"), p.conv_w);
    f(std::string("conv.b"), p.conv_b);
    f(std::string("bn.gamma"), p.bn_gamma);
    f(std::string("bn.beta"), p.bn_beta);
    for (std::size_t g = 0; g < 4; ++g)
        f("lstm.W_" + std::string(kGateSuffix[g]), p.lstm_W[g]);
    for (std::size_t g = 0; g < 4; ++g)
        f("lstm.U_" + std::string(kGateSuffix[g]), p.lstm_U[g]);
    for (std::size_t g = 0; g < 4; ++g)
        f("lstm.b_" + std::string(kGateSuffix[g]), p.lstm_b[g]);
}

/// Every stored tensor of a model, learnable or not, in file order.
template <typename P, typename F>
    requires std::is_same_v<std::remove_const_t<P>, ModelParams>
void for_each_tensor(P& p, F&& f)
{
    f(std::string("conv.w"), p.conv_w);
    f(std::string("conv.b"), p.conv_b);
    f(std::string("bn.gamma"), p.bn_gamma);
    f(std::string("bn.beta"), p.bn_beta);
    f(std::string("bn.run_mean"), p.bn_run_mean);
    f(std::string("bn.run_var"), p.bn_run_var);
    for (std::size_t g = 0; g < 4; ++g)
        f("lstm.W_" + std::string(kGateSuffix[g]), p.lstm_W[g]);
    for (std::size_t g = 0; g < 4; ++g)
        f("lstm.U_" + std::string(kGateSuffix[g]), p.lstm_U[g]);
    for (std::size_t g = 0; g < 4; ++g)
        f("lstm.b_" + std::string(kGateSuffix[g]), p.lstm_b[g]);
}

/// Expected shape of each named tensor for an architecture.
inline std::map<std::string, std::vector<std::size_t>> tensor_shapes(const Architecture& a)
{
    const std::size_t k = a.kernels, d = Architecture::hidden;
    std::map<std::string, std::vector<std::size_t>> shapes{
        {"conv.w", {k, 1, a.kernel_length}},
        {"conv.b", {k}},
        {"bn.gamma", {k}},
        {"bn.beta", {k}},
        {"bn.run_mean", {k}},
        {"bn.run_var", {k}},
    };
    for (auto s : kGateSuffix) {
        shapes["lstm.W_" + std::string(s)] = {d, k};
        shapes["lstm.U_" + std::string(s)] = {d, d};
        shapes["lstm.b_" + std::string(s)] = {d};
    }
    return shapes;
}

inline ModelParams zero_params(const Architecture& arch = {})
{
    arch.validate();
    ModelParams p;
    p.arch = arch;
    const auto shapes = tensor_shapes(arch);
    for_each_tensor(p, [&](const std::string& name, Tensor& t) { t = Tensor(shapes.at(name)); });
    p.bn_gamma.fill(1.0);
    p.bn_run_var.fill(1.0);
    return p;
}

inline Gradients zero_gradients(const Architecture& arch)
{
    Gradients g;
    const auto shapes = tensor_shapes(arch);
    for_each_learnable(g, [&](const std::string& name, Tensor& t) { t = Tensor(shapes.at(name)); });
    return g;
}

/// Glorot-uniform bound for a tensor with the given fans.
inline double glorot_bound(std::size_t fan_in, std::size_t fan_out)
{
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

/// Glorot-uniform weights, zero biases except forget-gate bias 1, identity
/// batch-norm. Conv fans follow the usual receptive-field convention:
/// fan_in = 1 * kernel_length, fan_out = kernels * kernel_length.
inline ModelParams init_params(Rng& rng, const Architecture& arch = {})
{
    ModelParams p = zero_params(arch);
    auto fill_uniform = [&](Tensor& t, double bound) {
        for (double& v : t.values())
            v = rng.uniform(-bound, bound);
    };
    fill_uniform(p.conv_w, glorot_bound(arch.kernel_length, arch.kernels * arch.kernel_length));
    for (auto& w : p.lstm_W)
        fill_uniform(w, glorot_bound(arch.kernels, Architecture::hidden));
    for (auto& u : p.lstm_U)
        fill_uniform(u, glorot_bound(Architecture::hidden, Architecture::hidden));
    p.lstm_b[kForget].fill(1.0);
    return p;
}

//-----------------------------------------------------------------------------
// Layers
//-----------------------------------------------------------------------------

namespace detail {

inline double dot(const double* a, const double* b, std::size_t n) noexcept
{
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i)
        s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> padded_row(const double* x, std::size_t length, std::size_t left,
                                      std::size_t right)
{
    std::vector<double> out(left + length + right, 0.0);
    std::copy(x, x + length, out.begin() + static_cast<std::ptrdiff_t>(left));
    return out;
}

} // namespace detail

/// "Same" 1-D convolution (cross-correlation) with zero padding split
/// floor((k-1)/2) left and the rest right:
///   out[b, j, t] = bias[j] + sum_k w[j, 0, k] * x_pad[b, t + k].
inline Tensor conv1d_same(const Tensor& x, const Tensor& w, const Tensor& bias)
{
    if (x.rank() != 3 || x.dim(1) != 1)
        throw std::invalid_argument("conv1d_same: input must be [B, 1, L]");
    if (w.rank() != 3 || w.dim(1) != 1 || bias.rank() != 1 || bias.dim(0) != w.dim(0))
        throw std::invalid_argument("conv1d_same: weights must be [K, 1, len] with bias [K]");
    const std::size_t batch = x.dim(0), length = x.dim(2);
    const std::size_t kernels = w.dim(0), taps = w.dim(2);
    const std::size_t left = (taps - 1) / 2, right = taps - 1 - left;

    Tensor out({batch, kernels, length});
    for (std::size_t b = 0; b < batch; ++b) {
        const auto xpad = detail::padded_row(&x(b, 0, 0), length, left, right);
        for (std::size_t j = 0; j < kernels; ++j) {
            double* row = &out(b, j, 0);
            std::fill(row, row + length, bias[j]);
            for (std::size_t k = 0; k < taps; ++k) {
                const double wk = w(j, 0, k);
                const double* src = xpad.data() + k;
                for (std::size_t t = 0; t < length; ++t)
                    row[t] += wk * src[t];
            }
        }
    }
    return out;
}

struct BatchNormResult
{
    Tensor out;         // gamma * normalized + beta
    Tensor normalized;  // (x - mean) * inv_std
    Tensor mean;        // statistics used for normalization
    Tensor var;
    Tensor inv_std;
};

/// Per-channel batch normalization of [B, C, L]. Train mode uses the batch
/// statistics over (B, L); eval mode uses the running statistics.
inline BatchNormResult batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                 const Tensor& run_mean, const Tensor& run_var, Mode mode,
                                 double eps = kBatchNormEps)
{
    if (x.rank() != 3)
        throw std::invalid_argument("batchnorm: input must be [B, C, L]");
    const std::size_t batch = x.dim(0), channels = x.dim(1), length = x.dim(2);
    if (gamma.size() != channels || beta.size() != channels || run_mean.size() != channels ||
        run_var.size() != channels)
        throw std::invalid_argument("batchnorm: parameter size mismatch");
    if (mode == Mode::train && batch < 2)
        throw std::invalid_argument("batchnorm: train mode needs a batch of at least 2");

    BatchNormResult r{Tensor(x.dims()), Tensor(x.dims()), Tensor({channels}),
                      Tensor({channels}), Tensor({channels})};
    const double count = static_cast<double>(batch * length);
    for (std::size_t c = 0; c < channels; ++c) {
        double m = 0.0, v = 0.0;
        if (mode == Mode::train) {
            for (std::size_t b = 0; b < batch; ++b) {
                const double* row = &x(b, c, 0);
                for (std::size_t t = 0; t < length; ++t)
                    m += row[t];
            }
            m /= count;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* row = &x(b, c, 0);
                for (std::size_t t = 0; t < length; ++t)
                    v += (row[t] - m) * (row[t] - m);
            }
            v /= count;
        } else {
            m = run_mean[c];
            v = run_var[c];
        }
        const double inv_std = 1.0 / std::sqrt(v + eps);
        r.mean[c] = m;
        r.var[c] = v;
        r.inv_std[c] = inv_std;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* in = &x(b, c, 0);
            double* norm = &r.normalized(b, c, 0);
            double* out = &r.out(b, c, 0);
            for (std::size_t t = 0; t < length; ++t) {
                norm[t] = (in[t] - m) * inv_std;
                out[t] = gamma[c] * norm[t] + beta[c];
            }
        }
    }
    return r;
}

inline double elu(double x) noexcept { return x > 0.0 ? x : std::expm1(x); }
inline double elu_derivative(double x) noexcept { return x > 0.0 ? 1.0 : std::exp(x); }

inline Tensor elu(const Tensor& x)
{
    Tensor out(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = elu(x[i]);
    return out;
}

/// Non-overlapping average pooling along the last axis of [B, C, L].
inline Tensor avgpool(const Tensor& x, std::size_t window)
{
    if (x.rank() != 3)
        throw std::invalid_argument("avgpool: input must be [B, C, L]");
    if (window == 0 || x.dim(2) % window != 0)
        throw std::invalid_argument("avgpool: length not divisible by window");
    const std::size_t batch = x.dim(0), channels = x.dim(1), steps = x.dim(2) / window;
    Tensor out({batch, channels, steps});
    const double scale = 1.0 / static_cast<double>(window);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c) {
            const double* in = &x(b, c, 0);
            for (std::size_t s = 0; s < steps; ++s) {
                double sum = 0.0;
                for (std::size_t u = 0; u < window; ++u)
                    sum += in[s * window + u];
                out(b, c, s) = sum * scale;
            }
        }
    return out;
}

/// Gate activations and states of an unrolled LSTM, each [B, T, 2].
struct LstmTrace
{
    std::array<Tensor, 4> gates;   // i, f, g, o after their nonlinearities
    Tensor cell;
    Tensor cell_tanh;
    Tensor hidden;
};

/// Forget-gate LSTM without peepholes, h_0 = c_0 = 0, over a [B, K, T] sequence.
inline LstmTrace lstm_forward(const Tensor& seq, const ModelParams& p)
{
    if (seq.rank() != 3 || seq.dim(1) != p.lstm_W[0].dim(1))
        throw std::invalid_argument("lstm_forward: sequence must be [B, K, T]");
    constexpr std::size_t D = Architecture::hidden;
    const std::size_t batch = seq.dim(0), features = seq.dim(1), steps = seq.dim(2);

    LstmTrace tr;
    for (auto& g : tr.gates)
        g = Tensor({batch, steps, D});
    tr.cell = Tensor({batch, steps, D});
    tr.cell_tanh = Tensor({batch, steps, D});
    tr.hidden = Tensor({batch, steps, D});

    std::vector<double> x(features);
    for (std::size_t b = 0; b < batch; ++b) {
        std::array<double, D> h{}, c{};
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t j = 0; j < features; ++j)
                x[j] = seq(b, j, t);
            std::array<std::array<double, D>, 4> act{};
            for (std::size_t g = 0; g < 4; ++g)
                for (std::size_t d = 0; d < D; ++d) {
                    double a = p.lstm_b[g][d] + detail::dot(&p.lstm_W[g](d, 0), x.data(), features);
                    for (std::size_t e = 0; e < D; ++e)
                        a += p.lstm_U[g](d, e) * h[e];
                    act[g][d] = (g == kCandidate) ? std::tanh(a) : detail::sigmoid(a);
                }
            for (std::size_t d = 0; d < D; ++d) {
                c[d] = act[kForget][d] * c[d] + act[kInput][d] * act[kCandidate][d];
                const double tc = std::tanh(c[d]);
                h[d] = act[kOutput][d] * tc;
                for (std::size_t g = 0; g < 4; ++g)
                    tr.gates[g](b, t, d) = act[g][d];
                tr.cell(b, t, d) = c[d];
                tr.cell_tanh(b, t, d) = tc;
                tr.hidden(b, t, d) = h[d];
            }
        }
    }
    return tr;
}

/// Every intermediate of one forward pass.
struct ForwardTrace
{
    Mode mode = Mode::eval;
    Tensor input;       // [B, 1, L]
    Tensor conv_out;    // [B, K, L]
    BatchNormResult bn;
    Tensor activated;   // ELU output, [B, K, L]
    Tensor pooled;      // [B, K, T]
    LstmTrace lstm;
    Tensor probabilities; // [B, 2]
};

/// conv -> batch norm -> ELU -> average pool -> LSTM -> softmax(h_T).
inline ForwardTrace model_forward(const Tensor& batch, const ModelParams& p, Mode mode)
{
    if (batch.rank() != 3 || batch.dim(1) != 1 || batch.dim(2) != p.arch.input_length)
        throw std::invalid_argument("model_forward: batch must be [B, 1, " +
                                    std::to_string(p.arch.input_length) + "]");
    ForwardTrace tr;
    tr.mode = mode;
    tr.input = batch;
    tr.conv_out = conv1d_same(batch, p.conv_w, p.conv_b);
    tr.bn = batchnorm(tr.conv_out, p.bn_gamma, p.bn_beta, p.bn_run_mean, p.bn_run_var, mode);
    tr.activated = elu(tr.bn.out);
    tr.pooled = avgpool(tr.activated, p.arch.pool);
    tr.lstm = lstm_forward(tr.pooled, p);

    const std::size_t n = batch.dim(0), last = p.arch.steps() - 1;
    tr.probabilities = Tensor({n, 2});
    for (std::size_t b = 0; b < n; ++b) {
        const std::array<double, 2> h{tr.lstm.hidden(b, last, 0), tr.lstm.hidden(b, last, 1)};
        const auto prob = softmax(h);
        tr.probabilities(b, 0) = prob[0];
        tr.probabilities(b, 1) = prob[1];
    }
    return tr;
}

/// Folds the batch statistics of a train-mode pass into the running averages:
/// new = (1 - m) * old + m * batch, with the unbiased batch variance.
inline void update_running_stats(ModelParams& p, const ForwardTrace& tr,
                                 double momentum = kBatchNormMomentum)
{
    if (tr.mode != Mode::train)
        return;
    const double count = static_cast<double>(tr.conv_out.dim(0) * tr.conv_out.dim(2));
    const double unbias = count / (count - 1.0);
    for (std::size_t c = 0; c < p.bn_run_mean.size(); ++c) {
        p.bn_run_mean[c] = (1.0 - momentum) * p.bn_run_mean[c] + momentum * tr.bn.mean[c];
        p.bn_run_var[c] = (1.0 - momentum) * p.bn_run_var[c] + momentum * tr.bn.var[c] * unbias;
    }
}

//-----------------------------------------------------------------------------
// Backward pass
//-----------------------------------------------------------------------------

/// Backpropagation through time from dL/dh_T ([B, 2]); accumulates LSTM
/// parameter gradients into g and returns dL/d(sequence) as [B, K, T].
inline Tensor lstm_backward(const Tensor& seq, const LstmTrace& tr, const ModelParams& p,
                            const Tensor& d_last_hidden, Gradients& g)
{
    constexpr std::size_t D = Architecture::hidden;
    const std::size_t batch = seq.dim(0), features = seq.dim(1), steps = seq.dim(2);
    Tensor d_seq({batch, features, steps});

    std::vector<double> x(features);
    for (std::size_t b = 0; b < batch; ++b) {
        std::array<double, D> dh{d_last_hidden(b, 0), d_last_hidden(b, 1)};
        std::array<double, D> dc{};
        for (std::size_t t = steps; t-- > 0;) {
            for (std::size_t j = 0; j < features; ++j)
                x[j] = seq(b, j, t);
            std::array<double, D> h_prev{}, c_prev{};
            if (t > 0)
                for (std::size_t d = 0; d < D; ++d) {
                    h_prev[d] = tr.hidden(b, t - 1, d);
                    c_prev[d] = tr.cell(b, t - 1, d);
                }

            std::array<std::array<double, D>, 4> da{};
            std::array<double, D> dc_prev{};
            for (std::size_t d = 0; d < D; ++d) {
                const double i = tr.gates[kInput](b, t, d);
                const double f = tr.gates[kForget](b, t, d);
                const double gg = tr.gates[kCandidate](b, t, d);
                const double o = tr.gates[kOutput](b, t, d);
                const double tc = tr.cell_tanh(b, t, d);

                const double d_o = dh[d] * tc;
                const double dcell = dc[d] + dh[d] * o * (1.0 - tc * tc);
                da[kInput][d] = dcell * gg * i * (1.0 - i);
                da[kForget][d] = dcell * c_prev[d] * f * (1.0 - f);
                da[kCandidate][d] = dcell * i * (1.0 - gg * gg);
                da[kOutput][d] = d_o * o * (1.0 - o);
                dc_prev[d] = dcell * f;
            }

            std::array<double, D> dh_prev{};
            for (std::size_t gate = 0; gate < 4; ++gate) {
                const Tensor& W = p.lstm_W[gate];
                const Tensor& U = p.lstm_U[gate];
                for (std::size_t d = 0; d < D; ++d) {
                    const double a = da[gate][d];
                    g.lstm_b[gate][d] += a;
                    double* gw = &g.lstm_W[gate](d, 0);
                    const double* w = &W(d, 0);
                    for (std::size_t j = 0; j < features; ++j) {
                        gw[j] += a * x[j];
                        d_seq(b, j, t) += w[j] * a;
                    }
                    for (std::size_t e = 0; e < D; ++e) {
                        g.lstm_U[gate](d, e) += a * h_prev[e];
                        dh_prev[e] += U(d, e) * a;
                    }
                }
            }
            dh = dh_prev;
            dc = dc_prev;
        }
    }
    return d_seq;
}

struct GradientResult
{
    double loss = 0.0;
    Gradients grads;
    ForwardTrace trace;
};

/// Mean cross-entropy over a train-mode batch and its exact gradient with
/// respect to every learnable tensor.
inline GradientResult model_gradients(const Tensor& batch, std::span<const Label> labels,
                                      const ModelParams& p)
{
    const std::size_t n = batch.dim(0);
    if (labels.size() != n)
        throw std::invalid_argument("model_gradients: label count mismatch");
    if (n < 2)
        throw std::invalid_argument("model_gradients: batch must hold at least 2 samples");

    GradientResult r;
    r.trace = model_forward(batch, p, Mode::train);
    const ForwardTrace& tr = r.trace;
    r.loss = cross_entropy(tr.probabilities, labels);
    if (!std::isfinite(r.loss))
        throw NumericError("model_gradients: non-finite loss");
    r.grads = zero_gradients(p.arch);
    Gradients& g = r.grads;

    // softmax + cross-entropy: dL/dh_T = (p - onehot(y)) / B
    Tensor d_last({n, 2});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < 2; ++c)
            d_last(b, c) = (tr.probabilities(b, c) - (to_int(labels[b]) == static_cast<int>(c) ? 1.0 : 0.0)) /
                           static_cast<double>(n);

    const Tensor d_pooled = lstm_backward(tr.pooled, tr.lstm, p, d_last, g);

    const std::size_t channels = p.arch.kernels, length = p.arch.input_length;
    const std::size_t window = p.arch.pool;
    const double inv_window = 1.0 / static_cast<double>(window);

    // pool and ELU
    Tensor d_bn({n, channels, length});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < channels; ++c) {
            const double* y = &tr.bn.out(b, c, 0);
            const double* a = &tr.activated(b, c, 0);
            double* dy = &d_bn(b, c, 0);
            for (std::size_t t = 0; t < length; ++t) {
                const double da = d_pooled(b, c, t / window) * inv_window;
                dy[t] = da * (y[t] > 0.0 ? 1.0 : a[t] + 1.0);
            }
        }

    // batch norm through the batch statistics
    Tensor d_conv({n, channels, length});
    const double count = static_cast<double>(n * length);
    for (std::size_t c = 0; c < channels; ++c) {
        double sum_dy = 0.0, sum_dy_norm = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            const double* dy = &d_bn(b, c, 0);
            const double* z = &tr.bn.normalized(b, c, 0);
            for (std::size_t t = 0; t < length; ++t) {
                sum_dy += dy[t];
                sum_dy_norm += dy[t] * z[t];
            }
        }
        g.bn_beta[c] = sum_dy;
        g.bn_gamma[c] = sum_dy_norm;
        const double gamma = p.bn_gamma[c];
        const double scale = gamma * tr.bn.inv_std[c] / count;
        for (std::size_t b = 0; b < n; ++b) {
            const double* dy = &d_bn(b, c, 0);
            const double* z = &tr.bn.normalized(b, c, 0);
            double* dx = &d_conv(b, c, 0);
            for (std::size_t t = 0; t < length; ++t)
                dx[t] = scale * (count * dy[t] - sum_dy - z[t] * sum_dy_norm);
        }
    }

    // convolution
    const std::size_t taps = p.arch.kernel_length;
    for (std::size_t b = 0; b < n; ++b) {
        const auto xpad = detail::padded_row(&tr.input(b, 0, 0), length, p.arch.pad_left(),
                                             p.arch.pad_right());
        for (std::size_t c = 0; c < channels; ++c) {
            const double* dz = &d_conv(b, c, 0);
            double bias_sum = 0.0;
            for (std::size_t t = 0; t < length; ++t)
                bias_sum += dz[t];
            g.conv_b[c] += bias_sum;
            for (std::size_t k = 0; k < taps; ++k)
                g.conv_w(c, 0, k) += detail::dot(dz, xpad.data() + k, length);
        }
    }
    return r;
}

//-----------------------------------------------------------------------------
// Batching helpers
//-----------------------------------------------------------------------------

inline Tensor make_batch(const SampleSet& data, std::span<const std::size_t> indices)
{
    Tensor batch({indices.size(), 1, kWindowLength});
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& s = data[indices[b]];
        for (std::size_t t = 0; t < kWindowLength; ++t)
            batch(b, 0, t) = static_cast<double>(s.values[t]);
    }
    return batch;
}

inline std::vector<Label> batch_labels(const SampleSet& data, std::span<const std::size_t> indices)
{
    std::vector<Label> labels;
    labels.reserve(indices.size());
    for (auto i : indices)
        labels.push_back(data[i].label);
    return labels;
}

/// Eval-mode class probabilities for the given samples, [n, 2].
inline Tensor predict_proba(const ModelParams& p, const SampleSet& data,
                            std::span<const std::size_t> indices, std::size_t chunk = 64)
{
    Tensor out({std::max<std::size_t>(indices.size(), 1), 2});
    for (std::size_t start = 0; start < indices.size(); start += chunk) {
        const auto part = indices.subspan(start, std::min(chunk, indices.size() - start));
        const auto tr = model_forward(make_batch(data, part), p, Mode::eval);
        for (std::size_t b = 0; b < part.size(); ++b) {
            out(start + b, 0) = tr.probabilities(b, 0);
            out(start + b, 1) = tr.probabilities(b, 1);
        }
    }
    return out;
}

/// Argmax with ties resolved to label 0 (alert).
inline Label predict_label(double p_alert, double p_drowsy) noexcept
{
    return p_drowsy > p_alert ? Label::drowsy : Label::alert;
}

//-----------------------------------------------------------------------------
// Model files
//-----------------------------------------------------------------------------

inline void save_params(const ModelParams& p, std::ostream& os)
{
    detail::ByteWriter w(os);
    w.bytes("EGLM");
    w.u32(kFormatVersion);
    std::uint32_t count = 0;
    for_each_tensor(p, [&](const std::string&, const Tensor&) { ++count; });
    w.u32(count);
    for_each_tensor(p, [&](const std::string& name, const Tensor& t) {
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.bytes(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.dims())
            w.u32(static_cast<std::uint32_t>(d));
        for (double v : t.values())
            w.f32(static_cast<float>(v));
    });
    w.check("model");
}

/// Reads a model for the given architecture. Values come back as the
/// binary32 numbers stored in the file.
inline ModelParams load_params(std::istream& is, const Architecture& arch = {},
                               const std::string& context = "model")
{
    detail::ByteReader r(is, context);
    if (r.bytes(4) != "EGLM")
        throw FormatError(FormatErrc::bad_magic, context);
    if (const auto v = r.u32(); v != kFormatVersion)
        throw FormatError(FormatErrc::bad_version, context + ": version " + std::to_string(v));

    ModelParams p = zero_params(arch);
    std::map<std::string, Tensor*> slots;
    for_each_tensor(p, [&](const std::string& name, Tensor& t) { slots[name] = &t; });
    const auto shapes = tensor_shapes(arch);

    std::set<std::string> seen;
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name = r.bytes(r.u16());
        const auto rank = r.u8();
        if (rank == 0 || rank > 3)
            throw FormatError(FormatErrc::bad_header, context + ": tensor " + name + " has rank " +
                                                          std::to_string(rank));
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims)
            d = r.u32();
        const auto slot = slots.find(name);
        if (slot == slots.end())
            throw FormatError(FormatErrc::unknown_tensor, context + ": " + name);
        if (!seen.insert(name).second)
            throw FormatError(FormatErrc::bad_header, context + ": duplicate tensor " + name);
        if (dims != shapes.at(name))
            throw FormatError(FormatErrc::shape_mismatch, context + ": " + name);
        for (double& v : slot->second->values()) {
            v = static_cast<double>(r.f32());
            if (!std::isfinite(v))
                throw FormatError(FormatErrc::bad_header, context + ": non-finite value in " + name);
        }
    }
    for (const auto& [name, _] : slots)
        if (!seen.contains(name))
            throw FormatError(FormatErrc::missing_tensor, context + ": " + name);
    for (double v : p.bn_run_var.values())
        if (!(v > 0.0))
            throw FormatError(FormatErrc::bad_header, context + ": bn.run_var must be positive");
    return p;
}

inline void save_params(const ModelParams& p, const std::filesystem::path& path)
{
    auto os = detail::open_out(path);
    save_params(p, os);
}

inline ModelParams load_params(const std::filesystem::path& path, const Architecture& arch = {})
{
    auto is = detail::open_in(path);
    return load_params(is, arch, path.string());
}

} // namespace drowse

#endif // DROWSE_NETWORK_HPP_
