#ifndef DROWSE_CLASSIFIERS_HPP_
#define DROWSE_CLASSIFIERS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "dataio.hpp"

namespace drowse {

enum class ClassifierKind
{
    lr,
    lda,
    qda,
    gnb,
    knn,
};

inline const char* to_string(ClassifierKind k)
{
    switch (k) {
    case ClassifierKind::lr: return "lr";
    case ClassifierKind::lda: return "lda";
    case ClassifierKind::qda: return "qda";
    case ClassifierKind::gnb: return "gnb";
    case ClassifierKind::knn: return "knn";
    }
    return "unknown";
}

struct ClassifierOptions
{
    double lr_l2 = 1e-4;
    std::size_t lr_iterations = 500;
    double lr_step = 0.1;
    double shrinkage = 1e-3;      // times trace / d, added to covariance diagonals
    double gnb_var_floor = 1e-9;
    std::size_t knn_k = 5;
};

/// A fitted classifier. Features are standardized with the training mean and
/// standard deviation before any model sees them.
class ClassifierModel
{
public:
    using Matrix = Eigen::MatrixXd;
    using Vector = Eigen::VectorXd;

    ClassifierKind kind() const noexcept { return kind_; }
    std::size_t dimension() const noexcept { return static_cast<std::size_t>(mean_.size()); }

    friend ClassifierModel fit_classifier(ClassifierKind, const std::vector<std::vector<double>>&,
                                          std::span<const Label>, const ClassifierOptions&);

    /// Per-class scores; the prediction is the larger one, ties -> alert.
    std::array<double, 2> scores(std::span<const double> features) const
    {
        if (features.size() != dimension())
            throw std::invalid_argument("predict: feature dimension " +
                                        std::to_string(features.size()) + ", model expects " +
                                        std::to_string(dimension()));
        const Vector z = standardize(features);
        switch (kind_) {
        case ClassifierKind::lr: {
            const double logit = weights_.dot(z) + bias_;
            return {0.0, logit};
        }
        case ClassifierKind::lda:
        case ClassifierKind::qda:
        case ClassifierKind::gnb: {
            std::array<double, 2> s{};
            for (std::size_t c = 0; c < 2; ++c)
                s[c] = gaussian_log_score(c, z);
            return s;
        }
        case ClassifierKind::knn: return knn_votes(z);
        }
        throw std::logic_error("unknown classifier kind");
    }

    Label predict(std::span<const double> features) const
    {
        const auto s = scores(features);
        return s[1] > s[0] ? Label::drowsy : Label::alert;
    }

    std::vector<Label> predict(const std::vector<std::vector<double>>& rows) const
    {
        std::vector<Label> out;
        out.reserve(rows.size());
        for (const auto& r : rows)
            out.push_back(predict(r));
        return out;
    }

private:
    Vector standardize(std::span<const double> x) const
    {
        Vector z(mean_.size());
        for (Eigen::Index i = 0; i < z.size(); ++i)
            z[i] = (x[static_cast<std::size_t>(i)] - mean_[i]) / scale_[i];
        return z;
    }

    double gaussian_log_score(std::size_t c, const Vector& z) const
    {
        const Vector diff = z - class_mean_[c];
        if (kind_ == ClassifierKind::gnb) {
            double s = log_prior_[c];
            for (Eigen::Index i = 0; i < diff.size(); ++i) {
                const double v = class_var_[c][i];
                s -= 0.5 * (std::log(2.0 * std::numbers::pi * v) + diff[i] * diff[i] / v);
            }
            return s;
        }
        const auto& chol = kind_ == ClassifierKind::lda ? chol_[0] : chol_[c];
        const double log_det = kind_ == ClassifierKind::lda ? log_det_[0] : log_det_[c];
        const Vector solved = chol.solve(diff);
        return log_prior_[c] - 0.5 * log_det - 0.5 * diff.dot(solved);
    }

    std::array<double, 2> knn_votes(const Vector& z) const
    {
        const auto n = static_cast<std::size_t>(train_.rows());
        std::vector<std::pair<double, std::size_t>> dist(n);
        for (std::size_t i = 0; i < n; ++i)
            dist[i] = {(train_.row(static_cast<Eigen::Index>(i)).transpose() - z).squaredNorm(), i};
        const std::size_t k = std::min(k_, n);
        // pair ordering breaks distance ties by lower training index
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        std::array<double, 2> votes{};
        for (std::size_t i = 0; i < k; ++i)
            votes[static_cast<std::size_t>(to_int(train_labels_[dist[i].second]))] += 1.0;
        return votes;
    }

    ClassifierKind kind_ = ClassifierKind::lda;
    Vector mean_, scale_;
    // lr
    Vector weights_;
    double bias_ = 0.0;
    // gaussian models
    std::array<double, 2> log_prior_{};
    std::array<Vector, 2> class_mean_;
    std::array<Vector, 2> class_var_;
    std::array<Eigen::LLT<Matrix>, 2> chol_;
    std::array<double, 2> log_det_{};
    // knn
    Matrix train_;
    std::vector<Label> train_labels_;
    std::size_t k_ = 5;
};

namespace detail {

inline Eigen::MatrixXd shrink(Eigen::MatrixXd cov, double factor)
{
    const double d = static_cast<double>(cov.rows());
    const double gamma = factor * cov.trace() / d;
    cov.diagonal().array() += std::max(gamma, 1e-12);
    return cov;
}

inline double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt)
{
    const Eigen::MatrixXd l = llt.matrixL();
    return 2.0 * l.diagonal().array().log().sum();
}

} // namespace detail

/// Fits one of the five classical classifiers. No randomness is involved.
inline ClassifierModel fit_classifier(ClassifierKind kind,
                                      const std::vector<std::vector<double>>& features,
                                      std::span<const Label> labels,
                                      const ClassifierOptions& opt = {})
{
    using Matrix = ClassifierModel::Matrix;
    using Vector = ClassifierModel::Vector;
    if (features.size() != labels.size())
        throw std::invalid_argument("fit_classifier: feature/label count mismatch");
    if (features.empty())
        throw std::invalid_argument("fit_classifier: no training data");
    const std::size_t n = features.size(), d = features.front().size();
    if (d == 0)
        throw std::invalid_argument("fit_classifier: empty feature vectors");

    std::array<std::size_t, 2> counts{};
    for (auto l : labels)
        ++counts[static_cast<std::size_t>(to_int(l))];
    if (counts[0] == 0 || counts[1] == 0)
        throw std::invalid_argument("fit_classifier: training data must contain both classes");

    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        if (features[i].size() != d)
            throw std::invalid_argument("fit_classifier: ragged feature rows");
        for (std::size_t j = 0; j < d; ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[i][j];
    }
    if (!x.allFinite())
        throw NumericError("fit_classifier: non-finite features");

    ClassifierModel model;
    model.kind_ = kind;
    model.mean_ = x.colwise().mean().transpose();
    model.scale_ = ((x.rowwise() - model.mean_.transpose()).array().square().colwise().sum() /
                    static_cast<double>(n))
                       .sqrt()
                       .transpose();
    for (Eigen::Index j = 0; j < model.scale_.size(); ++j)
        if (!(model.scale_[j] > 1e-12))
            model.scale_[j] = 1.0;
    const Matrix z = (x.rowwise() - model.mean_.transpose()).array().rowwise() /
                     model.scale_.transpose().array();

    for (std::size_t c = 0; c < 2; ++c)
        model.log_prior_[c] = std::log(static_cast<double>(counts[c]) / static_cast<double>(n));

    auto rows_of = [&](std::size_t c) {
        Matrix out(static_cast<Eigen::Index>(counts[c]), static_cast<Eigen::Index>(d));
        Eigen::Index r = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (static_cast<std::size_t>(to_int(labels[i])) == c)
                out.row(r++) = z.row(static_cast<Eigen::Index>(i));
        return out;
    };

    switch (kind) {
    case ClassifierKind::lr: {
        Vector w = Vector::Zero(static_cast<Eigen::Index>(d));
        double b = 0.0;
        Vector y(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            y[static_cast<Eigen::Index>(i)] = to_int(labels[i]);
        for (std::size_t it = 0; it < opt.lr_iterations; ++it) {
            const Vector logits = (z * w).array() + b;
            const Vector p = (1.0 + (-logits.array()).exp()).inverse();
            const Vector err = p - y;
            const Vector grad_w = z.transpose() * err / static_cast<double>(n) + opt.lr_l2 * w;
            const double grad_b = err.mean();
            w -= opt.lr_step * grad_w;
            b -= opt.lr_step * grad_b;
        }
        model.weights_ = w;
        model.bias_ = b;
        break;
    }
    case ClassifierKind::lda:
    case ClassifierKind::qda: {
        Matrix pooled = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        std::array<Matrix, 2> scatter;
        for (std::size_t c = 0; c < 2; ++c) {
            const Matrix rows = rows_of(c);
            model.class_mean_[c] = rows.colwise().mean().transpose();
            const Matrix centered = rows.rowwise() - model.class_mean_[c].transpose();
            scatter[c] = centered.transpose() * centered;
            pooled += scatter[c];
        }
        if (kind == ClassifierKind::lda) {
            const double dof = std::max(1.0, static_cast<double>(n) - 2.0);
            model.chol_[0].compute(detail::shrink(pooled / dof, opt.shrinkage));
            model.log_det_[0] = detail::log_det_from_llt(model.chol_[0]);
        } else {
            for (std::size_t c = 0; c < 2; ++c) {
                const double dof = std::max(1.0, static_cast<double>(counts[c]) - 1.0);
                model.chol_[c].compute(detail::shrink(scatter[c] / dof, opt.shrinkage));
                model.log_det_[c] = detail::log_det_from_llt(model.chol_[c]);
            }
        }
        for (const auto& chol : model.chol_)
            if (kind == ClassifierKind::qda && chol.info() != Eigen::Success)
                throw NumericError("fit_classifier: covariance is not positive definite");
        if (kind == ClassifierKind::lda && model.chol_[0].info() != Eigen::Success)
            throw NumericError("fit_classifier: covariance is not positive definite");
        break;
    }
    case ClassifierKind::gnb: {
        for (std::size_t c = 0; c < 2; ++c) {
            const Matrix rows = rows_of(c);
            model.class_mean_[c] = rows.colwise().mean().transpose();
            model.class_var_[c] =
                ((rows.rowwise() - model.class_mean_[c].transpose()).array().square().colwise().sum() /
                 static_cast<double>(rows.rows()))
                    .transpose()
                    .max(opt.gnb_var_floor);
        }
        break;
    }
    case ClassifierKind::knn: {
        if (opt.knn_k == 0)
            throw std::invalid_argument("fit_classifier: k must be positive");
        model.train_ = z;
        model.train_labels_.assign(labels.begin(), labels.end());
        model.k_ = opt.knn_k;
        break;
    }
    }
    return model;
}

} // namespace drowse

#endif // DROWSE_CLASSIFIERS_HPP_
