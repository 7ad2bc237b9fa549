#pragma once

// Bayesian logistic regression with a hierarchical prior:
// beta ~ N(0, alpha^{-1} I), alpha ~ Gamma(a0, b0) with a0 = 1, b0 = 0.01.
// The sampled parameter vector is theta = [beta, log alpha]; the prior on
// alpha picks up the log-alpha change-of-variables term. Includes CSV
// ingestion with deterministic 70/10/20 splits and train-statistics
// standardization, plus a bundled synthetic dataset generator.

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "sves/errors.hpp"
#include "sves/rng.hpp"
#include "sves/targets.hpp"

namespace sves {

struct LogRegData {
    Eigen::MatrixXd features;  // N x d
    Eigen::VectorXi labels;    // in {0, 1}
};

namespace detail {

inline double softplus(double t) {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline bool parse_double(const std::string& cell, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(cell, &pos);
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        return pos == cell.size();
    } catch (...) {
        return false;
    }
}

}  // namespace detail

// CSV per the dataset interface: optional header (detected by a non-numeric
// first cell), column 1 the binary label, columns 2..d+1 the features.
inline LogRegData read_csv_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    Eigen::Index width = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        bool first_cell = true;
        while (std::getline(ss, cell, ',')) {
            double v;
            if (!detail::parse_double(cell, v)) {
                // Header row: non-numeric first cell of the first line.
                if (lineno == 1 && first_cell && rows.empty()) {
                    row.clear();
                    break;
                }
                throw DatasetError("malformed row " + std::to_string(lineno) + " in " + path);
            }
            first_cell = false;
            row.push_back(v);
        }
        if (row.empty()) continue;
        if (row.size() < 2)
            throw DatasetError("row " + std::to_string(lineno) + " has fewer than 2 columns");
        if (width < 0) width = static_cast<Eigen::Index>(row.size());
        if (static_cast<Eigen::Index>(row.size()) != width)
            throw DatasetError("row " + std::to_string(lineno) + " has inconsistent width");
        if (row[0] != 0.0 && row[0] != 1.0)
            throw DatasetError("non-binary label in row " + std::to_string(lineno));
        rows.push_back(std::move(row));
    }
    if (rows.size() < 10) throw DatasetError("dataset needs at least 10 rows: " + path);
    LogRegData data;
    data.features.resize(static_cast<Eigen::Index>(rows.size()), width - 1);
    data.labels.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        data.labels[static_cast<Eigen::Index>(i)] = static_cast<int>(rows[i][0]);
        for (Eigen::Index j = 0; j + 1 < width; ++j)
            data.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j + 1)];
    }
    return data;
}

// Linearly separable blobs with a clean margin; the bundled stand-in for the
// UCI datasets that are not shipped.
inline LogRegData make_synthetic_logreg(int n = 500, int d = 5, std::uint64_t seed = 7) {
    RngStream rng(seed);
    Eigen::VectorXd w(d);
    for (int j = 0; j < d; ++j) w[j] = (j % 2 == 0 ? 1.0 : -1.0) * (1.0 + 0.5 * j);
    LogRegData data;
    data.features.resize(n, d);
    data.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x(d);
        double margin = 0.0;
        do {
            for (int j = 0; j < d; ++j) x[j] = rng.normal();
            margin = w.dot(x) / w.norm();
        } while (std::abs(margin) < 0.35);
        data.features.row(i) = x.transpose();
        data.labels[i] = margin > 0.0 ? 1 : 0;
    }
    return data;
}

class LogRegTarget final : public TargetDensity {
public:
    LogRegTarget(LogRegData data, std::uint64_t split_seed, int batch_size = 0, double a0 = 1.0,
                 double b0 = 0.01)
        : TargetDensity(static_cast<int>(data.features.cols()) + 1, "logreg"),
          a0_(a0),
          b0_(b0) {
        const Eigen::Index n = data.features.rows();
        if (n < 10) throw DatasetError("logreg: need at least 10 rows");
        for (Eigen::Index i = 0; i < n; ++i)
            if (data.labels[i] != 0 && data.labels[i] != 1)
                throw DatasetError("logreg: labels must be binary");

        // Deterministic shuffled 70/10/20 split.
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        RngStream rng(split_seed);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        const Eigen::Index n_train = (n * 7) / 10;
        const Eigen::Index n_val = n / 10;
        auto take = [&](Eigen::Index lo, Eigen::Index hi, Eigen::MatrixXd& xs, Eigen::VectorXi& ys) {
            xs.resize(hi - lo, data.features.cols());
            ys.resize(hi - lo);
            for (Eigen::Index i = lo; i < hi; ++i) {
                xs.row(i - lo) = data.features.row(order[static_cast<std::size_t>(i)]);
                ys[i - lo] = data.labels[order[static_cast<std::size_t>(i)]];
            }
        };
        take(0, n_train, x_train_, y_train_);
        take(n_train, n_train + n_val, x_val_, y_val_);
        take(n_train + n_val, n, x_test_, y_test_);

        // Standardize all splits with training statistics.
        mean_ = x_train_.colwise().mean();
        Eigen::RowVectorXd var =
            (x_train_.rowwise() - mean_).array().square().colwise().sum() /
            static_cast<double>(x_train_.rows() - 1);
        scale_ = var.array().sqrt().max(1e-12);
        auto standardize = [&](Eigen::MatrixXd& xs) {
            xs = (xs.rowwise() - mean_).array().rowwise() / scale_.array();
        };
        standardize(x_train_);
        standardize(x_val_);
        standardize(x_test_);

        batch_size_ = batch_size <= 0 ? static_cast<int>(x_train_.rows())
                                      : std::min<int>(batch_size, static_cast<int>(x_train_.rows()));
        batch_.resize(static_cast<std::size_t>(batch_size_));
        for (int i = 0; i < batch_size_; ++i) batch_[static_cast<std::size_t>(i)] = i;
    }

    int feature_dim() const { return static_cast<int>(x_train_.cols()); }
    Eigen::Index n_train() const { return x_train_.rows(); }
    Eigen::Index n_val() const { return x_val_.rows(); }
    Eigen::Index n_test() const { return x_test_.rows(); }
    const Eigen::MatrixXd& train_features() const { return x_train_; }
    const Eigen::VectorXi& train_labels() const { return y_train_; }
    int batch_size() const { return batch_size_; }

    // Select the minibatch used by subsequent energy calls. Callers advance
    // batches between generations; energy itself never mutates the batch.
    void set_batch(std::vector<int> indices) {
        if (indices.empty()) throw ConfigError("logreg: batch must be non-empty");
        batch_ = std::move(indices);
    }

    void draw_batch(RngStream& rng) {
        std::vector<int> idx(static_cast<std::size_t>(batch_size_));
        for (int i = 0; i < batch_size_; ++i)
            idx[static_cast<std::size_t>(i)] =
                static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(x_train_.rows())));
        batch_ = std::move(idx);
    }

    // Batch-scaled posterior energy and gradient at theta = [beta, log alpha].
    double batch_energy(const Eigen::VectorXd& theta, const std::vector<int>& batch,
                        Eigen::VectorXd* grad) const {
        const int d = feature_dim();
        const Eigen::VectorXd beta = theta.head(d);
        const double u = theta[d];
        const double alpha = std::exp(u);
        const double scale = static_cast<double>(x_train_.rows()) / static_cast<double>(batch.size());

        double loglik = 0.0;
        Eigen::VectorXd dbeta = Eigen::VectorXd::Zero(d);
        for (int idx : batch) {
            const double z = x_train_.row(idx).dot(beta);
            const double y = static_cast<double>(y_train_[idx]);
            loglik += y * -detail::softplus(-z) + (1.0 - y) * -detail::softplus(z);
            if (grad) dbeta += (y - detail::sigmoid(z)) * x_train_.row(idx).transpose();
        }

        const double half_d = 0.5 * d;
        const double log_prior = half_d * u - half_d * std::log(2.0 * std::numbers::pi) -
                                 0.5 * alpha * beta.squaredNorm() + a0_ * std::log(b0_) -
                                 std::lgamma(a0_) + (a0_ - 1.0) * u - b0_ * alpha + u;
        if (grad) {
            grad->resize(d + 1);
            grad->head(d) = -scale * dbeta + alpha * beta;
            (*grad)[d] = -half_d + 0.5 * alpha * beta.squaredNorm() - a0_ + b0_ * alpha;
        }
        return -scale * loglik - log_prior;
    }

    // Accuracy of the posterior-mean predictive over a set of particles.
    double test_accuracy(const Eigen::MatrixXd& thetas) const {
        return accuracy_on(x_test_, y_test_, thetas);
    }
    double val_accuracy(const Eigen::MatrixXd& thetas) const {
        return accuracy_on(x_val_, y_val_, thetas);
    }

private:
    double accuracy_on(const Eigen::MatrixXd& xs, const Eigen::VectorXi& ys,
                       const Eigen::MatrixXd& thetas) const {
        const int d = feature_dim();
        Eigen::VectorXd prob = Eigen::VectorXd::Zero(xs.rows());
        for (Eigen::Index p = 0; p < thetas.rows(); ++p) {
            const Eigen::VectorXd beta = thetas.row(p).head(d).transpose();
            for (Eigen::Index i = 0; i < xs.rows(); ++i)
                prob[i] += detail::sigmoid(xs.row(i).dot(beta));
        }
        prob /= static_cast<double>(thetas.rows());
        Eigen::Index hits = 0;
        for (Eigen::Index i = 0; i < xs.rows(); ++i)
            if ((prob[i] > 0.5 ? 1 : 0) == ys[i]) ++hits;
        return static_cast<double>(hits) / static_cast<double>(xs.rows());
    }

    double energy_impl(const Eigen::VectorXd& x) const override {
        return batch_energy(x, batch_, nullptr);
    }
    double energy_grad_impl(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
        return batch_energy(x, batch_, &grad);
    }

    Eigen::MatrixXd x_train_, x_val_, x_test_;
    Eigen::VectorXi y_train_, y_val_, y_test_;
    Eigen::RowVectorXd mean_, scale_;
    double a0_, b0_;
    int batch_size_ = 0;
    std::vector<int> batch_;
};

inline LogRegTarget load_dataset(const std::string& path, std::uint64_t split_seed,
                                 int batch_size = 0) {
    return LogRegTarget(read_csv_dataset(path), split_seed, batch_size);
}

}  // namespace sves
