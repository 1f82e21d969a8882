#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "nre/adam.hpp"
#include "nre/errors.hpp"
#include "nre/loss.hpp"
#include "nre/matrix.hpp"
#include "nre/nn.hpp"
#include "nre/rng.hpp"
#include "nre/tasks.hpp"

namespace nre {

using LogRatioFn = std::function<double(std::span<const double>, std::span<const double>)>;

/// Small binary classifier used by the diagnostics: two ReLU hidden layers
/// of 10 x dim units, Adam, logistic loss with optional per-example weights.
class MlpClassifier {
  public:
    MlpClassifier(std::size_t in_dim, std::size_t hidden, Rng& rng)
        : l1_(in_dim, hidden), l2_(hidden, hidden), l3_(hidden, 1) {
        l1_.init(rng);
        l2_.init(rng);
        l3_.init(rng);
    }

    void fit(const Matrix& x, const std::vector<double>& y, const std::vector<double>& weights,
             Rng& rng, int max_epochs = 300, int batch_size = 200, double lr = 1e-3) {
        if (x.rows() != y.size() || x.rows() != weights.size())
            throw ShapeError("MlpClassifier::fit: row/label/weight count mismatch");
        const std::size_t n = x.rows();
        // Loss weights normalized to mean 1 over the training set.
        const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (!(wsum > 0.0)) throw DiagnosticError("MlpClassifier::fit: degenerate weights");
        const double wscale = static_cast<double>(n) / wsum;

        AdamState opt;
        opt.lr = lr;
        opt.init(params());
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        const std::size_t bsz = std::min<std::size_t>(batch_size, n);
        double best_loss = std::numeric_limits<double>::infinity();
        int stale = 0;
        for (int epoch = 0; epoch < max_epochs; ++epoch) {
            shuffle(order, rng);
            double epoch_loss = 0.0;
            std::size_t batches = 0;
            for (std::size_t lo = 0; lo + bsz <= n; lo += bsz) {
                std::vector<std::size_t> idx(order.begin() + lo, order.begin() + lo + bsz);
                Matrix xb = take_rows(x, idx);
                Matrix logits = forward(xb, true);
                Matrix dlogits(bsz, 1);
                double loss = 0.0;
                for (std::size_t i = 0; i < bsz; ++i) {
                    const double z = logits(i, 0);
                    const double target = y[idx[i]];
                    const double w = weights[idx[i]] * wscale;
                    const double softplus =
                        z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
                    loss += w * (softplus - target * z);
                    const double sig = 1.0 / (1.0 + std::exp(-z));
                    dlogits(i, 0) = w * (sig - target) / static_cast<double>(bsz);
                }
                epoch_loss += loss / static_cast<double>(bsz);
                ++batches;
                backward(dlogits);
                adam_step(params(), grads(), opt);
            }
            epoch_loss /= std::max<std::size_t>(batches, 1);
            if (epoch_loss < best_loss - 1e-4) {
                best_loss = epoch_loss;
                stale = 0;
            } else if (++stale >= 10) {
                break;
            }
        }
    }

    /// P(y = 1 | x) per row.
    std::vector<double> predict(const Matrix& x) {
        Matrix logits = forward(x, false);
        std::vector<double> p(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) p[i] = 1.0 / (1.0 + std::exp(-logits(i, 0)));
        return p;
    }

  private:
    Matrix forward(const Matrix& x, bool cache) {
        Matrix h1 = detail::relu(l1_.forward(x, cache), mask1_);
        Matrix h2 = detail::relu(l2_.forward(h1, cache), mask2_);
        return l3_.forward(h2, cache);
    }

    void backward(const Matrix& dlogits) {
        Matrix d2 = detail::apply_mask(l3_.backward(dlogits), mask2_);
        Matrix d1 = detail::apply_mask(l2_.backward(d2), mask1_);
        l1_.backward(d1);
    }

    std::vector<Matrix*> params() { return {&l1_.w, &l1_.b, &l2_.w, &l2_.b, &l3_.w, &l3_.b}; }
    std::vector<Matrix*> grads() {
        return {&l1_.dw, &l1_.db, &l2_.dw, &l2_.db, &l3_.dw, &l3_.db};
    }

    Dense l1_, l2_, l3_;
    Matrix mask1_, mask2_;
};

namespace detail {

/// Z-score columns with statistics of the given matrix.
inline Matrix zscore_with(const Matrix& m, const std::vector<double>& mean,
                          const std::vector<double>& std) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto src = m.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) dst[j] = (src[j] - mean[j]) / std[j];
    }
    return out;
}

inline void zscore_stats(const Matrix& m, std::vector<double>& mean, std::vector<double>& std) {
    mean = column_means(m);
    auto var = column_vars(m);
    std.resize(var.size());
    for (std::size_t j = 0; j < var.size(); ++j) std[j] = std::max(std::sqrt(var[j]), 1e-8);
}

}  // namespace detail

/// Receiver operating characteristic with trapezoidal AUC. Points are
/// ordered by decreasing threshold, so the curve runs (0,0) -> (1,1).
struct RocReport {
    std::vector<double> thresholds;
    std::vector<double> tpr;
    std::vector<double> fpr;
    double auc = 0.0;
};

inline RocReport roc_from_scores(const std::vector<double>& scores,
                                 const std::vector<double>& labels,
                                 const std::vector<double>& weights) {
    if (scores.size() != labels.size() || scores.size() != weights.size())
        throw ShapeError("roc_from_scores: size mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double pos_total = 0.0, neg_total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        (labels[i] > 0.5 ? pos_total : neg_total) += weights[i];
    if (pos_total <= 0.0 || neg_total <= 0.0)
        throw DiagnosticError("roc_from_scores: one class carries no weight");

    RocReport roc;
    roc.thresholds.push_back(std::numeric_limits<double>::infinity());
    roc.tpr.push_back(0.0);
    roc.fpr.push_back(0.0);
    double tp = 0.0, fp = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        // Consume ties as one threshold step.
        while (i < order.size() && scores[order[i]] == s) {
            if (labels[order[i]] > 0.5)
                tp += weights[order[i]];
            else
                fp += weights[order[i]];
            ++i;
        }
        roc.thresholds.push_back(s);
        roc.tpr.push_back(tp / pos_total);
        roc.fpr.push_back(fp / neg_total);
    }
    double auc = 0.0;
    for (std::size_t k = 1; k < roc.tpr.size(); ++k)
        auc += 0.5 * (roc.tpr[k] + roc.tpr[k - 1]) * (roc.fpr[k] - roc.fpr[k - 1]);
    roc.auc = auc;
    return roc;
}

/// Importance-sampling check of a ratio estimate at fixed theta: train a
/// fresh classifier to tell x ~ p(x | theta) from x ~ p(x) carrying weights
/// r_hat(x | theta), and measure held-out ROC AUC. An exact ratio makes the
/// classes indistinguishable (AUC near 0.5). The companion power classifier
/// separates the unweighted classes; its AUC must clear 0.6 before a pass
/// means anything.
struct ImportanceDiagnostic {
    RocReport roc;
    double auc = 0.0;
    double power_auc = 0.0;
    int n_per_class = 0;
};

inline ImportanceDiagnostic importance_diagnostic(const LogRatioFn& log_ratio,
                                                  std::span<const double> theta, const Task& task,
                                                  int n_per_class, Rng& rng) {
    if (n_per_class < 100)
        throw ConfigError("importance_diagnostic: n_per_class must be >= 100");
    const std::size_t n = n_per_class;

    Matrix theta_rep(n, task.dim_theta);
    for (std::size_t i = 0; i < n; ++i)
        std::copy(theta.begin(), theta.end(), theta_rep.row(i).begin());
    Matrix x_pos = simulate(task, theta_rep, rng);
    Matrix x_neg = sample_joint(task, n, rng).x;

    std::vector<double> log_w(n);
    double max_lw = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        log_w[i] = log_ratio(theta, x_neg.row(i));
        max_lw = std::max(max_lw, log_w[i]);
    }
    if (max_lw < -700.0)
        throw DiagnosticError("importance_diagnostic: importance weights are all ~0");
    const double lse = detail::logsumexp(log_w);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = std::exp(log_w[i] - lse + std::log(static_cast<double>(n)));  // mean 1

    // Shuffled half split per class.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    const std::size_t n_tr = n / 2;

    Matrix all = vcat(x_pos, x_neg);
    std::vector<double> fmean, fstd;
    detail::zscore_stats(all, fmean, fstd);

    auto run = [&](bool weighted) {
        std::vector<std::size_t> train_idx, eval_idx;
        std::vector<double> ytr, wtr, yev, wev;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = perm[k];
            const bool train = k < n_tr;
            // Positive row i and negative row n + i share the split slot.
            if (train) {
                train_idx.push_back(i);
                ytr.push_back(1.0);
                wtr.push_back(1.0);
                train_idx.push_back(n + i);
                ytr.push_back(0.0);
                wtr.push_back(weighted ? w[i] : 1.0);
            } else {
                eval_idx.push_back(i);
                yev.push_back(1.0);
                wev.push_back(1.0);
                eval_idx.push_back(n + i);
                yev.push_back(0.0);
                wev.push_back(weighted ? w[i] : 1.0);
            }
        }
        Matrix xtr = detail::zscore_with(take_rows(all, train_idx), fmean, fstd);
        Matrix xev = detail::zscore_with(take_rows(all, eval_idx), fmean, fstd);
        Rng fit_rng = rng.split(weighted ? 11 : 12);
        MlpClassifier clf(task.dim_x, 10 * task.dim_x, fit_rng);
        clf.fit(xtr, ytr, wtr, fit_rng);
        return roc_from_scores(clf.predict(xev), yev, wev);
    };

    ImportanceDiagnostic out;
    out.roc = run(true);
    out.auc = out.roc.auc;
    out.power_auc = run(false).auc;
    out.n_per_class = n_per_class;
    return out;
}

/// Monte Carlo mutual-information lower bounds. I0 subtracts the mean log
/// partition estimate, I1 the mean linear partition estimate minus one; both
/// use the same marginal draws, so i0_hat >= i1_hat pointwise.
struct MIBoundReport {
    double i0_hat = 0.0;
    double i1_hat = 0.0;
    long N = 0;
    long M = 0;
    double se_i0 = 0.0;
    double se_i1 = 0.0;
};

inline MIBoundReport mi_bounds_on(const LogRatioFn& log_ratio, const JointBatch& pairs,
                                  const Task& prior_source, long M, Rng& rng) {
    const long N = static_cast<long>(pairs.size());
    if (N < 2 || M < 2) throw ConfigError("mi_bounds: N and M must be >= 2");
    std::vector<double> c0(N), c1(N);
    std::vector<double> h(M);
    for (long i = 0; i < N; ++i) {
        const double joint = log_ratio(pairs.theta.row(i), pairs.x.row(i));
        Matrix theta_m = sample_prior(prior_source, M, rng);
        double lin = 0.0;
        for (long m = 0; m < M; ++m) {
            h[m] = log_ratio(theta_m.row(m), pairs.x.row(i));
            lin += std::exp(h[m]);
        }
        lin /= static_cast<double>(M);
        const double log_z = detail::logsumexp(h) - std::log(static_cast<double>(M));
        c0[i] = joint - log_z;
        c1[i] = joint - (lin - 1.0);
    }
    auto mean_se = [N](const std::vector<double>& c, double& mean, double& se) {
        mean = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(N);
        double var = 0.0;
        for (double v : c) var += (v - mean) * (v - mean);
        var /= static_cast<double>(N - 1);
        se = std::sqrt(var / static_cast<double>(N));
    };
    MIBoundReport rep;
    rep.N = N;
    rep.M = M;
    mean_se(c0, rep.i0_hat, rep.se_i0);
    mean_se(c1, rep.i1_hat, rep.se_i1);
    return rep;
}

inline MIBoundReport mi_bounds(const LogRatioFn& log_ratio, const Task& task, long N, long M,
                               Rng& rng) {
    JointBatch pairs = sample_joint(task, N, rng);
    return mi_bounds_on(log_ratio, pairs, task, M, rng);
}

struct C2stOptions {
    int folds = 5;
    int max_epochs = 300;
    int batch_size = 200;
    double learning_rate = 1e-3;
    std::size_t min_per_side = 500;
};

/// Classifier two-sample test: 5-fold cross-validated accuracy of a fresh
/// MLP (two hidden layers of 10 x dim units) separating the two sample sets.
/// 0.5 means indistinguishable, 1.0 fully separated.
inline double c2st(const Matrix& samples_p, const Matrix& samples_q, Rng& rng,
                   const C2stOptions& opts = {}) {
    if (samples_p.cols() != samples_q.cols())
        throw ShapeError("c2st: sample dimensionality differs");
    if (samples_p.rows() != samples_q.rows())
        throw ConfigError("c2st: need equal sample counts per side");
    if (samples_p.rows() < opts.min_per_side)
        throw ConfigError("c2st: need at least " + std::to_string(opts.min_per_side) +
                          " samples per side");
    const std::size_t n_side = samples_p.rows();
    const std::size_t n = 2 * n_side;
    const std::size_t dim = samples_p.cols();

    Matrix all = vcat(samples_p, samples_q);
    std::vector<double> fmean, fstd;
    detail::zscore_stats(all, fmean, fstd);
    Matrix allz = detail::zscore_with(all, fmean, fstd);
    std::vector<double> labels(n, 0.0);
    for (std::size_t i = 0; i < n_side; ++i) labels[i] = 1.0;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);

    double acc_sum = 0.0;
    for (int fold = 0; fold < opts.folds; ++fold) {
        std::vector<std::size_t> tr, ev;
        for (std::size_t k = 0; k < n; ++k)
            (static_cast<int>(k % opts.folds) == fold ? ev : tr).push_back(perm[k]);
        Matrix xtr = take_rows(allz, tr);
        Matrix xev = take_rows(allz, ev);
        std::vector<double> ytr(tr.size()), wtr(tr.size(), 1.0);
        for (std::size_t k = 0; k < tr.size(); ++k) ytr[k] = labels[tr[k]];
        Rng fold_rng = rng.split(100 + fold);
        MlpClassifier clf(dim, 10 * dim, fold_rng);
        clf.fit(xtr, ytr, wtr, fold_rng, opts.max_epochs, opts.batch_size, opts.learning_rate);
        auto scores = clf.predict(xev);
        double correct = 0.0;
        for (std::size_t k = 0; k < ev.size(); ++k) {
            const double pred = scores[k] >= 0.5 ? 1.0 : 0.0;
            if (pred == labels[ev[k]]) correct += 1.0;
        }
        acc_sum += correct / static_cast<double>(ev.size());
    }
    return acc_sum / opts.folds;
}

/// Self-normalized importance weights for r_hat and r_hat / C(x) over shared
/// marginal draws. A non-constant positive C(x) leaves the two weight sets
/// unequal, so normalization does not absorb an x-dependent scaling bias.
struct IllposednessDemo {
    std::vector<double> weights_1;  // from r_hat
    std::vector<double> weights_2;  // from r_hat / C(x)
    double max_abs_diff = 0.0;
};

inline IllposednessDemo nreb_illposedness_demo(
    const LogRatioFn& log_ratio, const std::function<double(std::span<const double>)>& bias_fn,
    std::span<const double> theta, const Task& task, std::size_t n, Rng& rng) {
    if (n == 0) throw ConfigError("nreb_illposedness_demo: n must be >= 1");
    Matrix x = sample_joint(task, n, rng).x;
    std::vector<double> lw1(n), lw2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = bias_fn(x.row(i));
        if (!(c > 0.0))
            throw ConfigError("nreb_illposedness_demo: bias function must be positive");
        lw1[i] = log_ratio(theta, x.row(i));
        lw2[i] = lw1[i] - std::log(c);
    }
    IllposednessDemo demo;
    demo.weights_1.resize(n);
    demo.weights_2.resize(n);
    const double lse1 = detail::logsumexp(lw1);
    const double lse2 = detail::logsumexp(lw2);
    for (std::size_t i = 0; i < n; ++i) {
        demo.weights_1[i] = std::exp(lw1[i] - lse1);
        demo.weights_2[i] = std::exp(lw2[i] - lse2);
        demo.max_abs_diff =
            std::max(demo.max_abs_diff, std::abs(demo.weights_1[i] - demo.weights_2[i]));
    }
    return demo;
}

}  // namespace nre
