#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <span>
#include <vector>

#include "nre/checkpoint.hpp"
#include "nre/errors.hpp"
#include "nre/loss.hpp"
#include "nre/matrix.hpp"
#include "nre/nn.hpp"
#include "nre/standardizer.hpp"
#include "nre/tasks.hpp"

namespace nre {

using LogRatioFn = std::function<double(std::span<const double>, std::span<const double>)>;

/// Batched log-ratio evaluation: many theta rows against one observation.
using BatchRatioFn = std::function<Matrix(const Matrix&, std::span<const double>)>;

inline BatchRatioFn batch_ratio_from_scalar(LogRatioFn fn) {
    return [fn = std::move(fn)](const Matrix& theta, std::span<const double> x) {
        Matrix h(theta.rows(), 1);
        for (std::size_t i = 0; i < theta.rows(); ++i) h(i, 0) = fn(theta.row(i), x);
        return h;
    };
}

/// Amortized surrogate posterior p_w(theta | x) proportional to
/// exp(h_w(theta, x)) p(theta), built from a trained ratio net. Evaluation
/// only; the net stays in eval mode.
struct Surrogate {
    RatioNet net;
    Standardizer standardizer;
    Task task;

    Surrogate(RatioNet n, Standardizer s, Task t)
        : net(std::move(n)), standardizer(std::move(s)), task(std::move(t)) {
        net.set_train(false);
    }

    double log_ratio(std::span<const double> theta, std::span<const double> x) {
        if (theta.size() != task.dim_theta || x.size() != task.dim_x)
            throw ShapeError("Surrogate::log_ratio: dimension mismatch");
        Matrix input(1, theta.size() + x.size());
        auto dst = input.row(0);
        for (std::size_t j = 0; j < theta.size(); ++j)
            dst[j] = (theta[j] - standardizer.theta_mean[j]) / standardizer.theta_std[j];
        for (std::size_t j = 0; j < x.size(); ++j)
            dst[theta.size() + j] = (x[j] - standardizer.x_mean[j]) / standardizer.x_std[j];
        return net.forward_rows(input)(0, 0);
    }

    Matrix log_ratio_batch(const Matrix& theta, std::span<const double> x) {
        if (theta.cols() != task.dim_theta || x.size() != task.dim_x)
            throw ShapeError("Surrogate::log_ratio_batch: dimension mismatch");
        Matrix theta_std = standardizer.apply_theta(theta);
        Matrix input(theta.rows(), task.dim_theta + task.dim_x);
        std::vector<double> x_std(task.dim_x);
        for (std::size_t j = 0; j < task.dim_x; ++j)
            x_std[j] = (x[j] - standardizer.x_mean[j]) / standardizer.x_std[j];
        for (std::size_t i = 0; i < theta.rows(); ++i) {
            auto dst = input.row(i);
            auto th = theta_std.row(i);
            std::copy(th.begin(), th.end(), dst.begin());
            std::copy(x_std.begin(), x_std.end(), dst.begin() + task.dim_theta);
        }
        return net.forward_rows(input);
    }

    LogRatioFn ratio_fn() {
        return [this](std::span<const double> theta, std::span<const double> x) {
            return log_ratio(theta, x);
        };
    }

    BatchRatioFn batch_ratio_fn() {
        return [this](const Matrix& theta, std::span<const double> x) {
            return log_ratio_batch(theta, x);
        };
    }
};

inline Surrogate make_surrogate(const Checkpoint& ckpt) {
    return Surrogate(ckpt.net, ckpt.standardizer, make_task(ckpt.task_name, ckpt.task_sigma));
}

/// Monte Carlo estimate of Z_w(x) = E_p(theta)[exp h_w(theta, x)].
struct PartitionEstimate {
    std::vector<double> x;
    long M = 0;
    double z_hat = 0.0;      // exp(log_z_hat); may overflow to inf for wild logits
    double log_z_hat = 0.0;  // finite whenever the logits are
    double std_error = 0.0;
};

inline PartitionEstimate estimate_partition(const Task& task, const BatchRatioFn& ratio,
                                            std::span<const double> x, long M, Rng& rng) {
    if (M < 2) throw ConfigError("estimate_partition: M must be >= 2");
    PartitionEstimate est;
    est.x.assign(x.begin(), x.end());
    est.M = M;
    std::vector<double> logits;
    logits.reserve(M);
    const long chunk = 8192;
    for (long done = 0; done < M; done += chunk) {
        const long take = std::min(chunk, M - done);
        Matrix theta = sample_prior(task, take, rng);
        Matrix h = ratio(theta, x);
        for (long i = 0; i < take; ++i) logits.push_back(h(i, 0));
    }
    const double lse = detail::logsumexp(logits);
    est.log_z_hat = lse - std::log(static_cast<double>(M));
    est.z_hat = std::exp(est.log_z_hat);
    // Weight variance relative to the max logit to avoid overflow:
    // Var(w) = exp(2m) Var(exp(h - m)).
    const double m = *std::max_element(logits.begin(), logits.end());
    double mean_s = 0.0, mean_s2 = 0.0;
    for (double h : logits) {
        const double s = std::exp(h - m);
        mean_s += s;
        mean_s2 += s * s;
    }
    mean_s /= static_cast<double>(M);
    mean_s2 /= static_cast<double>(M);
    const double var_s = std::max(0.0, mean_s2 - mean_s * mean_s);
    est.std_error = std::exp(m) * std::sqrt(var_s / static_cast<double>(M));
    return est;
}

inline PartitionEstimate estimate_partition(Surrogate& surrogate, std::span<const double> x,
                                            long M, Rng& rng) {
    return estimate_partition(surrogate.task, surrogate.batch_ratio_fn(), x, M, rng);
}

struct RejectionOptions {
    long envelope_probes = 10000;
    double safety_factor = 1.2;
    double min_acceptance = 1e-4;
    long batch = 4096;
};

/// Draw from the distribution proportional to exp(h) p(theta) by rejection,
/// with the prior as proposal and envelope safety_factor * max exp(h) over a
/// prior probe set. A proposal exceeding the envelope rescales it and
/// restarts; acceptance below min_acceptance aborts.
inline Matrix rejection_sample(const Task& task, const BatchRatioFn& ratio,
                               std::span<const double> x, std::size_t n, Rng& rng,
                               const RejectionOptions& opts = {},
                               double* acceptance_out = nullptr) {
    Matrix draws(n, task.dim_theta);
    if (n == 0) {
        if (acceptance_out != nullptr) *acceptance_out = 1.0;
        return draws;
    }
    Matrix probes = sample_prior(task, opts.envelope_probes, rng);
    Matrix probe_h = ratio(probes, x);
    double max_h = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < probe_h.rows(); ++i) max_h = std::max(max_h, probe_h(i, 0));
    double log_envelope = std::log(opts.safety_factor) + max_h;

    std::size_t accepted = 0;
    long tried = 0;
    const long patience = std::max<long>(
        200000, static_cast<long>(static_cast<double>(n) / opts.min_acceptance));
    while (accepted < n) {
        Matrix theta = sample_prior(task, opts.batch, rng);
        Matrix h = ratio(theta, x);
        double batch_max = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < h.rows(); ++i) batch_max = std::max(batch_max, h(i, 0));
        if (batch_max > log_envelope) {
            std::cerr << "warning: rejection_sample: logit " << batch_max
                      << " exceeded envelope " << log_envelope << "; rescaling and restarting\n";
            log_envelope = std::log(opts.safety_factor) + batch_max;
            accepted = 0;
            tried = 0;
            continue;
        }
        for (std::size_t i = 0; i < theta.rows() && accepted < n; ++i) {
            ++tried;
            const double u = rng.uniform();
            if (u > 0.0 && std::log(u) < h(i, 0) - log_envelope) {
                auto src = theta.row(i);
                std::copy(src.begin(), src.end(), draws.row(accepted).begin());
                ++accepted;
            }
        }
        if (tried > patience &&
            static_cast<double>(accepted) / static_cast<double>(tried) < opts.min_acceptance)
            throw DiagnosticError(
                "rejection_sample: acceptance rate below " + std::to_string(opts.min_acceptance) +
                " (envelope too loose or ratio degenerate)");
    }
    if (acceptance_out != nullptr)
        *acceptance_out =
            static_cast<double>(accepted) / static_cast<double>(std::max<long>(tried, 1));
    return draws;
}

inline Matrix rejection_sample(Surrogate& surrogate, std::span<const double> x, std::size_t n,
                               Rng& rng, const RejectionOptions& opts = {},
                               double* acceptance_out = nullptr) {
    return rejection_sample(surrogate.task, surrogate.batch_ratio_fn(), x, n, rng, opts,
                            acceptance_out);
}

struct SliceOptions {
    int warmup = 200;
    int max_step_outs = 32;
    int thin = 1;
    int init_retries = 100;
};

/// Coordinate-wise slice sampling with stepping out and shrinkage on
/// log[exp(h) p(theta)]. Initial interval width is the prior std per
/// coordinate; chains initialize from prior draws.
inline Matrix slice_sample(const Task& task, const LogRatioFn& ratio, std::span<const double> x,
                           std::size_t n, int chains, Rng& rng, const SliceOptions& opts = {}) {
    const std::size_t d = task.dim_theta;
    Matrix draws(n, d);
    if (n == 0) return draws;
    if (chains < 1) throw ConfigError("slice_sample: need at least one chain");

    auto log_density = [&](std::span<const double> theta) {
        const double lp = task.prior_logpdf(theta);
        if (!std::isfinite(lp)) return lp;  // outside the prior support
        return ratio(theta, x) + lp;
    };

    const std::size_t per_chain = (n + chains - 1) / chains;
    std::size_t written = 0;
    for (int c = 0; c < chains && written < n; ++c) {
        Rng chain_rng = rng.split(static_cast<std::uint64_t>(c) + 1);
        std::vector<double> theta(d);
        double logp = -std::numeric_limits<double>::infinity();
        bool ok = false;
        for (int attempt = 0; attempt < opts.init_retries; ++attempt) {
            Matrix init = sample_prior(task, 1, chain_rng);
            std::copy(init.row(0).begin(), init.row(0).end(), theta.begin());
            logp = log_density(theta);
            if (std::isfinite(logp)) {
                ok = true;
                break;
            }
        }
        if (!ok)
            throw NumericError("slice_sample: non-finite density at init after " +
                               std::to_string(opts.init_retries) + " retries");

        const long total = opts.warmup + static_cast<long>(per_chain) * opts.thin;
        long kept = 0;
        for (long it = 0; it < total && written < n; ++it) {
            for (std::size_t j = 0; j < d; ++j) {
                const double w = task.prior_std[j];
                const double log_slice = logp + std::log(std::max(chain_rng.uniform(), 1e-300));
                const double theta_j = theta[j];
                double lo = theta_j - w * chain_rng.uniform();
                double hi = lo + w;
                auto eval_at = [&](double v) {
                    theta[j] = v;
                    const double lp = log_density(theta);
                    theta[j] = theta_j;
                    return lp;
                };
                int steps = 0;
                while (steps < opts.max_step_outs && eval_at(lo) > log_slice) {
                    lo -= w;
                    ++steps;
                }
                steps = 0;
                while (steps < opts.max_step_outs && eval_at(hi) > log_slice) {
                    hi += w;
                    ++steps;
                }
                // Shrinkage until a point on the slice is found.
                for (;;) {
                    const double prop = chain_rng.uniform(lo, hi);
                    const double lp = eval_at(prop);
                    if (lp > log_slice) {
                        theta[j] = prop;
                        logp = lp;
                        break;
                    }
                    if (prop < theta_j)
                        lo = prop;
                    else
                        hi = prop;
                    if (hi - lo < 1e-300) {
                        theta[j] = theta_j;  // interval collapsed onto the current point
                        break;
                    }
                }
            }
            if (it >= opts.warmup && (it - opts.warmup) % opts.thin == 0) {
                std::copy(theta.begin(), theta.end(), draws.row(written).begin());
                ++written;
                if (++kept >= static_cast<long>(per_chain)) break;
            }
        }
    }
    if (written < n)
        throw StateError("slice_sample: produced " + std::to_string(written) + " of " +
                         std::to_string(n) + " draws");
    return draws;
}

inline Matrix slice_sample(Surrogate& surrogate, std::span<const double> x, std::size_t n,
                           int chains, Rng& rng, const SliceOptions& opts = {}) {
    return slice_sample(surrogate.task, surrogate.ratio_fn(), x, n, chains, rng, opts);
}

}  // namespace nre
