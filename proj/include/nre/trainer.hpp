#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nre/adam.hpp"
#include "nre/checkpoint.hpp"
#include "nre/errors.hpp"
#include "nre/loss.hpp"
#include "nre/nn.hpp"
#include "nre/standardizer.hpp"
#include "nre/tasks.hpp"

namespace nre {

struct ArchPreset {
    std::size_t hidden = 50;
    std::size_t blocks = 2;
};

/// Small NN: 50 hidden units, two residual blocks. Large NN: 128 units,
/// three blocks.
inline ArchPreset arch_preset(const std::string& name) {
    if (name == "small") return {50, 2};
    if (name == "large") return {128, 3};
    throw ConfigError("unknown architecture preset: " + name + " (use small or large)");
}

struct TrainConfig {
    std::string task = "conjugate_gaussian";
    double task_sigma = 1.0;
    Regime regime = Regime::Bootstrap;
    LossConfig loss{Variant::C, 1.0, 1};
    std::string arch = "small";
    std::size_t hidden = 0;  // nonzero overrides the preset
    std::size_t blocks = 0;
    int batch_size = 1024;
    int batches_per_epoch = 20;
    int val_batches_per_epoch = 2;
    int max_epochs = 1000;
    std::uint64_t seed = 0;
    long simulation_budget = 22528;  // fixed-data regimes
    double learning_rate = 5e-4;
    int mi0_marginal_samples = 128;
    int patience = 0;                   // early stopping off when 0
    bool validate_with_nrea_loss = false;  // fixed l_{1,1} validation option

    ArchPreset resolved_arch() const {
        ArchPreset p = arch_preset(arch);
        if (hidden > 0) p.hidden = hidden;
        if (blocks > 0) p.blocks = blocks;
        return p;
    }
};

struct TrainReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> neg_mi0;
    int best_epoch = -1;
    double best_val_loss = std::numeric_limits<double>::infinity();
    double wall_seconds = 0.0;
    long simulator_calls = 0;
    long prior_draws = 0;
    int effective_batch_size = 0;
    int effective_batches_per_epoch = 0;
    int effective_val_count = 0;
};

struct TrainResult {
    Checkpoint checkpoint;        // best validation epoch (or the init when no epochs ran)
    Checkpoint final_checkpoint;  // state after the last epoch
    TrainReport report;
};

/// Monte Carlo estimate of -I_hat^(0) over a validation set: the dependent
/// term uses the paired draws, the marginal term averages M fresh prior
/// draws per observation.
inline double validate_mi0(RatioNet& net, const Standardizer& std_, const JointBatch& val,
                           const Task& task, int M, Rng& rng) {
    if (M < 1) throw ConfigError("validate_mi0: M must be >= 1");
    const std::size_t n = val.size();
    if (n == 0) throw ConfigError("validate_mi0: empty validation set");
    net.set_train(false);
    Matrix theta_std = std_.apply_theta(val.theta);
    Matrix x_std = std_.apply_x(val.x);
    Matrix joint_logits = net.forward_rows(hcat(theta_std, x_std));
    double dep_term = 0.0;
    for (std::size_t i = 0; i < n; ++i) dep_term += joint_logits(i, 0);
    dep_term /= static_cast<double>(n);

    // Marginal term in chunks to bound the forward-pass size.
    const std::size_t chunk = std::max<std::size_t>(1, 65536 / static_cast<std::size_t>(M));
    double marg_term = 0.0;
    for (std::size_t lo = 0; lo < n; lo += chunk) {
        const std::size_t hi = std::min(n, lo + chunk);
        const std::size_t rows = (hi - lo) * static_cast<std::size_t>(M);
        Matrix theta_m = sample_prior(task, rows, rng);
        Matrix input(rows, task.dim_theta + task.dim_x);
        Matrix theta_m_std = std_.apply_theta(theta_m);
        for (std::size_t i = lo; i < hi; ++i) {
            auto xrow = x_std.row(i);
            for (int m = 0; m < M; ++m) {
                const std::size_t r = (i - lo) * M + m;
                auto dst = input.row(r);
                auto th = theta_m_std.row(r);
                std::copy(th.begin(), th.end(), dst.begin());
                std::copy(xrow.begin(), xrow.end(), dst.begin() + task.dim_theta);
            }
        }
        Matrix h = net.forward_rows(input);
        for (std::size_t i = lo; i < hi; ++i) {
            std::span<const double> hs(h.data() + (i - lo) * M, static_cast<std::size_t>(M));
            marg_term += detail::logsumexp(hs) - std::log(static_cast<double>(M));
        }
    }
    marg_term /= static_cast<double>(n);
    return -(dep_term - marg_term);
}

namespace detail {

struct EpochPlan {
    int batch_size = 0;
    int batches = 0;
    long train_count = 0;  // fixed-data regimes
    long val_count = 0;
};

inline EpochPlan plan_epoch(const TrainConfig& cfg) {
    EpochPlan plan;
    if (cfg.batch_size < 2 || cfg.batches_per_epoch < 1 || cfg.val_batches_per_epoch < 1)
        throw ConfigError("train: batch_size >= 2 and batch counts >= 1 required");
    if (cfg.regime == Regime::FreshJoint) {
        plan.batch_size = cfg.batch_size;
        plan.batches = cfg.batches_per_epoch;
        plan.val_count = static_cast<long>(cfg.val_batches_per_epoch) * cfg.batch_size;
        return plan;
    }
    const double val_share = static_cast<double>(cfg.val_batches_per_epoch) /
                             static_cast<double>(cfg.batches_per_epoch + cfg.val_batches_per_epoch);
    plan.val_count = std::max<long>(1, std::llround(val_share * cfg.simulation_budget));
    plan.train_count = cfg.simulation_budget - plan.val_count;
    if (plan.train_count < 2)
        throw ConfigError("train: simulation budget " + std::to_string(cfg.simulation_budget) +
                          " is insufficient for one epoch");
    plan.batch_size = static_cast<int>(std::min<long>(cfg.batch_size, plan.train_count));
    plan.batches = static_cast<int>(plan.train_count / plan.batch_size);
    return plan;
}

}  // namespace detail

inline TrainResult train(const TrainConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.loss.validate();
    Task task = make_task(cfg.task, cfg.task_sigma);
    const detail::EpochPlan plan = detail::plan_epoch(cfg);
    if (cfg.regime == Regime::Bootstrap && 2 * cfg.loss.K > plan.batch_size)
        throw ConfigError("train: bootstrap regime requires K <= batch/2 (K=" +
                          std::to_string(cfg.loss.K) +
                          ", batch=" + std::to_string(plan.batch_size) + ")");
    if (cfg.loss.K >= plan.batch_size)
        throw ConfigError("train: K must be smaller than the effective batch size");

    Rng root(cfg.seed);
    Rng init_rng = root.split(1);
    Rng data_rng = root.split(2);
    Rng shuffle_rng = root.split(3);
    Rng val_rng = root.split(4);
    Rng mi0_rng = root.split(5);

    const ArchPreset arch = cfg.resolved_arch();
    RatioNet net(task.dim_theta, task.dim_x, arch.hidden, arch.blocks);
    net.init(init_rng);
    AdamState opt;
    opt.lr = cfg.learning_rate;
    opt.init(net.parameters());

    TrainReport report;
    report.effective_batch_size = plan.batch_size;
    report.effective_batches_per_epoch = plan.batches;
    report.effective_val_count = static_cast<int>(plan.val_count);

    // Fixed-data regimes draw the whole budget once; training takes the
    // leading rows, validation the trailing ones.
    JointBatch train_store, val_store;
    if (cfg.regime != Regime::FreshJoint) {
        JointBatch store = sample_joint(task, cfg.simulation_budget, data_rng);
        report.simulator_calls += cfg.simulation_budget;
        train_store.theta = take_rows(store.theta, 0, plan.train_count);
        train_store.x = take_rows(store.x, 0, plan.train_count);
        val_store.theta = take_rows(store.theta, plan.train_count, plan.val_count);
        val_store.x = take_rows(store.x, plan.train_count, plan.val_count);
    }

    // Standardizer fit on the first training batch.
    Standardizer standardizer;
    std::optional<JointBatch> first_batch;
    if (cfg.regime == Regime::FreshJoint) {
        first_batch = sample_joint(task, plan.batch_size, data_rng);
        report.simulator_calls += plan.batch_size;
        standardizer = fit_standardizer(first_batch->theta, first_batch->x);
    } else {
        Matrix ft = take_rows(train_store.theta, 0, plan.batch_size);
        Matrix fx = take_rows(train_store.x, 0, plan.batch_size);
        standardizer = fit_standardizer(ft, fx);
    }

    const LossConfig val_loss_cfg =
        cfg.validate_with_nrea_loss ? LossConfig{Variant::C, 1.0, 1} : cfg.loss;

    auto snapshot = [&](long epoch) {
        Checkpoint c;
        c.task_name = cfg.task;
        c.task_sigma = cfg.task_sigma;
        c.dim_theta = task.dim_theta;
        c.dim_x = task.dim_x;
        c.hidden = arch.hidden;
        c.n_blocks = arch.blocks;
        c.loss = cfg.loss;
        c.net = net;
        c.standardizer = standardizer;
        c.opt = opt;
        c.data_rng_state = data_rng.state();
        c.val_rng_state = val_rng.state();
        c.epoch = epoch;
        return c;
    };

    Checkpoint best = snapshot(-1);
    long last_epoch = -1;
    int epochs_since_best = 0;

    std::vector<std::size_t> order(train_store.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // --- training ---
        net.set_train(true);
        if (cfg.regime != Regime::FreshJoint) shuffle(order, shuffle_rng);
        double train_acc = 0.0;
        for (int b = 0; b < plan.batches; ++b) {
            JointBatch mb;
            if (cfg.regime == Regime::FreshJoint) {
                if (first_batch.has_value()) {
                    mb = std::move(*first_batch);
                    first_batch.reset();
                } else {
                    mb = sample_joint(task, plan.batch_size, data_rng);
                    report.simulator_calls += plan.batch_size;
                }
            } else {
                std::vector<std::size_t> idx(order.begin() + b * plan.batch_size,
                                             order.begin() + (b + 1) * plan.batch_size);
                mb.theta = take_rows(train_store.theta, idx);
                mb.x = take_rows(train_store.x, idx);
            }
            ContrastivePair pair =
                assemble_contrastive_batch(mb, cfg.regime, cfg.loss.K, data_rng, &task);
            if (cfg.regime == Regime::FreshPrior)
                report.prior_draws += static_cast<long>(plan.batch_size) * cfg.loss.K;
            train_acc += evaluate_loss(net, standardizer, pair, cfg.loss, true);
            adam_step(net.parameters(), net.gradients(), opt);
        }
        report.train_loss.push_back(train_acc / plan.batches);

        // --- validation ---
        net.set_train(false);
        Rng epoch_val_rng = val_rng.split(static_cast<std::uint64_t>(epoch));
        JointBatch val;
        if (cfg.regime == Regime::FreshJoint) {
            val = sample_joint(task, plan.val_count, epoch_val_rng);
            report.simulator_calls += plan.val_count;
        } else {
            val = val_store;
        }
        double val_acc = 0.0;
        int val_batches = 0;
        const std::size_t vb_size = std::min<std::size_t>(plan.batch_size, val.size());
        for (std::size_t lo = 0; lo + vb_size <= val.size(); lo += vb_size) {
            JointBatch vb;
            vb.theta = take_rows(val.theta, lo, vb_size);
            vb.x = take_rows(val.x, lo, vb_size);
            ContrastivePair pair = assemble_contrastive_batch(vb, cfg.regime, val_loss_cfg.K,
                                                              epoch_val_rng, &task);
            val_acc += evaluate_loss(net, standardizer, pair, val_loss_cfg, false);
            ++val_batches;
        }
        const double val_loss = val_acc / std::max(1, val_batches);
        report.val_loss.push_back(val_loss);

        Rng epoch_mi0_rng = mi0_rng.split(static_cast<std::uint64_t>(epoch));
        report.neg_mi0.push_back(
            validate_mi0(net, standardizer, val, task, cfg.mi0_marginal_samples, epoch_mi0_rng));

        if (val_loss < report.best_val_loss) {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best = snapshot(epoch);
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }
        last_epoch = epoch;
        if (cfg.patience > 0 && epochs_since_best >= cfg.patience) break;
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    TrainResult result{std::move(best), snapshot(last_epoch), std::move(report)};
    result.checkpoint.config_echo = json{{"task", cfg.task},
                                         {"task_sigma", cfg.task_sigma},
                                         {"regime", to_string(cfg.regime)},
                                         {"variant", to_string(cfg.loss.variant)},
                                         {"gamma", cfg.loss.gamma},
                                         {"K", cfg.loss.K},
                                         {"arch", cfg.arch},
                                         {"hidden", arch.hidden},
                                         {"blocks", arch.blocks},
                                         {"batch_size", cfg.batch_size},
                                         {"batches_per_epoch", cfg.batches_per_epoch},
                                         {"val_batches_per_epoch", cfg.val_batches_per_epoch},
                                         {"max_epochs", cfg.max_epochs},
                                         {"seed", cfg.seed},
                                         {"simulation_budget", cfg.simulation_budget},
                                         {"learning_rate", cfg.learning_rate},
                                         {"mi0_marginal_samples", cfg.mi0_marginal_samples},
                                         {"patience", cfg.patience},
                                         {"validate_with_nrea_loss", cfg.validate_with_nrea_loss}};
    result.final_checkpoint.config_echo = result.checkpoint.config_echo;
    return result;
}

}  // namespace nre
