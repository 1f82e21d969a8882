// Command-line front end: simulate | train | sample | diagnose | grid | report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nre/diagnostics.hpp"
#include "nre/grid.hpp"
#include "nre/io.hpp"
#include "nre/posterior.hpp"
#include "nre/tasks.hpp"
#include "nre/trainer.hpp"

namespace fs = std::filesystem;
using nre::json;

namespace {

struct SimulateArgs {
    std::string task = "conjugate_gaussian";
    double sigma = 1.0;
    long n = 1000;
    std::uint64_t seed = 0;
    std::string out = "joint.csv";
};

int cmd_simulate(const SimulateArgs& args) {
    nre::Task task = nre::make_task(args.task, args.sigma);
    nre::Rng rng(args.seed);
    nre::JointBatch batch = nre::sample_joint(task, args.n, rng);
    nre::write_joint_csv(args.out, batch);
    std::cout << "wrote " << args.n << " joint draws from " << args.task << " to " << args.out
              << "\n";
    return 0;
}

struct TrainArgs {
    nre::TrainConfig cfg;
    std::string variant = "c";
    std::string regime = "bootstrap";
    std::string config_file;
    std::string out = "run";
};

void apply_train_json(const json& j, nre::TrainConfig& cfg, std::string& variant,
                      std::string& regime) {
    cfg.task = j.value("task", cfg.task);
    cfg.task_sigma = j.value("task_sigma", cfg.task_sigma);
    regime = j.value("regime", regime);
    variant = j.value("variant", variant);
    cfg.loss.gamma = j.value("gamma", cfg.loss.gamma);
    cfg.loss.K = j.value("K", cfg.loss.K);
    cfg.arch = j.value("arch", cfg.arch);
    cfg.hidden = j.value("hidden", cfg.hidden);
    cfg.blocks = j.value("blocks", cfg.blocks);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.batches_per_epoch = j.value("batches_per_epoch", cfg.batches_per_epoch);
    cfg.val_batches_per_epoch = j.value("val_batches_per_epoch", cfg.val_batches_per_epoch);
    cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.simulation_budget = j.value("simulation_budget", cfg.simulation_budget);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.mi0_marginal_samples = j.value("mi0_marginal_samples", cfg.mi0_marginal_samples);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.validate_with_nrea_loss = j.value("validate_with_nrea_loss", cfg.validate_with_nrea_loss);
}

int cmd_train(TrainArgs& args) {
    args.cfg.loss.variant = nre::variant_from_string(args.variant);
    args.cfg.regime = nre::regime_from_string(args.regime);
    if (args.cfg.loss.variant == nre::Variant::A) {
        args.cfg.loss.gamma = 1.0;
        args.cfg.loss.K = 1;
    }
    fs::create_directories(args.out);
    nre::TrainResult result = nre::train(args.cfg);
    {
        std::ofstream cfg_out(args.out + "/config.json");
        cfg_out << result.checkpoint.config_echo.dump(1) << "\n";
    }
    result.checkpoint.save(args.out + "/checkpoint.json");
    nre::write_train_log_csv(args.out + "/log.csv", result.report.train_loss,
                             result.report.val_loss, result.report.neg_mi0);
    std::cout << "trained " << args.cfg.task << " (" << args.variant << ", gamma "
              << args.cfg.loss.gamma << ", K " << args.cfg.loss.K << ") for "
              << result.report.train_loss.size() << " epochs in " << result.report.wall_seconds
              << " s; best val loss " << result.report.best_val_loss << " at epoch "
              << result.report.best_epoch << "\n"
              << "artifacts in " << args.out << "\n";
    return 0;
}

struct SampleArgs {
    std::string checkpoint;
    std::string x_file;
    long n = 1000;
    std::string method = "rejection";
    int chains = 4;
    std::uint64_t seed = 0;
    std::string out = "samples.csv";
};

int cmd_sample(const SampleArgs& args) {
    nre::Checkpoint ckpt = nre::Checkpoint::load(args.checkpoint);
    nre::Surrogate surrogate = nre::make_surrogate(ckpt);
    nre::CsvTable xt = nre::read_matrix_csv(args.x_file);
    if (xt.values.rows() < 1 || xt.values.cols() != surrogate.task.dim_x)
        throw nre::IoError("sample: x file must hold rows of dimension " +
                           std::to_string(surrogate.task.dim_x));
    nre::Rng rng(args.seed);
    nre::Matrix draws;
    double acceptance = 0.0;
    if (args.method == "rejection") {
        draws = nre::rejection_sample(surrogate, xt.values.row(0), args.n, rng, {}, &acceptance);
        std::cout << "rejection acceptance rate " << acceptance << "\n";
    } else if (args.method == "slice") {
        draws = nre::slice_sample(surrogate, xt.values.row(0), args.n, args.chains, rng);
    } else {
        throw nre::ConfigError("sample: method must be rejection or slice");
    }
    std::vector<std::string> header;
    for (std::size_t j = 0; j < surrogate.task.dim_theta; ++j)
        header.push_back("theta_" + std::to_string(j));
    nre::write_matrix_csv(args.out, header, draws);
    std::cout << "wrote " << args.n << " posterior draws to " << args.out << "\n";
    return 0;
}

struct DiagnoseArgs {
    std::string checkpoint;
    int n_per_class = 2000;
    int n_theta = 3;
    long mi_n = 2048;
    long mi_m = 256;
    int zhat_observations = 10;
    long zhat_samples = 10000;
    std::string x_file;
    std::string reference_samples;
    std::string method = "rejection";
    std::uint64_t seed = 0;
    std::string out = "diagnostics.json";
};

int cmd_diagnose(const DiagnoseArgs& args) {
    nre::Checkpoint ckpt = nre::Checkpoint::load(args.checkpoint);
    nre::Surrogate surrogate = nre::make_surrogate(ckpt);
    nre::Task& task = surrogate.task;
    nre::Rng rng(args.seed);
    auto ratio = surrogate.ratio_fn();

    json report;
    report["provenance"] = {{"checkpoint", args.checkpoint}, {"task", task.name},
                            {"seed", args.seed},             {"n_per_class", args.n_per_class},
                            {"mi_n", args.mi_n},             {"mi_m", args.mi_m},
                            {"zhat_samples", args.zhat_samples}};

    // Importance-sampling ROC diagnostic at a few prior-drawn parameters.
    json pertheta = json::array();
    double auc_acc = 0.0;
    json roc_points = json::array();
    for (int t = 0; t < args.n_theta; ++t) {
        nre::Matrix theta = nre::sample_prior(task, 1, rng);
        nre::ImportanceDiagnostic diag =
            nre::importance_diagnostic(ratio, theta.row(0), task, args.n_per_class, rng);
        pertheta.push_back({{"auc", diag.auc}, {"power_auc", diag.power_auc}});
        auc_acc += diag.auc;
        if (t == 0)
            for (std::size_t i = 0; i < diag.roc.fpr.size(); ++i)
                roc_points.push_back({diag.roc.fpr[i], diag.roc.tpr[i]});
    }
    report["auc"] = auc_acc / args.n_theta;
    report["importance_diagnostic"] = pertheta;
    report["roc_points"] = roc_points;

    nre::MIBoundReport mi = nre::mi_bounds(ratio, task, args.mi_n, args.mi_m, rng);
    report["i0_hat"] = mi.i0_hat;
    report["i1_hat"] = mi.i1_hat;
    report["i0_se"] = mi.se_i0;
    report["i1_se"] = mi.se_i1;

    std::vector<double> zhats;
    nre::Matrix zx = nre::task_observations(task, args.zhat_observations, args.seed + 1);
    for (std::size_t i = 0; i < zx.rows(); ++i)
        zhats.push_back(nre::estimate_partition(surrogate, zx.row(i), args.zhat_samples, rng).z_hat);
    std::sort(zhats.begin(), zhats.end());
    report["z_hat_stats"] = {{"median", zhats[zhats.size() / 2]},
                             {"min", zhats.front()},
                             {"max", zhats.back()},
                             {"values", zhats}};

    if (!args.reference_samples.empty()) {
        if (args.x_file.empty())
            throw nre::ConfigError("diagnose: --reference-samples requires --x-file");
        nre::CsvTable xt = nre::read_matrix_csv(args.x_file);
        nre::CsvTable ref = nre::read_matrix_csv(args.reference_samples);
        const std::size_t n_side = ref.values.rows();
        nre::Matrix mine =
            args.method == "slice"
                ? nre::slice_sample(surrogate, xt.values.row(0), n_side, 4, rng)
                : nre::rejection_sample(surrogate, xt.values.row(0), n_side, rng);
        report["c2st"] = nre::c2st(mine, ref.values, rng);
    }

    std::ofstream out(args.out);
    if (!out) throw nre::IoError("diagnose: cannot open " + args.out);
    out << report.dump(1) << "\n";
    std::cout << "wrote diagnostics report to " << args.out << "\n";
    return 0;
}

struct GridArgs {
    std::string config_file;
    std::string out = "grid";
    int jobs = 1;
};

int cmd_grid(const GridArgs& args) {
    nre::GridSpec spec;
    if (!args.config_file.empty()) {
        std::ifstream in(args.config_file);
        if (!in) throw nre::IoError("grid: cannot open " + args.config_file);
        json j;
        in >> j;
        spec = nre::GridSpec::from_json(j);
    }
    std::vector<nre::RunRecord> records = nre::run_grid(spec, args.out, args.jobs);
    int failed = 0;
    for (const auto& r : records)
        if (r.status != "ok") ++failed;
    std::cout << "grid: " << records.size() << " cells, " << failed << " failed; summary in "
              << args.out << "/grid_summary.csv\n";
    return 0;
}

struct ReportArgs {
    std::string runs = "grid";
    std::string out = "grid_summary.csv";
};

int cmd_report(const ReportArgs& args) {
    std::vector<nre::RunRecord> records = nre::load_records(args.runs);
    if (records.empty()) std::cerr << "report: no run records under " << args.runs << "\n";
    nre::write_summary_csv(args.out, nre::aggregate_records(records));
    std::cout << "aggregated " << records.size() << " run records into " << args.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive likelihood-to-evidence ratio estimation toolkit"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Draw joint (theta, x) samples to CSV");
    sim_cmd->add_option("--task", sim.task, "Task name")->capture_default_str();
    sim_cmd->add_option("--sigma", sim.sigma, "conjugate_gaussian noise std");
    sim_cmd->add_option("--n", sim.n, "Number of draws")->capture_default_str();
    sim_cmd->add_option("--seed", sim.seed, "RNG seed");
    sim_cmd->add_option("--out", sim.out, "Output CSV path")->capture_default_str();

    TrainArgs tr;
    auto* tr_cmd = app.add_subcommand("train", "Train a ratio estimator");
    tr_cmd->add_option("--config", tr.config_file, "JSON config mirroring the train settings");
    tr_cmd->add_option("--task", tr.cfg.task, "Task name");
    tr_cmd->add_option("--sigma", tr.cfg.task_sigma, "conjugate_gaussian noise std");
    tr_cmd->add_option("--regime", tr.regime, "fresh_joint | fresh_prior | bootstrap");
    tr_cmd->add_option("--variant", tr.variant, "Loss variant: a | b | c");
    tr_cmd->add_option("--gamma", tr.cfg.loss.gamma, "Odds of the dependent class");
    tr_cmd->add_option("--k", tr.cfg.loss.K, "Contrastive slot count");
    tr_cmd->add_option("--arch", tr.cfg.arch, "small | large");
    tr_cmd->add_option("--hidden", tr.cfg.hidden, "Hidden units override");
    tr_cmd->add_option("--blocks", tr.cfg.blocks, "Residual block override");
    tr_cmd->add_option("--epochs", tr.cfg.max_epochs, "Max epochs");
    tr_cmd->add_option("--batch-size", tr.cfg.batch_size, "Mini-batch size");
    tr_cmd->add_option("--batches-per-epoch", tr.cfg.batches_per_epoch, "Train batches per epoch");
    tr_cmd->add_option("--val-batches", tr.cfg.val_batches_per_epoch, "Val batches per epoch");
    tr_cmd->add_option("--budget", tr.cfg.simulation_budget, "Simulation budget (fixed regimes)");
    tr_cmd->add_option("--lr", tr.cfg.learning_rate, "Adam learning rate");
    tr_cmd->add_option("--mi0-m", tr.cfg.mi0_marginal_samples, "Marginal draws per val x");
    tr_cmd->add_option("--patience", tr.cfg.patience, "Early-stopping patience (0 = off)");
    tr_cmd->add_flag("--val-nrea", tr.cfg.validate_with_nrea_loss,
                     "Validate with the fixed gamma=1, K=1 loss");
    tr_cmd->add_option("--seed", tr.cfg.seed, "RNG seed");
    tr_cmd->add_option("--out", tr.out, "Output directory")->capture_default_str();

    SampleArgs sa;
    auto* sa_cmd = app.add_subcommand("sample", "Sample the surrogate posterior at an observation");
    sa_cmd->add_option("--checkpoint", sa.checkpoint, "Checkpoint path")->required();
    sa_cmd->add_option("--x-file", sa.x_file, "CSV with the observation row")->required();
    sa_cmd->add_option("--n", sa.n, "Number of draws")->capture_default_str();
    sa_cmd->add_option("--method", sa.method, "rejection | slice")->capture_default_str();
    sa_cmd->add_option("--chains", sa.chains, "Slice chains");
    sa_cmd->add_option("--seed", sa.seed, "RNG seed");
    sa_cmd->add_option("--out", sa.out, "Output CSV path")->capture_default_str();

    DiagnoseArgs dg;
    auto* dg_cmd = app.add_subcommand("diagnose", "Run the diagnostic suite on a checkpoint");
    dg_cmd->add_option("--checkpoint", dg.checkpoint, "Checkpoint path")->required();
    dg_cmd->add_option("--n-per-class", dg.n_per_class, "Samples per class for the ROC check");
    dg_cmd->add_option("--n-theta", dg.n_theta, "Parameter draws for the ROC check");
    dg_cmd->add_option("--mi-n", dg.mi_n, "Joint draws for the MI bounds");
    dg_cmd->add_option("--mi-m", dg.mi_m, "Marginal draws per observation for the MI bounds");
    dg_cmd->add_option("--zhat-obs", dg.zhat_observations, "Observations for partition estimates");
    dg_cmd->add_option("--zhat-samples", dg.zhat_samples, "Prior draws per partition estimate");
    dg_cmd->add_option("--x-file", dg.x_file, "Observation row for the C2ST");
    dg_cmd->add_option("--reference-samples", dg.reference_samples,
                       "Reference posterior samples CSV enabling the C2ST");
    dg_cmd->add_option("--method", dg.method, "Sampler for the C2ST: rejection | slice");
    dg_cmd->add_option("--seed", dg.seed, "RNG seed");
    dg_cmd->add_option("--out", dg.out, "Output JSON path")->capture_default_str();

    GridArgs gr;
    auto* gr_cmd = app.add_subcommand("grid", "Run a hyperparameter grid");
    gr_cmd->add_option("--config", gr.config_file, "Grid spec JSON");
    gr_cmd->add_option("--out", gr.out, "Output directory")->capture_default_str();
    gr_cmd->add_option("--jobs", gr.jobs, "Concurrent cells")->capture_default_str();

    ReportArgs rp;
    auto* rp_cmd = app.add_subcommand("report", "Re-aggregate run records into a summary CSV");
    rp_cmd->add_option("--runs", rp.runs, "Grid output directory")->capture_default_str();
    rp_cmd->add_option("--out", rp.out, "Summary CSV path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (tr_cmd->parsed() && !tr.config_file.empty()) {
            std::ifstream in(tr.config_file);
            if (!in) throw nre::IoError("train: cannot open config " + tr.config_file);
            json j;
            in >> j;
            nre::TrainConfig file_cfg;
            std::string file_variant = tr.variant, file_regime = tr.regime;
            apply_train_json(j, file_cfg, file_variant, file_regime);
            // Explicit command-line flags override the file.
            auto keep = [&](const char* flag, auto& cli_value, auto& file_value) {
                if (tr_cmd->count(flag) == 0) cli_value = file_value;
            };
            keep("--task", tr.cfg.task, file_cfg.task);
            keep("--sigma", tr.cfg.task_sigma, file_cfg.task_sigma);
            keep("--regime", tr.regime, file_regime);
            keep("--variant", tr.variant, file_variant);
            keep("--gamma", tr.cfg.loss.gamma, file_cfg.loss.gamma);
            keep("--k", tr.cfg.loss.K, file_cfg.loss.K);
            keep("--arch", tr.cfg.arch, file_cfg.arch);
            keep("--hidden", tr.cfg.hidden, file_cfg.hidden);
            keep("--blocks", tr.cfg.blocks, file_cfg.blocks);
            keep("--epochs", tr.cfg.max_epochs, file_cfg.max_epochs);
            keep("--batch-size", tr.cfg.batch_size, file_cfg.batch_size);
            keep("--batches-per-epoch", tr.cfg.batches_per_epoch, file_cfg.batches_per_epoch);
            keep("--val-batches", tr.cfg.val_batches_per_epoch, file_cfg.val_batches_per_epoch);
            keep("--budget", tr.cfg.simulation_budget, file_cfg.simulation_budget);
            keep("--lr", tr.cfg.learning_rate, file_cfg.learning_rate);
            keep("--mi0-m", tr.cfg.mi0_marginal_samples, file_cfg.mi0_marginal_samples);
            keep("--patience", tr.cfg.patience, file_cfg.patience);
            keep("--seed", tr.cfg.seed, file_cfg.seed);
        }
        if (sim_cmd->parsed()) return cmd_simulate(sim);
        if (tr_cmd->parsed()) return cmd_train(tr);
        if (sa_cmd->parsed()) return cmd_sample(sa);
        if (dg_cmd->parsed()) return cmd_diagnose(dg);
        if (gr_cmd->parsed()) return cmd_grid(gr);
        if (rp_cmd->parsed()) return cmd_report(rp);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
