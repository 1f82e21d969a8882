#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nre/diagnostics.hpp"
#include "nre/errors.hpp"
#include "nre/io.hpp"
#include "nre/posterior.hpp"
#include "nre/tasks.hpp"
#include "nre/trainer.hpp"

namespace nre {

inline constexpr const char* kVersion = "0.1.0";

/// Hyperparameter grid over tasks, loss variants, (gamma, K), architectures,
/// regimes, budgets, and seeds. Variant a expands only to its fixed corner
/// (gamma = 1, K = 1); variant b ignores the gamma axis.
struct GridSpec {
    std::vector<std::string> tasks{"two_moons"};
    std::vector<std::string> variants{"c"};
    std::vector<double> gammas{1.0};
    std::vector<int> ks{1};
    std::vector<std::string> archs{"small"};
    std::vector<std::string> regimes{"bootstrap"};
    std::vector<std::uint64_t> seeds{0};
    std::vector<long> budgets{22528};

    int batch_size = 1024;
    int batches_per_epoch = 20;
    int val_batches_per_epoch = 2;
    int max_epochs = 20;
    double learning_rate = 5e-4;
    int mi0_marginal_samples = 128;
    double task_sigma = 1.0;

    int c2st_observations = 10;
    int c2st_samples_per_side = 1024;
    std::string sampler = "rejection";  // rejection | slice
    int slice_chains = 4;
    int zhat_observations = 10;
    long zhat_samples = 10000;
    std::uint64_t observation_seed = 7;

    static GridSpec from_json(const json& j);
    json to_json() const;
};

inline GridSpec GridSpec::from_json(const json& j) {
    GridSpec s;
    if (j.contains("tasks")) s.tasks = j["tasks"].get<std::vector<std::string>>();
    if (j.contains("variants")) s.variants = j["variants"].get<std::vector<std::string>>();
    if (j.contains("gammas")) s.gammas = j["gammas"].get<std::vector<double>>();
    if (j.contains("ks")) s.ks = j["ks"].get<std::vector<int>>();
    if (j.contains("archs")) s.archs = j["archs"].get<std::vector<std::string>>();
    if (j.contains("regimes")) s.regimes = j["regimes"].get<std::vector<std::string>>();
    if (j.contains("seeds")) s.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("budgets")) s.budgets = j["budgets"].get<std::vector<long>>();
    s.batch_size = j.value("batch_size", s.batch_size);
    s.batches_per_epoch = j.value("batches_per_epoch", s.batches_per_epoch);
    s.val_batches_per_epoch = j.value("val_batches_per_epoch", s.val_batches_per_epoch);
    s.max_epochs = j.value("max_epochs", s.max_epochs);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.mi0_marginal_samples = j.value("mi0_marginal_samples", s.mi0_marginal_samples);
    s.task_sigma = j.value("task_sigma", s.task_sigma);
    s.c2st_observations = j.value("c2st_observations", s.c2st_observations);
    s.c2st_samples_per_side = j.value("c2st_samples_per_side", s.c2st_samples_per_side);
    s.sampler = j.value("sampler", s.sampler);
    s.slice_chains = j.value("slice_chains", s.slice_chains);
    s.zhat_observations = j.value("zhat_observations", s.zhat_observations);
    s.zhat_samples = j.value("zhat_samples", s.zhat_samples);
    s.observation_seed = j.value("observation_seed", s.observation_seed);
    return s;
}

inline json GridSpec::to_json() const {
    return json{{"tasks", tasks},
                {"variants", variants},
                {"gammas", gammas},
                {"ks", ks},
                {"archs", archs},
                {"regimes", regimes},
                {"seeds", seeds},
                {"budgets", budgets},
                {"batch_size", batch_size},
                {"batches_per_epoch", batches_per_epoch},
                {"val_batches_per_epoch", val_batches_per_epoch},
                {"max_epochs", max_epochs},
                {"learning_rate", learning_rate},
                {"mi0_marginal_samples", mi0_marginal_samples},
                {"task_sigma", task_sigma},
                {"c2st_observations", c2st_observations},
                {"c2st_samples_per_side", c2st_samples_per_side},
                {"sampler", sampler},
                {"slice_chains", slice_chains},
                {"zhat_observations", zhat_observations},
                {"zhat_samples", zhat_samples},
                {"observation_seed", observation_seed}};
}

struct GridCell {
    std::string task;
    Variant variant = Variant::C;
    double gamma = 1.0;  // +inf for variant b
    int K = 1;
    std::string arch;
    Regime regime = Regime::Bootstrap;
    long budget = 0;
    std::uint64_t seed = 0;
    std::size_t index = 0;

    std::string id() const {
        std::ostringstream os;
        os << task << "_" << to_string(variant) << "_g";
        if (std::isinf(gamma))
            os << "inf";
        else
            os << gamma;
        os << "_k" << K << "_" << arch << "_" << to_string(regime) << "_b" << budget << "_s"
           << seed;
        return os.str();
    }
};

/// One grid cell's outcome: config echo, metrics, artifact paths.
struct RunRecord {
    GridCell cell;
    std::string status = "ok";  // ok | failed
    std::string error;
    json config;
    double best_val_loss = std::numeric_limits<double>::quiet_NaN();
    double neg_mi0_best = std::numeric_limits<double>::quiet_NaN();
    double z_hat_med = std::numeric_limits<double>::quiet_NaN();
    double c2st_mean = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> c2st_per_obs;
    std::string run_dir;

    json to_json() const {
        json j;
        j["version"] = kVersion;
        j["id"] = cell.id();
        j["status"] = status;
        if (!error.empty()) j["error"] = error;
        j["config"] = config;
        j["seed"] = cell.seed;
        j["metrics"] = {{"best_val_loss", best_val_loss},
                        {"neg_mi0_best", neg_mi0_best},
                        {"z_hat_med", z_hat_med},
                        {"c2st_mean", c2st_mean},
                        {"c2st_per_obs", c2st_per_obs}};
        j["artifacts"] = {{"run_dir", run_dir},
                          {"checkpoint", run_dir + "/checkpoint.json"},
                          {"log", run_dir + "/log.csv"},
                          {"diagnostics", run_dir + "/diagnostics.json"}};
        return j;
    }

    static RunRecord from_json(const json& j) {
        RunRecord r;
        const json& cfg = j.at("config");
        r.cell.task = cfg.at("task").get<std::string>();
        r.cell.variant = variant_from_string(cfg.at("variant").get<std::string>());
        r.cell.gamma = r.cell.variant == Variant::B
                           ? std::numeric_limits<double>::infinity()
                           : cfg.at("gamma").get<double>();
        r.cell.K = cfg.at("K").get<int>();
        r.cell.arch = cfg.at("arch").get<std::string>();
        r.cell.regime = regime_from_string(cfg.at("regime").get<std::string>());
        r.cell.budget = cfg.at("simulation_budget").get<long>();
        r.cell.seed = j.at("seed").get<std::uint64_t>();
        r.status = j.at("status").get<std::string>();
        r.error = j.value("error", "");
        r.config = cfg;
        const json& m = j.at("metrics");
        // NaN metrics serialize as null; read those back as NaN.
        auto metric = [&m](const char* key) {
            if (!m.contains(key) || !m[key].is_number())
                return std::numeric_limits<double>::quiet_NaN();
            return m[key].get<double>();
        };
        r.best_val_loss = metric("best_val_loss");
        r.neg_mi0_best = metric("neg_mi0_best");
        r.z_hat_med = metric("z_hat_med");
        r.c2st_mean = metric("c2st_mean");
        if (m.contains("c2st_per_obs"))
            r.c2st_per_obs = m["c2st_per_obs"].get<std::vector<double>>();
        r.run_dir = j.at("artifacts").at("run_dir").get<std::string>();
        return r;
    }
};

inline std::vector<GridCell> expand_grid(const GridSpec& spec) {
    std::vector<GridCell> cells;
    for (const auto& task : spec.tasks)
        for (const auto& variant_name : spec.variants) {
            const Variant variant = variant_from_string(variant_name);
            const std::vector<double> gammas =
                variant == Variant::C ? spec.gammas : std::vector<double>{1.0};
            const std::vector<int> ks = variant == Variant::A ? std::vector<int>{1} : spec.ks;
            for (double gamma : gammas)
                for (int k : ks)
                    for (const auto& arch : spec.archs)
                        for (const auto& regime_name : spec.regimes)
                            for (long budget : spec.budgets)
                                for (std::uint64_t seed : spec.seeds) {
                                    GridCell cell;
                                    cell.task = task;
                                    cell.variant = variant;
                                    cell.gamma = variant == Variant::B
                                                     ? std::numeric_limits<double>::infinity()
                                                     : gamma;
                                    cell.K = k;
                                    cell.arch = arch;
                                    cell.regime = regime_from_string(regime_name);
                                    cell.budget = budget;
                                    cell.seed = seed;
                                    cell.index = cells.size();
                                    cells.push_back(cell);
                                }
        }
    return cells;
}

/// Validate structural constraints before running anything: every cell must
/// respect the bootstrap K <= B/2 rule.
inline void validate_grid(const GridSpec& spec, const std::vector<GridCell>& cells) {
    for (const auto& cell : cells) {
        TrainConfig probe;
        probe.batch_size = spec.batch_size;
        probe.batches_per_epoch = spec.batches_per_epoch;
        probe.val_batches_per_epoch = spec.val_batches_per_epoch;
        probe.simulation_budget = cell.budget;
        probe.regime = cell.regime;
        const auto plan = detail::plan_epoch(probe);
        if (cell.regime == Regime::Bootstrap && 2 * cell.K > plan.batch_size)
            throw ConfigError("grid: cell " + cell.id() + " violates K <= B/2 (K=" +
                              std::to_string(cell.K) +
                              ", effective batch=" + std::to_string(plan.batch_size) + ")");
    }
}

inline TrainConfig cell_train_config(const GridSpec& spec, const GridCell& cell) {
    TrainConfig cfg;
    cfg.task = cell.task;
    cfg.task_sigma = spec.task_sigma;
    cfg.regime = cell.regime;
    cfg.loss.variant = cell.variant;
    cfg.loss.gamma = cell.variant == Variant::B ? 1.0 : cell.gamma;  // unused for b
    cfg.loss.K = cell.K;
    cfg.arch = cell.arch;
    cfg.batch_size = spec.batch_size;
    cfg.batches_per_epoch = spec.batches_per_epoch;
    cfg.val_batches_per_epoch = spec.val_batches_per_epoch;
    cfg.max_epochs = spec.max_epochs;
    cfg.seed = cell.seed;
    cfg.simulation_budget = cell.budget;
    cfg.learning_rate = spec.learning_rate;
    cfg.mi0_marginal_samples = spec.mi0_marginal_samples;
    return cfg;
}

inline std::uint64_t cell_hash(std::uint64_t seed, std::size_t index) {
    std::uint64_t z = seed ^ (0x9E3779B97F4A7C15ULL * (index + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline RunRecord run_cell(const GridSpec& spec, const GridCell& cell,
                          const std::string& out_dir) {
    namespace fs = std::filesystem;
    RunRecord rec;
    rec.cell = cell;
    rec.run_dir = out_dir + "/runs/" + cell.id();
    fs::create_directories(rec.run_dir);
    TrainConfig cfg = cell_train_config(spec, cell);
    try {
        TrainResult result = train(cfg);
        rec.config = result.checkpoint.config_echo;
        {
            std::ofstream cfg_out(rec.run_dir + "/config.json");
            cfg_out << rec.config.dump(1) << "\n";
        }
        result.checkpoint.save(rec.run_dir + "/checkpoint.json");
        write_train_log_csv(rec.run_dir + "/log.csv", result.report.train_loss,
                            result.report.val_loss, result.report.neg_mi0);
        rec.best_val_loss = result.report.best_val_loss;
        rec.neg_mi0_best = result.report.neg_mi0.empty()
                               ? std::numeric_limits<double>::quiet_NaN()
                               : *std::min_element(result.report.neg_mi0.begin(),
                                                   result.report.neg_mi0.end());

        // Post-training diagnostics on a cell-specific stream.
        Rng diag_rng(cell_hash(cell.seed, cell.index));
        Surrogate surrogate = make_surrogate(result.checkpoint);
        std::vector<double> zhats;
        Matrix zx = task_observations(surrogate.task, spec.zhat_observations,
                                      spec.observation_seed + 1);
        for (std::size_t i = 0; i < zx.rows(); ++i)
            zhats.push_back(
                estimate_partition(surrogate, zx.row(i), spec.zhat_samples, diag_rng).z_hat);
        std::sort(zhats.begin(), zhats.end());
        rec.z_hat_med = zhats[zhats.size() / 2];

        if (surrogate.task.has_reference_posterior() && spec.c2st_observations > 0) {
            Matrix obs = task_observations(surrogate.task, spec.c2st_observations,
                                           spec.observation_seed);
            const std::size_t n_side = spec.c2st_samples_per_side;
            for (std::size_t i = 0; i < obs.rows(); ++i) {
                Matrix mine =
                    spec.sampler == "slice"
                        ? slice_sample(surrogate, obs.row(i), n_side, spec.slice_chains, diag_rng)
                        : rejection_sample(surrogate, obs.row(i), n_side, diag_rng);
                Matrix reference = surrogate.task.reference_posterior(obs.row(i), n_side, diag_rng);
                rec.c2st_per_obs.push_back(c2st(mine, reference, diag_rng));
            }
            rec.c2st_mean =
                std::accumulate(rec.c2st_per_obs.begin(), rec.c2st_per_obs.end(), 0.0) /
                static_cast<double>(rec.c2st_per_obs.size());
        }

        json diag{{"z_hat_med", rec.z_hat_med},
                  {"neg_mi0_best", rec.neg_mi0_best},
                  {"c2st_per_obs", rec.c2st_per_obs},
                  {"c2st_mean", rec.c2st_mean}};
        std::ofstream diag_out(rec.run_dir + "/diagnostics.json");
        diag_out << diag.dump(1) << "\n";
    } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = e.what();
        if (rec.config.is_null()) {
            rec.config = json{{"task", cfg.task},
                              {"variant", to_string(cfg.loss.variant)},
                              {"gamma", cfg.loss.gamma},
                              {"K", cfg.loss.K},
                              {"arch", cfg.arch},
                              {"regime", to_string(cfg.regime)},
                              {"simulation_budget", cfg.simulation_budget},
                              {"seed", cfg.seed}};
        }
    }
    std::ofstream rec_out(rec.run_dir + "/record.json");
    rec_out << rec.to_json().dump(1) << "\n";
    return rec;
}

struct AggRow {
    std::string task, variant, arch, regime;
    double gamma = 0.0;
    int K = 0;
    long budget = 0;
    std::string seed;  // seed value or "mean"
    double c2st_mean = std::numeric_limits<double>::quiet_NaN();
    double neg_mi0_best = std::numeric_limits<double>::quiet_NaN();
    double z_hat_med = std::numeric_limits<double>::quiet_NaN();
    double best_val_loss = std::numeric_limits<double>::quiet_NaN();
};

/// Pure re-aggregation of run records: one row per record plus
/// mean-over-tasks rows per hyperparameter setting. Rows are ordered by
/// cell id so the aggregate is independent of the records' arrival order.
inline std::vector<AggRow> aggregate_records(std::vector<RunRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.cell.id() < b.cell.id(); });
    std::vector<AggRow> rows;
    std::map<std::string, std::vector<const RunRecord*>> groups;
    for (const auto& rec : records) {
        if (rec.status != "ok") continue;
        AggRow row;
        row.task = rec.cell.task;
        row.variant = to_string(rec.cell.variant);
        row.gamma = rec.cell.gamma;
        row.K = rec.cell.K;
        row.arch = rec.cell.arch;
        row.regime = to_string(rec.cell.regime);
        row.budget = rec.cell.budget;
        row.seed = std::to_string(rec.cell.seed);
        row.c2st_mean = rec.c2st_mean;
        row.neg_mi0_best = rec.neg_mi0_best;
        row.z_hat_med = rec.z_hat_med;
        row.best_val_loss = rec.best_val_loss;
        rows.push_back(row);
        std::ostringstream key;
        key << row.variant << "|" << row.gamma << "|" << row.K << "|" << row.arch << "|"
            << row.regime << "|" << row.budget;
        groups[key.str()].push_back(&rec);
    }
    for (const auto& [key, members] : groups) {
        AggRow row;
        row.task = "mean_over_tasks";
        row.variant = to_string(members.front()->cell.variant);
        row.gamma = members.front()->cell.gamma;
        row.K = members.front()->cell.K;
        row.arch = members.front()->cell.arch;
        row.regime = to_string(members.front()->cell.regime);
        row.budget = members.front()->cell.budget;
        row.seed = "mean";
        auto nan_mean = [&](auto getter) {
            double acc = 0.0;
            int count = 0;
            for (const RunRecord* r : members) {
                const double v = getter(*r);
                if (!std::isnan(v)) {
                    acc += v;
                    ++count;
                }
            }
            return count > 0 ? acc / count : std::numeric_limits<double>::quiet_NaN();
        };
        row.c2st_mean = nan_mean([](const RunRecord& r) { return r.c2st_mean; });
        row.neg_mi0_best = nan_mean([](const RunRecord& r) { return r.neg_mi0_best; });
        row.z_hat_med = nan_mean([](const RunRecord& r) { return r.z_hat_med; });
        row.best_val_loss = nan_mean([](const RunRecord& r) { return r.best_val_loss; });
        rows.push_back(row);
    }
    return rows;
}

inline void write_summary_csv(const std::string& path, const std::vector<AggRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("write_summary_csv: cannot open " + path);
    out << "task,variant,gamma,K,arch,regime,budget,seed,c2st_mean,neg_mi0_best,z_hat_med,"
           "best_val_loss\n";
    for (const auto& r : rows) {
        out << r.task << "," << r.variant << ",";
        if (std::isinf(r.gamma))
            out << "inf";
        else
            out << r.gamma;
        out << "," << r.K << "," << r.arch << "," << r.regime << "," << r.budget << "," << r.seed
            << "," << csv::format_double(r.c2st_mean) << "," << csv::format_double(r.neg_mi0_best)
            << "," << csv::format_double(r.z_hat_med) << ","
            << csv::format_double(r.best_val_loss) << "\n";
    }
}

/// Run every cell, at most `jobs` at a time, then aggregate. Per-cell
/// failures are recorded in the cell's record and do not stop the grid.
inline std::vector<RunRecord> run_grid(const GridSpec& spec, const std::string& out_dir,
                                       int jobs = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
        std::ofstream spec_out(out_dir + "/grid_spec.json");
        spec_out << spec.to_json().dump(1) << "\n";
    }
    std::vector<GridCell> cells = expand_grid(spec);
    validate_grid(spec, cells);
    std::vector<RunRecord> records(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) break;
            records[i] = run_cell(spec, cells[i], out_dir);
        }
    };
    if (jobs <= 1 || cells.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int n_threads = std::min<int>(jobs, static_cast<int>(cells.size()));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    write_summary_csv(out_dir + "/grid_summary.csv", aggregate_records(records));
    return records;
}

/// Load all record.json files under a grid output directory.
inline std::vector<RunRecord> load_records(const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::vector<RunRecord> records;
    const fs::path runs = fs::path(out_dir) / "runs";
    if (!fs::exists(runs)) return records;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(runs)) {
        const fs::path rec = entry.path() / "record.json";
        if (fs::exists(rec)) paths.push_back(rec);
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        std::ifstream in(p);
        json j;
        in >> j;
        records.push_back(RunRecord::from_json(j));
    }
    return records;
}

}  // namespace nre
