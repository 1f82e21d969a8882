#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nre/adam.hpp"
#include "nre/errors.hpp"
#include "nre/loss.hpp"
#include "nre/matrix.hpp"
#include "nre/nn.hpp"
#include "nre/standardizer.hpp"

namespace nre {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.storage()}};
}

inline Matrix matrix_from_json(const json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

/// Everything needed to resume training or to evaluate a trained ratio net:
/// architecture, weights, batch-norm running statistics, standardizer,
/// optimizer moments, RNG stream states, and the epoch counter. Stored as
/// JSON; doubles serialize with shortest round-trip representation, so a
/// load reproduces eval-mode outputs bitwise.
struct Checkpoint {
    std::string task_name;
    double task_sigma = 1.0;
    std::size_t dim_theta = 0, dim_x = 0, hidden = 0, n_blocks = 0;
    LossConfig loss;
    RatioNet net;
    Standardizer standardizer;
    AdamState opt;
    std::uint64_t data_rng_state = 0;
    std::uint64_t val_rng_state = 0;
    long epoch = 0;
    json config_echo;  // full training config for provenance

    json to_json() const {
        json j;
        j["format"] = "nre-checkpoint";
        j["version"] = 1;
        j["task"] = task_name;
        j["task_sigma"] = task_sigma;
        j["arch"] = {{"dim_theta", dim_theta},
                     {"dim_x", dim_x},
                     {"hidden", hidden},
                     {"n_blocks", n_blocks}};
        j["loss"] = {{"variant", to_string(loss.variant)}, {"gamma", loss.gamma}, {"K", loss.K}};
        json params = json::array();
        for (const Matrix* p : const_cast<RatioNet&>(net).parameters())
            params.push_back(matrix_to_json(*p));
        j["parameters"] = params;
        json stats = json::array();
        for (const Matrix* s : const_cast<RatioNet&>(net).running_stats())
            stats.push_back(matrix_to_json(*s));
        j["running_stats"] = stats;
        j["standardizer"] = {{"theta_mean", standardizer.theta_mean},
                             {"theta_std", standardizer.theta_std},
                             {"x_mean", standardizer.x_mean},
                             {"x_std", standardizer.x_std}};
        json moments_m = json::array(), moments_v = json::array();
        for (const Matrix& m : opt.m) moments_m.push_back(matrix_to_json(m));
        for (const Matrix& v : opt.v) moments_v.push_back(matrix_to_json(v));
        j["optimizer"] = {{"lr", opt.lr},           {"beta1", opt.beta1},
                          {"beta2", opt.beta2},     {"eps", opt.eps},
                          {"weight_decay", opt.weight_decay},
                          {"step_count", opt.step_count},
                          {"m", moments_m},         {"v", moments_v}};
        j["rng"] = {{"data", data_rng_state}, {"val", val_rng_state}};
        j["epoch"] = epoch;
        j["config"] = config_echo;
        return j;
    }

    static Checkpoint from_json(const json& j) {
        if (j.value("format", "") != "nre-checkpoint")
            throw IoError("checkpoint: unrecognized format field");
        Checkpoint c;
        c.task_name = j.at("task").get<std::string>();
        c.task_sigma = j.value("task_sigma", 1.0);
        const json& arch = j.at("arch");
        c.dim_theta = arch.at("dim_theta").get<std::size_t>();
        c.dim_x = arch.at("dim_x").get<std::size_t>();
        c.hidden = arch.at("hidden").get<std::size_t>();
        c.n_blocks = arch.at("n_blocks").get<std::size_t>();
        c.loss.variant = variant_from_string(j.at("loss").at("variant").get<std::string>());
        c.loss.gamma = j.at("loss").at("gamma").get<double>();
        c.loss.K = j.at("loss").at("K").get<int>();
        c.net = RatioNet(c.dim_theta, c.dim_x, c.hidden, c.n_blocks);
        auto params = c.net.parameters();
        const json& jp = j.at("parameters");
        if (jp.size() != params.size()) throw IoError("checkpoint: parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) {
            Matrix m = matrix_from_json(jp[i]);
            params[i]->require_same_shape(m, "checkpoint parameter " + std::to_string(i));
            *params[i] = std::move(m);
        }
        auto stats = c.net.running_stats();
        const json& js = j.at("running_stats");
        if (js.size() != stats.size()) throw IoError("checkpoint: running-stat count mismatch");
        for (std::size_t i = 0; i < stats.size(); ++i) *stats[i] = matrix_from_json(js[i]);
        const json& st = j.at("standardizer");
        c.standardizer.theta_mean = st.at("theta_mean").get<std::vector<double>>();
        c.standardizer.theta_std = st.at("theta_std").get<std::vector<double>>();
        c.standardizer.x_mean = st.at("x_mean").get<std::vector<double>>();
        c.standardizer.x_std = st.at("x_std").get<std::vector<double>>();
        const json& jo = j.at("optimizer");
        c.opt.lr = jo.at("lr").get<double>();
        c.opt.beta1 = jo.at("beta1").get<double>();
        c.opt.beta2 = jo.at("beta2").get<double>();
        c.opt.eps = jo.at("eps").get<double>();
        c.opt.weight_decay = jo.at("weight_decay").get<double>();
        c.opt.step_count = jo.at("step_count").get<long>();
        for (const json& m : jo.at("m")) c.opt.m.push_back(matrix_from_json(m));
        for (const json& v : jo.at("v")) c.opt.v.push_back(matrix_from_json(v));
        c.data_rng_state = j.at("rng").at("data").get<std::uint64_t>();
        c.val_rng_state = j.at("rng").at("val").get<std::uint64_t>();
        c.epoch = j.at("epoch").get<long>();
        c.config_echo = j.value("config", json::object());
        return c;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("checkpoint: cannot open " + path + " for writing");
        out << to_json().dump(1) << "\n";
        if (!out) throw IoError("checkpoint: write to " + path + " failed");
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("checkpoint: cannot open " + path);
        json j;
        in >> j;
        return from_json(j);
    }
};

}  // namespace nre
