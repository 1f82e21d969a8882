#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "nre/checkpoint.hpp"
#include "nre/io.hpp"
#include "nre/trainer.hpp"
#include "test_util.hpp"

using namespace nre;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("nre_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

TrainResult tiny_run() {
    TrainConfig cfg;
    cfg.task = "conjugate_gaussian";
    cfg.regime = Regime::Bootstrap;
    cfg.loss = LossConfig{Variant::C, 2.0, 3};
    cfg.batch_size = 64;
    cfg.simulation_budget = 300;
    cfg.max_epochs = 3;
    cfg.mi0_marginal_samples = 4;
    cfg.seed = 11;
    return train(cfg);
}

}  // namespace

TEST_CASE("checkpoint round-trip reproduces eval outputs bitwise") {
    TempDir dir;
    TrainResult result = tiny_run();
    const std::string path = dir.file("checkpoint.json");
    result.checkpoint.save(path);
    Checkpoint loaded = Checkpoint::load(path);

    CHECK(loaded.task_name == "conjugate_gaussian");
    CHECK(loaded.epoch == result.checkpoint.epoch);
    CHECK(loaded.loss.K == 3);
    CHECK(loaded.loss.gamma == 2.0);
    CHECK(loaded.data_rng_state == result.checkpoint.data_rng_state);
    CHECK(loaded.opt.step_count == result.checkpoint.opt.step_count);

    // Bitwise equality of parameters, running stats, optimizer moments.
    auto pa = result.checkpoint.net.parameters();
    auto pb = loaded.net.parameters();
    for (std::size_t k = 0; k < pa.size(); ++k)
        for (std::size_t i = 0; i < pa[k]->size(); ++i)
            REQUIRE(pa[k]->data()[i] == pb[k]->data()[i]);
    auto sa = result.checkpoint.net.running_stats();
    auto sb = loaded.net.running_stats();
    for (std::size_t k = 0; k < sa.size(); ++k)
        for (std::size_t i = 0; i < sa[k]->size(); ++i)
            REQUIRE(sa[k]->data()[i] == sb[k]->data()[i]);
    for (std::size_t k = 0; k < result.checkpoint.opt.m.size(); ++k)
        for (std::size_t i = 0; i < result.checkpoint.opt.m[k].size(); ++i) {
            REQUIRE(result.checkpoint.opt.m[k].data()[i] == loaded.opt.m[k].data()[i]);
            REQUIRE(result.checkpoint.opt.v[k].data()[i] == loaded.opt.v[k].data()[i]);
        }

    // Standardizer round-trips bitwise.
    REQUIRE(loaded.standardizer.theta_mean == result.checkpoint.standardizer.theta_mean);
    REQUIRE(loaded.standardizer.theta_std == result.checkpoint.standardizer.theta_std);
    REQUIRE(loaded.standardizer.x_mean == result.checkpoint.standardizer.x_mean);
    REQUIRE(loaded.standardizer.x_std == result.checkpoint.standardizer.x_std);

    // Eval-mode outputs identical on fresh inputs.
    Rng rng(99);
    Matrix theta = test_util::random_matrix(32, 1, rng);
    Matrix x = test_util::random_matrix(32, 1, rng);
    result.checkpoint.net.set_train(false);
    loaded.net.set_train(false);
    Matrix h1 = forward(result.checkpoint.net, theta, x);
    Matrix h2 = forward(loaded.net, theta, x);
    for (std::size_t i = 0; i < h1.size(); ++i) REQUIRE(h1.data()[i] == h2.data()[i]);

    // Double round-trip is stable.
    loaded.save(dir.file("checkpoint2.json"));
    std::ifstream a(path), b(dir.file("checkpoint2.json"));
    std::string sa2((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb2((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa2 == sb2);
}

TEST_CASE("checkpoint config echo survives the round trip") {
    TempDir dir;
    TrainResult result = tiny_run();
    result.checkpoint.save(dir.file("c.json"));
    Checkpoint loaded = Checkpoint::load(dir.file("c.json"));
    CHECK(loaded.config_echo.at("seed").get<std::uint64_t>() == 11);
    CHECK(loaded.config_echo.at("regime").get<std::string>() == "bootstrap");
}

TEST_CASE("checkpoint io errors") {
    TempDir dir;
    CHECK_THROWS_AS(Checkpoint::load(dir.file("missing.json")), IoError);
    std::ofstream bad(dir.file("bad.json"));
    bad << "{\"format\": \"something_else\"}";
    bad.close();
    CHECK_THROWS_AS(Checkpoint::load(dir.file("bad.json")), IoError);
}

TEST_CASE("joint csv round trip") {
    TempDir dir;
    Rng rng(7);
    Task task = tasks::two_moons();
    JointBatch batch = sample_joint(task, 50, rng);
    const std::string path = dir.file("joint.csv");
    write_joint_csv(path, batch);
    JointBatch loaded = read_joint_csv(path);
    REQUIRE(loaded.theta.rows() == 50);
    REQUIRE(loaded.theta.cols() == 2);
    REQUIRE(loaded.x.cols() == 2);
    for (std::size_t i = 0; i < batch.theta.size(); ++i)
        REQUIRE(loaded.theta.data()[i] == batch.theta.data()[i]);
    for (std::size_t i = 0; i < batch.x.size(); ++i)
        REQUIRE(loaded.x.data()[i] == batch.x.data()[i]);
}

TEST_CASE("train log csv") {
    TempDir dir;
    write_train_log_csv(dir.file("log.csv"), {0.5, 0.4}, {0.6, 0.55}, {-0.1, -0.2});
    CsvTable t = read_matrix_csv(dir.file("log.csv"));
    REQUIRE(t.header ==
            std::vector<std::string>{"epoch", "train_loss", "val_loss", "neg_mi0"});
    REQUIRE(t.values.rows() == 2);
    CHECK(t.values(1, 1) == 0.4);
    CHECK(t.values(1, 3) == -0.2);
}
