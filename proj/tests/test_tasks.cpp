#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "nre/tasks.hpp"
#include "test_util.hpp"

using namespace nre;

namespace {

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double column_corr(const Matrix& a, const Matrix& b) {
    const std::size_t n = a.rows();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a(i, 0);
        mb += b(i, 0);
    }
    ma /= n;
    mb /= n;
    double cab = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cab += (a(i, 0) - ma) * (b(i, 0) - mb);
        va += (a(i, 0) - ma) * (a(i, 0) - ma);
        vb += (b(i, 0) - mb) * (b(i, 0) - mb);
    }
    return cab / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("prior supports") {
    Rng rng(1);
    Task tm = tasks::two_moons();
    Matrix tm_draws = sample_prior(tm, 5000, rng);
    for (double v : tm_draws.storage()) {
        REQUIRE(v >= -1.0);
        REQUIRE(v <= 1.0);
    }
    Task sl = tasks::slcp();
    Matrix sl_draws = sample_prior(sl, 5000, rng);
    for (double v : sl_draws.storage()) {
        REQUIRE(v >= -3.0);
        REQUIRE(v <= 3.0);
    }
}

TEST_CASE("conjugate gaussian prior moments") {
    Rng rng(2);
    Task cg = tasks::conjugate_gaussian();
    const std::size_t n = 100000;
    Matrix draws = sample_prior(cg, n, rng);
    const double mean = column_means(draws)[0];
    const double var = column_vars(draws)[0];
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("gaussian linear simulator moments") {
    Rng rng(3);
    Task gl = tasks::gaussian_linear();
    const std::size_t n = 100000;
    Matrix theta(n, 10, 0.0);
    Matrix x = simulate(gl, theta, rng);
    auto mu = column_means(x);
    auto var = column_vars(x);
    for (std::size_t j = 0; j < 10; ++j) {
        CHECK(std::abs(mu[j]) < 0.005);
        CHECK(std::abs(var[j] - 0.1) < 0.005);
    }
}

TEST_CASE("conjugate gaussian simulator moments at theta = 2") {
    Rng rng(4);
    Task cg = tasks::conjugate_gaussian();
    const std::size_t n = 100000;
    Matrix theta(n, 1, 2.0);
    Matrix x = simulate(cg, theta, rng);
    CHECK(std::abs(column_means(x)[0] - 2.0) < 0.015);
    CHECK(std::abs(column_vars(x)[0] - 1.0) < 0.02);
}

TEST_CASE("gaussian mixture simulator matches mixture moments") {
    Rng rng(5);
    Task gm = tasks::gaussian_mixture();
    const std::size_t n = 100000;
    Matrix theta(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        theta(i, 0) = 1.5;
        theta(i, 1) = -0.5;
    }
    Matrix x = simulate(gm, theta, rng);
    auto mu = column_means(x);
    auto var = column_vars(x);
    // Equal-weight mixture of N(theta, 1.0 I) and N(theta, 0.01 I): the
    // component means coincide, so the variance is (1.0 + 0.01) / 2.
    CHECK(std::abs(mu[0] - 1.5) < 0.01);
    CHECK(std::abs(mu[1] + 0.5) < 0.01);
    CHECK(std::abs(var[0] - 0.505) < 0.01);
    CHECK(std::abs(var[1] - 0.505) < 0.01);
}

TEST_CASE("slcp simulator matches its likelihood parameterization") {
    Rng rng(6);
    Task sl = tasks::slcp();
    const std::size_t n = 40000;
    const double t3 = 0.8, t4 = 1.2, t5 = 0.3;
    Matrix theta(n, 5);
    for (std::size_t i = 0; i < n; ++i) {
        theta(i, 0) = 1.0;
        theta(i, 1) = -1.0;
        theta(i, 2) = t3;
        theta(i, 3) = t4;
        theta(i, 4) = t5;
    }
    Matrix x = simulate(sl, theta, rng);
    REQUIRE(x.cols() == 8);
    auto mu = column_means(x);
    auto var = column_vars(x);
    const double s1 = t3 * t3, s2 = t4 * t4, rho = std::tanh(t5);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(std::abs(mu[2 * k] - 1.0) < 0.02);
        CHECK(std::abs(mu[2 * k + 1] + 1.0) < 0.05);
        CHECK(std::abs(var[2 * k] - s1 * s1) < 0.02);
        CHECK(std::abs(var[2 * k + 1] - s2 * s2) < 0.08);
    }
    // Correlation between the two coordinates of one draw.
    Matrix c0(n, 1), c1(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        c0(i, 0) = x(i, 0);
        c1(i, 0) = x(i, 1);
    }
    CHECK(std::abs(column_corr(c0, c1) - rho) < 0.02);
}

TEST_CASE("joint sampling") {
    Rng rng(7);
    Task cg = tasks::conjugate_gaussian();
    SECTION("empty batch") {
        JointBatch b = sample_joint(cg, 0, rng);
        CHECK(b.size() == 0);
    }
    SECTION("theta-x correlation is 1/sqrt(2) for sigma = 1") {
        const std::size_t n = 100000;
        JointBatch b = sample_joint(cg, n, rng);
        CHECK(std::abs(column_corr(b.theta, b.x) - 1.0 / std::sqrt(2.0)) < 0.01);
    }
    SECTION("fixed seed replays identically") {
        Rng r1(99), r2(99);
        JointBatch b1 = sample_joint(cg, 64, r1);
        JointBatch b2 = sample_joint(cg, 64, r2);
        for (std::size_t i = 0; i < b1.theta.size(); ++i)
            REQUIRE(b1.theta.data()[i] == b2.theta.data()[i]);
        for (std::size_t i = 0; i < b1.x.size(); ++i)
            REQUIRE(b1.x.data()[i] == b2.x.data()[i]);
    }
}

TEST_CASE("analytic log ratio") {
    Task cg = tasks::conjugate_gaussian();
    SECTION("hand value at theta = 0, x = 0") {
        std::vector<double> th{0.0}, x{0.0};
        CHECK(analytic_log_ratio(cg, th, x) ==
              Catch::Approx(0.5 * std::log(2.0)).epsilon(1e-12));
    }
    SECTION("sign at matched modes follows the variance ratio") {
        // Likelihood variance sigma^2 < marginal variance 1 + sigma^2, so the
        // log-ratio at the common mode is positive for every sigma.
        for (double sigma : {0.5, 1.0, 2.0}) {
            Task t = tasks::conjugate_gaussian(sigma);
            std::vector<double> th{0.0}, x{0.0};
            const double expected = 0.5 * std::log((1.0 + sigma * sigma) / (sigma * sigma));
            CHECK(analytic_log_ratio(t, th, x) == Catch::Approx(expected).epsilon(1e-12));
            CHECK(analytic_log_ratio(t, th, x) > 0.0);
        }
    }
    SECTION("normalization identity by Monte Carlo") {
        Rng rng(8);
        const std::size_t m = 100000;
        for (int rep = 0; rep < 10; ++rep) {
            JointBatch obs = sample_joint(cg, 1, rng);
            Matrix theta = sample_prior(cg, m, rng);
            double acc = 0.0, acc2 = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double w = std::exp(analytic_log_ratio(cg, theta.row(i), obs.x.row(0)));
                acc += w;
                acc2 += w * w;
            }
            const double mean = acc / m;
            const double se = std::sqrt((acc2 / m - mean * mean) / m);
            CHECK(std::abs(mean - 1.0) < 3.0 * se + 1e-9);
        }
    }
    SECTION("missing reference is unsupported") {
        Task tm = tasks::two_moons();
        std::vector<double> th{0.0, 0.0}, x{0.0, 0.0};
        CHECK_THROWS_AS(analytic_log_ratio(tm, th, x), UnsupportedError);
    }
}

TEST_CASE("reference posterior matches rejection from the analytic ratio") {
    Rng rng(9);
    for (const char* name : {"conjugate_gaussian", "gaussian_linear"}) {
        Task task = make_task(name);
        JointBatch obs = sample_joint(task, 1, rng);
        const std::size_t n = 20000;
        Matrix ref = task.reference_posterior(obs.x.row(0), n, rng);

        // Rejection sampling from exp(log r) with the prior proposal.
        Matrix rej(n, task.dim_theta);
        double max_h = -1e300;
        Matrix probe = sample_prior(task, 20000, rng);
        for (std::size_t i = 0; i < probe.rows(); ++i)
            max_h = std::max(max_h, analytic_log_ratio(task, probe.row(i), obs.x.row(0)));
        const double log_env = std::log(1.2) + max_h;
        std::size_t accepted = 0;
        while (accepted < n) {
            Matrix cand = sample_prior(task, 4096, rng);
            for (std::size_t i = 0; i < cand.rows() && accepted < n; ++i) {
                const double h = analytic_log_ratio(task, cand.row(i), obs.x.row(0));
                if (std::log(std::max(rng.uniform(), 1e-300)) < h - log_env) {
                    std::copy(cand.row(i).begin(), cand.row(i).end(), rej.row(accepted).begin());
                    ++accepted;
                }
            }
        }
        auto mu_ref = column_means(ref);
        auto mu_rej = column_means(rej);
        auto var_ref = column_vars(ref);
        auto var_rej = column_vars(rej);
        for (std::size_t j = 0; j < task.dim_theta; ++j) {
            const double se_mean = std::sqrt(var_ref[j] / n) + std::sqrt(var_rej[j] / n);
            CHECK(std::abs(mu_ref[j] - mu_rej[j]) < 5.0 * se_mean + 1e-6);
            CHECK(std::abs(var_ref[j] - var_rej[j]) < 0.15 * var_ref[j] + 1e-6);
        }
    }
}

TEST_CASE("two moons posterior inverse is consistent with the simulator") {
    Rng rng(10);
    Task tm = tasks::two_moons();
    Matrix theta_o(1, 2);
    theta_o(0, 0) = 0.4;
    theta_o(0, 1) = -0.3;
    Matrix x_o = simulate(tm, theta_o, rng);
    const std::size_t n = 4000;
    Matrix post = tm.reference_posterior(x_o.row(0), n, rng);

    // Every draw in the prior box.
    for (double v : post.storage()) {
        REQUIRE(v >= -1.0);
        REQUIRE(v <= 1.0);
    }
    // Bimodality: the rotated coordinate (theta1 + theta2)/sqrt(2) splits
    // into two sign groups (crescent-shaped posterior with two modes).
    std::size_t positive = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (post(i, 0) + post(i, 1) > 0.0) ++positive;
    CHECK(positive > n / 10);
    CHECK(positive < n - n / 10);
    // Posterior predictive: re-simulating from posterior draws lands near x_o.
    Matrix x_rep = simulate(tm, post, rng);
    auto mu = column_means(x_rep);
    CHECK(std::abs(mu[0] - x_o(0, 0)) < 0.05);
    CHECK(std::abs(mu[1] - x_o(0, 1)) < 0.05);
}

TEST_CASE("gaussian mixture reference posterior moments") {
    Rng rng(11);
    Task gm = tasks::gaussian_mixture();
    std::vector<double> x{2.0, -3.0};
    const std::size_t n = 60000;
    Matrix post = gm.reference_posterior(x, n, rng);
    auto mu = column_means(post);
    auto var = column_vars(post);
    // Deep inside the prior box the posterior is the mixture centered on x.
    CHECK(std::abs(mu[0] - 2.0) < 0.02);
    CHECK(std::abs(mu[1] + 3.0) < 0.02);
    CHECK(std::abs(var[0] - 0.505) < 0.02);
    CHECK(std::abs(var[1] - 0.505) < 0.02);
}

TEST_CASE("task registry") {
    for (const auto& name : task_names()) {
        Task t = make_task(name);
        CHECK(t.name == name);
        CHECK(t.dim_theta > 0);
        CHECK(t.dim_x > 0);
        CHECK(t.prior_std.size() == t.dim_theta);
        Rng rng(12);
        JointBatch b = sample_joint(t, 8, rng);
        CHECK(b.theta.cols() == t.dim_theta);
        CHECK(b.x.cols() == t.dim_x);
        CHECK(b.x.all_finite());
    }
    CHECK_THROWS_AS(make_task("lotka_volterra"), ConfigError);
}

TEST_CASE("deterministic benchmark observations") {
    Task tm = tasks::two_moons();
    Matrix a = task_observations(tm, 10, 7);
    Matrix b = task_observations(tm, 10, 7);
    REQUIRE(a.rows() == 10);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.data()[i] == b.data()[i]);
    Matrix c = task_observations(tm, 10, 8);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != c.data()[i]) differs = true;
    CHECK(differs);
}
