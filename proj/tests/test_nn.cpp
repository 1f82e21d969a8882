#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nre/adam.hpp"
#include "nre/loss.hpp"
#include "nre/nn.hpp"
#include "nre/standardizer.hpp"
#include "test_util.hpp"

using namespace nre;

TEST_CASE("zero output layer gives zero logits") {
    Rng rng(1);
    RatioNet net(2, 3, 16, 2);
    net.init(rng);
    net.head().w.fill(0.0);
    net.head().b.fill(0.0);
    net.set_train(false);
    Matrix theta = test_util::random_matrix(5, 2, rng);
    Matrix x = test_util::random_matrix(5, 3, rng);
    Matrix logits = forward(net, theta, x);
    REQUIRE(logits.rows() == 5);
    REQUIRE(logits.cols() == 1);
    for (std::size_t i = 0; i < 5; ++i) CHECK(logits(i, 0) == 0.0);
}

TEST_CASE("eval-mode forward is deterministic") {
    Rng rng(2);
    RatioNet net(1, 1, 8, 1);
    net.init(rng);
    net.set_train(false);
    Matrix theta = test_util::random_matrix(4, 1, rng);
    Matrix x = test_util::random_matrix(4, 1, rng);
    Matrix l1 = forward(net, theta, x);
    Matrix l2 = forward(net, theta, x);
    for (std::size_t i = 0; i < l1.size(); ++i) REQUIRE(l1.data()[i] == l2.data()[i]);
}

TEST_CASE("single dense layer matches hand arithmetic") {
    Dense layer(2, 1);
    layer.w(0, 0) = 3.0;
    layer.w(0, 1) = -0.5;
    layer.b(0, 0) = 0.25;
    Matrix in(1, 2, {1.0, 2.0});
    Matrix out = layer.forward(in, false);
    CHECK(out(0, 0) == Catch::Approx(3.0 * 1.0 - 0.5 * 2.0 + 0.25).epsilon(0));
}

TEST_CASE("forward shape and numeric errors") {
    Rng rng(3);
    RatioNet net(2, 2, 8, 1);
    net.init(rng);
    net.set_train(false);
    Matrix theta(3, 2), x(4, 2);
    CHECK_THROWS_AS(forward(net, theta, x), ShapeError);
    Matrix theta_bad(3, 1), x3(3, 2);
    CHECK_THROWS_AS(forward(net, theta_bad, x3), ShapeError);

    Matrix theta_inf(1, 2, {std::numeric_limits<double>::infinity(), 0.0});
    Matrix x_ok(1, 2, {0.0, 0.0});
    CHECK_THROWS_AS(forward(net, theta_inf, x_ok), NumericError);
    try {
        forward(net, theta_inf, x_ok);
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("input projection") != std::string::npos);
    }
}

TEST_CASE("backward without cached train forward is a state error") {
    Rng rng(4);
    RatioNet net(1, 1, 8, 1);
    net.init(rng);
    Matrix dlogits(2, 1, {1.0, 1.0});
    CHECK_THROWS_AS(net.backward(dlogits), StateError);
    net.set_train(false);
    Matrix theta(2, 1), x(2, 1);
    forward(net, theta, x);
    CHECK_THROWS_AS(net.backward(dlogits), StateError);
}

TEST_CASE("mean loss with zero weights puts unit gradient on head bias") {
    Rng rng(5);
    const std::size_t B = 4;
    RatioNet net(1, 1, 8, 1);
    net.init(rng);
    net.head().w.fill(0.0);
    net.head().b.fill(0.0);
    net.set_train(true);
    Matrix theta = test_util::random_matrix(B, 1, rng);
    Matrix x = test_util::random_matrix(B, 1, rng);
    forward(net, theta, x);
    // loss = mean(logits): each row's upstream gradient is 1/B.
    Matrix upstream(B, 1, 1.0 / static_cast<double>(B));
    net.backward(upstream);
    CHECK(net.head().db(0, 0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("constant loss gives exactly zero gradients") {
    Rng rng(6);
    RatioNet net(2, 1, 8, 2);
    net.init(rng);
    net.set_train(true);
    Matrix theta = test_util::random_matrix(3, 2, rng);
    Matrix x = test_util::random_matrix(3, 1, rng);
    forward(net, theta, x);
    Matrix upstream(3, 1, 0.0);
    net.backward(upstream);
    for (Matrix* g : net.gradients())
        for (std::size_t i = 0; i < g->size(); ++i) REQUIRE(g->data()[i] == 0.0);
}

TEST_CASE("gradients match finite differences on simple losses") {
    for (std::uint64_t seed : {10, 11, 12}) {
        Rng rng(seed);
        const std::size_t B = 6;
        RatioNet net(2, 2, 12, 2);
        net.init(rng);
        net.set_train(true);
        Matrix theta = test_util::random_matrix(B, 2, rng);
        Matrix x = test_util::random_matrix(B, 2, rng);
        Matrix input = hcat(theta, x);

        // loss = mean of squared logits
        auto loss_fn = [&]() {
            Matrix logits = net.forward_rows(input);
            double acc = 0.0;
            for (std::size_t i = 0; i < logits.size(); ++i)
                acc += logits.data()[i] * logits.data()[i];
            return acc / static_cast<double>(B);
        };
        Matrix logits = net.forward_rows(input);
        Matrix upstream(B, 1);
        for (std::size_t i = 0; i < B; ++i)
            upstream(i, 0) = 2.0 * logits(i, 0) / static_cast<double>(B);
        net.backward(upstream);
        auto analytic = net.gradients();
        auto fd = test_util::finite_diff_gradients(loss_fn, net.parameters());
        double worst = 0.0;
        const bool ok = test_util::gradients_match(analytic, fd, 1e-4, 1e-9, &worst);
        INFO("seed " << seed << " worst rel err " << worst);
        CHECK(ok);
    }
}

TEST_CASE("contrastive loss gradients match finite differences") {
    // Random small nets and random batches, the full loss path.
    for (std::uint64_t seed : {21, 22, 23, 24}) {
        Rng rng(seed);
        const int K = 1 + static_cast<int>(rng.below(3));
        const int B = 2 * K + static_cast<int>(rng.below(4));  // <= 8 at K <= 2
        const std::size_t hidden = 4 + rng.below(13);  // <= 16
        const std::size_t blocks = 1 + rng.below(3);   // <= 3
        LossConfig cfg{Variant::C, std::exp(rng.uniform(-1.5, 1.5)), K};

        Task task = tasks::conjugate_gaussian();
        JointBatch mb = sample_joint(task, B, rng);
        Rng asm_rng = rng.split(77);
        ContrastivePair pair =
            assemble_contrastive_batch(mb, Regime::FreshPrior, K, asm_rng, &task);

        RatioNet net(1, 1, hidden, blocks);
        net.init(rng);
        net.set_train(true);
        Standardizer std_ = identity_standardizer(1, 1);

        auto loss_fn = [&]() { return evaluate_loss(net, std_, pair, cfg, false); };
        evaluate_loss(net, std_, pair, cfg, true);
        auto analytic = net.gradients();
        auto fd = test_util::finite_diff_gradients(loss_fn, net.parameters());
        double worst = 0.0;
        const bool ok = test_util::gradients_match(analytic, fd, 1e-4, 1e-9, &worst);
        INFO("seed " << seed << " B=" << B << " K=" << K << " worst rel err " << worst);
        CHECK(ok);
    }
}

TEST_CASE("train-mode batch norm output is standardized before scale/shift") {
    Rng rng(30);
    BatchNorm bn(4);
    Matrix x = test_util::random_matrix(64, 4, rng, 3.0);
    for (std::size_t i = 0; i < x.rows(); ++i) x(i, 2) += 10.0;  // off-center feature
    Matrix y = bn.forward(x, true);  // gamma=1, beta=0: output is pre-scale/shift
    auto mu = column_means(y);
    auto var = column_vars(y);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(std::abs(mu[j]) < 1e-6);
        CHECK(std::abs(var[j] - 1.0) < 1e-6);
    }
}

TEST_CASE("running statistics update only in train mode") {
    Rng rng(31);
    BatchNorm bn(2);
    Matrix x = test_util::random_matrix(32, 2, rng);
    Matrix rm_before = bn.running_mean;
    bn.forward(x, false);
    for (std::size_t j = 0; j < 2; ++j) REQUIRE(bn.running_mean(0, j) == rm_before(0, j));
    bn.forward(x, true);
    bool changed = false;
    for (std::size_t j = 0; j < 2; ++j)
        if (bn.running_mean(0, j) != rm_before(0, j)) changed = true;
    CHECK(changed);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Matrix p(2, 2, {1.0, -2.0, 3.0, 4.0});
    Matrix g(2, 2, 0.0);
    AdamState state;
    state.init({&p});
    Matrix before = p;
    adam_step({&p}, {&g}, state);
    for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(p.data()[i] == before.data()[i]);
    CHECK(state.step_count == 1);
}

TEST_CASE("adam: bias-corrected first step moves by about lr") {
    Matrix p(1, 1, 0.0);
    Matrix g(1, 1, 1.0);
    AdamState state;
    state.init({&p});
    adam_step({&p}, {&g}, state);
    CHECK(p(0, 0) == Catch::Approx(-0.0005).epsilon(1e-6));
}

TEST_CASE("adam: identical state and gradients give identical parameters") {
    Rng rng(40);
    Matrix g = test_util::random_matrix(3, 3, rng);
    Matrix p1 = test_util::random_matrix(3, 3, rng);
    Matrix p2 = p1;
    AdamState s1, s2;
    s1.init({&p1});
    s2.init({&p2});
    for (int i = 0; i < 5; ++i) {
        adam_step({&p1}, {&g}, s1);
        adam_step({&p2}, {&g}, s2);
    }
    for (std::size_t i = 0; i < p1.size(); ++i) REQUIRE(p1.data()[i] == p2.data()[i]);
}

TEST_CASE("adam: shape mismatch throws") {
    Matrix p(2, 2);
    Matrix g(2, 1);
    AdamState state;
    state.init({&p});
    CHECK_THROWS_AS(adam_step({&p}, {&g}, state), ShapeError);
}

TEST_CASE("standardizer fit and apply") {
    SECTION("constant column floors the std") {
        Matrix theta(3, 1, {2.0, 2.0, 2.0});
        Matrix x(3, 1, {0.0, 1.0, 2.0});
        Standardizer s = fit_standardizer(theta, x);
        CHECK(s.theta_mean[0] == 2.0);
        CHECK(s.theta_std[0] == Standardizer::kStdFloor);
    }
    SECTION("apply o fit standardizes the fitting batch") {
        Rng rng(50);
        Matrix theta = test_util::random_matrix(128, 2, rng, 4.0);
        Matrix x = test_util::random_matrix(128, 3, rng, 0.2);
        Standardizer s = fit_standardizer(theta, x);
        auto [ts, xs] = apply(s, theta, x);
        for (double m : column_means(ts)) CHECK(std::abs(m) < 1e-10);
        for (double v : column_vars(xs)) CHECK(std::abs(v - 1.0) < 1e-10);
    }
    SECTION("hand statistics") {
        Matrix theta(2, 1, {0.0, 2.0});
        Matrix x(2, 1, {1.0, 3.0});
        Standardizer s = fit_standardizer(theta, x);
        CHECK(s.theta_mean[0] == 1.0);
        CHECK(s.theta_std[0] == 1.0);  // population std
    }
    SECTION("empty batch is a config error") {
        Matrix e(0, 1);
        CHECK_THROWS_AS(fit_standardizer(e, e), ConfigError);
    }
}

TEST_CASE("identical seed and config give bitwise-identical parameters") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        RatioNet net(1, 1, 10, 2);
        net.init(rng);
        AdamState opt;
        opt.init(net.parameters());
        Task task = tasks::conjugate_gaussian();
        Standardizer std_ = identity_standardizer(1, 1);
        LossConfig cfg{Variant::C, 1.0, 2};
        net.set_train(true);
        Rng data = rng.split(1);
        for (int step = 0; step < 10; ++step) {
            JointBatch mb = sample_joint(task, 16, data);
            ContrastivePair pair =
                assemble_contrastive_batch(mb, Regime::FreshJoint, cfg.K, data, &task);
            evaluate_loss(net, std_, pair, cfg, true);
            adam_step(net.parameters(), net.gradients(), opt);
        }
        return net;
    };
    RatioNet a = run(123);
    RatioNet b = run(123);
    auto pa = a.parameters();
    auto pb = b.parameters();
    for (std::size_t k = 0; k < pa.size(); ++k)
        for (std::size_t i = 0; i < pa[k]->size(); ++i)
            REQUIRE(pa[k]->data()[i] == pb[k]->data()[i]);
}
