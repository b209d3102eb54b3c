#include <cmath>
#include <limits>

#include "doctest.h"

#include "stflow/rng.hpp"
#include "stflow/training.hpp"

using namespace stflow;

namespace {

std::vector<Example> random_examples(const ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
    SeededRng rng(seed);
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) {
        TensorF x({cfg.frames, cfg.height, cfg.width, cfg.channels});
        for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
        out.push_back({"ex" + std::to_string(i), x, i % cfg.num_classes});
    }
    return out;
}

ModelState<double> scalar_state(double w, double b) {
    ModelState<double> s;
    s.add("w", TensorD({1}, w));
    s.add("layer.bias", TensorD({1}, b));
    return s;
}

}  // namespace

TEST_CASE("cce_loss") {
    const TensorD y({1, 2}, {1.0, 0.0});
    CHECK(cce_loss(TensorD({1, 2}, {1.0, 0.0}), y).loss == 0.0);
    CHECK(std::abs(cce_loss(TensorD({1, 2}, {0.5, 0.5}), y).loss - std::log(2.0)) < 1e-11);

    const auto r = cce_loss(TensorD({2, 2}, {0.25, 0.75, 0.9, 0.1}), TensorD({2, 2}, {0, 1, 1, 0}));
    CHECK(std::abs(r.loss + (std::log(0.75) + std::log(0.9)) / 2) < 1e-11);
    const TensorD expect({2, 2}, {0.125, -0.125, -0.05, 0.05});
    for (std::size_t i = 0; i < 4; ++i) CHECK(r.grad_logits[i] == doctest::Approx(expect[i]).epsilon(1e-15));

    SeededRng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double p = rng.uniform();
        CHECK(cce_loss(TensorD({1, 2}, {p, 1 - p}), y).loss >= 0.0);
    }

    CHECK_THROWS_AS(cce_loss(TensorD({1, 2}, {0.5, 0.5}), TensorD({1, 2}, {0.5, 0.5})), DataError);
    CHECK_THROWS_AS(cce_loss(TensorD({1, 2}, {0.5, 0.5}), TensorD({1, 2}, {1.0, 1.0})), DataError);
    CHECK_THROWS_AS(cce_loss(TensorD({1, 2}, {0.5, 0.5}), TensorD({1, 3}, {1.0, 0.0, 0.0})), ShapeError);

    const std::vector<std::size_t> labels{2, 0};
    CHECK(one_hot<double>(labels, 3) == TensorD({2, 3}, {0, 0, 1, 1, 0, 0}));
    const std::vector<std::size_t> bad{3};
    CHECK_THROWS_AS(one_hot<double>(bad, 3), DataError);
}

TEST_CASE("lr_schedule") {
    TrainConfig c;
    c.schedule = Schedule::optimal;
    c.alpha = 1.0;
    c.t0 = 1.0;
    CHECK(lr_schedule(0, c) == 1.0);
    c.alpha = 0.5;
    c.t0 = 2.0;
    CHECK(lr_schedule(2, c) == 0.5);
    for (std::uint64_t t = 0; t < 50; ++t) CHECK(lr_schedule(t + 1, c) < lr_schedule(t, c));

    SeededRng rng(21);
    for (int i = 0; i < 10; ++i) {
        c.alpha = rng.uniform(1e-4, 1.0);
        c.t0 = rng.uniform(0.1, 1000.0);
        const std::uint64_t t = rng.below(100000);
        CHECK(lr_schedule(t, c) == 1.0 / (c.alpha * (c.t0 + double(t))));
    }

    TrainConfig k;
    k.lr = 0.03;
    CHECK(lr_schedule(0, k) == 0.03);
    CHECK(lr_schedule(12345, k) == 0.03);

    c.alpha = 0.0;
    CHECK_THROWS_AS(lr_schedule(0, c), ConfigError);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.alpha = 1.0;
    c.t0 = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    TrainConfig b;
    b.batch_size = 0;
    CHECK_THROWS_AS(b.validate(), ConfigError);
}

TEST_CASE("sgd_step") {
    SUBCASE("no regularization") {
        auto s = scalar_state(2.0, 1.0);
        sgd_step(s, scalar_state(0.5, 0.25), 0.1, 0.0, Penalty::l2);
        CHECK(s.at("w")[0] == 2.0 - 0.1 * 0.5);
        CHECK(s.at("layer.bias")[0] == 1.0 - 0.1 * 0.25);
    }
    SUBCASE("decay only, biases untouched") {
        auto s = scalar_state(2.0, 1.0);
        sgd_step(s, scalar_state(0.0, 0.0), 0.1, 0.5, Penalty::l2);
        CHECK(s.at("w")[0] == doctest::Approx((1 - 0.1 * 0.5) * 2.0).epsilon(1e-15));
        CHECK(s.at("layer.bias")[0] == 1.0);
    }
    SUBCASE("penalty none ignores alpha") {
        auto s = scalar_state(2.0, 1.0);
        sgd_step(s, scalar_state(0.0, 0.0), 0.1, 0.5, Penalty::none);
        CHECK(s == scalar_state(2.0, 1.0));
    }
    SUBCASE("zero step size is the identity") {
        auto s = scalar_state(2.0, 1.0);
        sgd_step(s, scalar_state(7.0, -3.0), 0.0, 0.5, Penalty::l2);
        CHECK(s == scalar_state(2.0, 1.0));
    }
    SUBCASE("quadratic convergence") {
        ModelState<double> s;
        s.add("w", TensorD({1}, 0.0));
        for (int step = 0; step < 100; ++step) {
            ModelState<double> g;
            g.add("w", TensorD({1}, 2.0 * (s.at("w")[0] - 3.0)));
            sgd_step(s, g, 0.1, 0.0, Penalty::none);
        }
        CHECK(std::abs(s.at("w")[0] - 3.0) < 1e-6);
    }
    SUBCASE("mismatches") {
        auto s = scalar_state(2.0, 1.0);
        ModelState<double> other;
        other.add("w", TensorD({1}));
        CHECK_THROWS_AS(sgd_step(s, other, 0.1, 0.0, Penalty::none), ShapeError);
        ModelState<double> wrong;
        wrong.add("w", TensorD({2}));
        wrong.add("layer.bias", TensorD({1}));
        CHECK_THROWS_AS(sgd_step(s, wrong, 0.1, 0.0, Penalty::none), ShapeError);
    }
}

TEST_CASE("regularization never touches model biases") {
    const ModelConfig cfg = ModelConfig::tiny();
    SeededRng rng(4);
    ModelState<float> st = init_params<float>(cfg, rng);
    const ModelState<float> before = st;
    sgd_step(st, st.zeros_like(), 0.1, 1.0, Penalty::l2);
    for (std::size_t i = 0; i < st.size(); ++i) {
        if (st.names()[i].ends_with(".bias")) CHECK(st.tensors()[i] == before.tensors()[i]);
        else CHECK(!(st.tensors()[i] == before.tensors()[i]));
    }
}

TEST_CASE("loss decreases over the first steps on a fixed batch") {
    const ModelConfig cfg = ModelConfig::tiny();
    int passing = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SeededRng rng(seed);
        ModelState<double> st = init_params<double>(cfg, rng);
        TensorD x({4, cfg.frames, cfg.height, cfg.width, cfg.channels});
        for (auto& v : x.data()) v = rng.uniform();
        const std::vector<std::size_t> labels{0, 1, 1, 0};
        const TensorD y = one_hot<double>(labels, 2);
        double prev = std::numeric_limits<double>::infinity();
        bool monotone = true;
        for (int step = 0; step <= 5; ++step) {
            ModelCache<double> cache;
            const auto res = cce_loss(softmax(model_logits(x, st, cfg, &cache)), y);
            monotone = monotone && res.loss <= prev;
            prev = res.loss;
            sgd_step(st, model_backward(res.grad_logits, cache, st, cfg), 1e-3, 0.0, Penalty::none);
        }
        passing += monotone;
    }
    CHECK(passing >= 8);
}

TEST_CASE("train") {
    const ModelConfig cfg = ModelConfig::tiny();
    const auto data = random_examples(cfg, 10, 1);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 4;
    tc.seed = 9;

    SUBCASE("zero epochs returns the initial state") {
        SeededRng rng(2);
        const auto init = init_params<float>(cfg, rng);
        tc.epochs = 0;
        const TrainResult r = train(data, cfg, tc, init);
        CHECK(r.state == init);
        CHECK(r.history.empty());
    }
    SUBCASE("determinism across runs and thread counts") {
        const TrainResult a = train(data, cfg, tc);
        const TrainResult b = train(data, cfg, tc);
        TrainOptions threaded;
        threaded.threads = 3;
        const TrainResult c = train(data, cfg, tc, threaded);
        CHECK(a.state == b.state);
        CHECK(a.state == c.state);
        REQUIRE(a.history.size() == 3);
        for (std::size_t e = 0; e < 3; ++e) {
            CHECK(a.history[e].epoch == e + 1);
            CHECK(a.history[e].loss == c.history[e].loss);
            CHECK(std::isfinite(a.history[e].loss));
            CHECK(a.history[e].lr == tc.lr);
        }
        tc.seed = 10;
        CHECK(!(train(data, cfg, tc).state == a.state));
    }
    SUBCASE("optimal schedule records the decayed rate") {
        tc.schedule = Schedule::optimal;
        tc.alpha = 0.01;
        tc.t0 = 1000;
        tc.penalty = Penalty::l2;
        const TrainResult r = train(data, cfg, tc);
        // Three batches per epoch; the last update of epoch e is step 3e - 1.
        for (std::size_t e = 0; e < 3; ++e) CHECK(r.history[e].lr == 1.0 / (0.01 * (1000.0 + double(3 * e + 2))));
    }
    SUBCASE("early stop from the epoch callback") {
        TrainOptions opt;
        opt.on_epoch = [](const EpochRecord& r) { return r.epoch < 2; };
        CHECK(train(data, cfg, tc, opt).history.size() == 2);
    }
    SUBCASE("non-finite loss aborts with diagnostics") {
        SeededRng rng(2);
        auto init = init_params<float>(cfg, rng);
        init.at("dense.1.bias")[0] = std::numeric_limits<float>::quiet_NaN();
        try {
            train(data, cfg, tc, init);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("epoch 1") != std::string::npos);
            CHECK(msg.find("batch 0") != std::string::npos);
            CHECK(msg.find("lr") != std::string::npos);
        }
    }
    SUBCASE("empty data") {
        CHECK_THROWS_AS(train(std::span<const Example>{}, cfg, tc), DataError);
    }
}

TEST_CASE("history csv") {
    TrainHistory h{{1, 0.5, 0.75, 0.01, 1.5}};
    const std::string csv = history_csv(h);
    CHECK(csv.rfind("epoch,loss,acc,lr,seconds\n", 0) == 0);
    CHECK(csv.find("1,0.5,0.75,0.01") != std::string::npos);
}

TEST_CASE("predictions") {
    const ModelConfig cfg = ModelConfig::tiny();
    const auto data = random_examples(cfg, 5, 2);
    SeededRng rng(3);
    const auto st = init_params<float>(cfg, rng);
    const TensorF p1 = predict_probs(data, st, cfg, 1), p3 = predict_probs(data, st, cfg, 3);
    CHECK(p1 == p3);
    CHECK(p1.shape() == Shape{5, 2});
    const auto labels = predict_labels(data, st, cfg);
    for (std::size_t i = 0; i < 5; ++i) CHECK(labels[i] == (p1[2 * i + 1] > p1[2 * i] ? 1u : 0u));
    CHECK(predict_probs(std::span<const Example>{}, st, cfg).empty());
}
