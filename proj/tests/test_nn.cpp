#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"

#include "stflow/gradcheck.hpp"
#include "stflow/layers.hpp"
#include "stflow/model.hpp"
#include "stflow/rng.hpp"
#include "stflow/training.hpp"

using namespace stflow;

namespace {

constexpr double kEps = 1e-6;
constexpr double kTol = 1e-4;
constexpr int kInstances = 20;

TensorD randn(Shape s, SeededRng& rng, double scale = 1.0) {
    TensorD t(std::move(s));
    for (auto& v : t.data()) v = scale * rng.normal();
    return t;
}

double dot(const TensorD& a, const TensorD& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::size_t pick(SeededRng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Naive cross-correlation oracles with explicit zero padding.
TensorD conv2d_naive(const TensorD& x, const TensorD& w, const TensorD& b) {
    const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3);
    const std::size_t kh = w.dim(0), kw = w.dim(1), co = w.dim(3);
    const long ph = long(kh - 1) / 2, pw = long(kw - 1) / 2;
    TensorD out({n, h, wd, co});
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < wd; ++xx)
                for (std::size_t o = 0; o < co; ++o) {
                    double s = b[o];
                    for (std::size_t i = 0; i < kh; ++i)
                        for (std::size_t j = 0; j < kw; ++j)
                            for (std::size_t c = 0; c < ci; ++c) {
                                const long sy = long(y) + long(i) - ph, sx = long(xx) + long(j) - pw;
                                if (sy < 0 || sx < 0 || sy >= long(h) || sx >= long(wd)) continue;
                                s += x.at({in, std::size_t(sy), std::size_t(sx), c}) * w.at({i, j, c, o});
                            }
                    out.at({in, y, xx, o}) = s;
                }
    return out;
}

TensorD conv3d_naive(const TensorD& x, const TensorD& w, const TensorD& b) {
    const std::size_t n = x.dim(0), t = x.dim(1), h = x.dim(2), wd = x.dim(3), ci = x.dim(4);
    const std::size_t kt = w.dim(0), kh = w.dim(1), kw = w.dim(2), co = w.dim(4);
    const long pt = long(kt - 1) / 2, ph = long(kh - 1) / 2, pw = long(kw - 1) / 2;
    TensorD out({n, t, h, wd, co});
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t tt = 0; tt < t; ++tt)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < wd; ++xx)
                    for (std::size_t o = 0; o < co; ++o) {
                        double s = b[o];
                        for (std::size_t a = 0; a < kt; ++a)
                            for (std::size_t i = 0; i < kh; ++i)
                                for (std::size_t j = 0; j < kw; ++j)
                                    for (std::size_t c = 0; c < ci; ++c) {
                                        const long st = long(tt) + long(a) - pt, sy = long(y) + long(i) - ph,
                                                   sx = long(xx) + long(j) - pw;
                                        if (st < 0 || sy < 0 || sx < 0 || st >= long(t) || sy >= long(h) || sx >= long(wd)) continue;
                                        s += x.at({in, std::size_t(st), std::size_t(sy), std::size_t(sx), c}) * w.at({a, i, j, c, o});
                                    }
                        out.at({in, tt, y, xx, o}) = s;
                    }
    return out;
}

void check_close(const TensorD& a, const TensorD& b, double tol) {
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(b[i])));
}

GruParams<double> random_gru(std::size_t in, std::size_t hid, SeededRng& rng, double scale = 0.5) {
    return {randn({hid + in, hid}, rng, scale), randn({hid + in, hid}, rng, scale), randn({hid + in, hid}, rng, scale),
            randn({hid}, rng, scale),           randn({hid}, rng, scale),           randn({hid}, rng, scale)};
}

double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

// ---------------------------------------------------------------- conv2d

TEST_CASE("conv2d forward") {
    SeededRng rng(1);
    SUBCASE("1x1 identity kernel") {
        const TensorD x = randn({2, 4, 5, 1}, rng);
        const TensorD y = conv2d_forward(x, TensorD({1, 1, 1, 1}, 1.0), TensorD({1}, 0.25));
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i] + 0.25);
    }
    SUBCASE("impulse response") {
        TensorD x({1, 5, 5, 1});
        x.at({0, 2, 2, 0}) = 1.0;
        const TensorD w = randn({3, 3, 1, 1}, rng);
        const TensorD y = conv2d_forward(x, w, TensorD({1}));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) CHECK(y.at({0, 3 - i, 3 - j, 0}) == w.at({i, j, 0, 0}));
    }
    SUBCASE("naive oracle") {
        for (int inst = 0; inst < 5; ++inst) {
            const std::size_t k = inst % 2 ? 3 : 5;
            const TensorD x = randn({2, pick(rng, 3, 7), pick(rng, 3, 7), pick(rng, 1, 3)}, rng);
            const TensorD w = randn({k, k, x.dim(3), pick(rng, 1, 4)}, rng);
            const TensorD b = randn({w.dim(3)}, rng);
            check_close(conv2d_forward(x, w, b), conv2d_naive(x, w, b), 1e-10);
        }
    }
    SUBCASE("shape errors") {
        CHECK_THROWS_AS(conv2d_forward(TensorD({1, 4, 4, 2}), TensorD({3, 3, 3, 1}), TensorD({1})), ShapeError);
        CHECK_THROWS_AS(conv2d_forward(TensorD({1, 4, 4, 3}), TensorD({3, 3, 3, 2}), TensorD({1})), ShapeError);
    }
}

TEST_CASE("conv2d backward") {
    SeededRng rng(2);
    SUBCASE("zero upstream gradient") {
        const TensorD x = randn({1, 4, 4, 2}, rng), w = randn({3, 3, 2, 3}, rng);
        const auto g = conv2d_backward(TensorD({1, 4, 4, 3}), x, w);
        CHECK(g.x == TensorD(x.shape()));
        CHECK(g.weight == TensorD(w.shape()));
        CHECK(g.bias == TensorD({3}));
    }
    SUBCASE("finite differences") {
        for (int inst = 0; inst < kInstances; ++inst) {
            const std::size_t k = inst % 3 == 0 ? 1 : 3;
            const TensorD x = randn({pick(rng, 1, 2), pick(rng, 2, 5), pick(rng, 2, 5), pick(rng, 1, 3)}, rng);
            const TensorD w = randn({k, k, x.dim(3), pick(rng, 1, 3)}, rng), b = randn({w.dim(3)}, rng);
            const TensorD r = randn({x.dim(0), x.dim(1), x.dim(2), w.dim(3)}, rng);
            const auto g = conv2d_backward(r, x, w);
            CHECK(max_relative_error(g.x, finite_difference_gradient([&](const TensorD& v) { return dot(conv2d_forward(v, w, b), r); }, x, kEps)) < kTol);
            CHECK(max_relative_error(g.weight, finite_difference_gradient([&](const TensorD& v) { return dot(conv2d_forward(x, v, b), r); }, w, kEps)) < kTol);
            CHECK(max_relative_error(g.bias, finite_difference_gradient([&](const TensorD& v) { return dot(conv2d_forward(x, w, v), r); }, b, kEps)) < kTol);
            // Bias gradient is the channel-wise sum of the upstream gradient.
            for (std::size_t o = 0; o < w.dim(3); ++o) {
                double s = 0;
                for (std::size_t i = o; i < r.size(); i += w.dim(3)) s += r[i];
                CHECK(g.bias[o] == doctest::Approx(s).epsilon(1e-12));
            }
        }
    }
}

// ---------------------------------------------------------------- conv3d

TEST_CASE("conv3d forward") {
    SeededRng rng(3);
    SUBCASE("1x1x1 identity passthrough") {
        const TensorD x = randn({1, 3, 4, 4, 2}, rng);
        TensorD w({1, 1, 1, 2, 2});
        w.at({0, 0, 0, 0, 0}) = w.at({0, 0, 0, 1, 1}) = 1.0;
        CHECK(conv3d_forward(x, w, TensorD({2})) == x);
    }
    SUBCASE("temporal impulse") {
        TensorD x({1, 5, 1, 1, 1});
        x.at({0, 2, 0, 0, 0}) = 1.0;
        const TensorD w = randn({3, 1, 1, 1, 1}, rng);
        const TensorD y = conv3d_forward(x, w, TensorD({1}));
        for (std::size_t a = 0; a < 3; ++a) CHECK(y.at({0, 3 - a, 0, 0, 0}) == w[a]);
        CHECK(y[0] == 0.0);
        CHECK(y[4] == 0.0);
    }
    SUBCASE("naive oracle") {
        for (int inst = 0; inst < 5; ++inst) {
            const TensorD x = randn({pick(rng, 1, 2), pick(rng, 2, 5), pick(rng, 2, 5), pick(rng, 2, 5), pick(rng, 1, 3)}, rng);
            const TensorD w = randn({3, 3, 3, x.dim(4), pick(rng, 1, 3)}, rng), b = randn({w.dim(4)}, rng);
            check_close(conv3d_forward(x, w, b), conv3d_naive(x, w, b), 1e-10);
        }
    }
}

TEST_CASE("conv3d backward finite differences") {
    SeededRng rng(4);
    for (int inst = 0; inst < kInstances; ++inst) {
        const TensorD x = randn({1, pick(rng, 1, 4), pick(rng, 2, 4), pick(rng, 2, 4), pick(rng, 1, 2)}, rng);
        const std::size_t kt = inst % 4 == 0 ? 1 : 3;
        const TensorD w = randn({kt, 3, 3, x.dim(4), pick(rng, 1, 2)}, rng), b = randn({w.dim(4)}, rng);
        Shape os = x.shape();
        os[4] = w.dim(4);
        const TensorD r = randn(os, rng);
        const auto g = conv3d_backward(r, x, w);
        CHECK(max_relative_error(g.x, finite_difference_gradient([&](const TensorD& v) { return dot(conv3d_forward(v, w, b), r); }, x, kEps)) < kTol);
        CHECK(max_relative_error(g.weight, finite_difference_gradient([&](const TensorD& v) { return dot(conv3d_forward(x, v, b), r); }, w, kEps)) < kTol);
        CHECK(max_relative_error(g.bias, finite_difference_gradient([&](const TensorD& v) { return dot(conv3d_forward(x, w, v), r); }, b, kEps)) < kTol);
    }
}

// ---------------------------------------------------------------- maxpool

TEST_CASE("maxpool") {
    SUBCASE("constant input routes to the first element") {
        const TensorD x({1, 4, 4, 1}, 2.0);
        PoolCache cache;
        const TensorD y = maxpool2d_forward(x, cache);
        CHECK(y == TensorD({1, 2, 2, 1}, 2.0));
        const TensorD g = maxpool2d_backward(TensorD({1, 2, 2, 1}, 1.0), cache);
        for (std::size_t yy = 0; yy < 4; ++yy)
            for (std::size_t xx = 0; xx < 4; ++xx)
                CHECK(g.at({0, yy, xx, 0}) == ((yy % 2 == 0 && xx % 2 == 0) ? 1.0 : 0.0));
    }
    SUBCASE("strictly increasing input picks bottom-right") {
        TensorD x({1, 4, 6, 2});
        std::iota(x.data().begin(), x.data().end(), 0.0);
        PoolCache cache;
        const TensorD y = maxpool2d_forward(x, cache);
        REQUIRE(y.shape() == Shape{1, 2, 3, 2});
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                for (std::size_t c = 0; c < 2; ++c) CHECK(y.at({0, i, j, c}) == x.at({0, 2 * i + 1, 2 * j + 1, c}));
    }
    SUBCASE("odd sizes drop the trailing row and column") {
        PoolCache cache;
        CHECK(maxpool2d_forward(TensorD({2, 5, 3, 1}), cache).shape() == Shape{2, 2, 1, 1});
    }
    SUBCASE("finite differences at non-tied points") {
        SeededRng rng(5);
        for (int inst = 0; inst < kInstances; ++inst) {
            const TensorD x = randn({pick(rng, 1, 2), 2 * pick(rng, 1, 3), 2 * pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
            PoolCache cache;
            const TensorD y = maxpool2d_forward(x, cache);
            const TensorD r = randn(y.shape(), rng);
            const TensorD g = maxpool2d_backward(r, cache);
            const auto f = [&](const TensorD& v) {
                PoolCache c;
                return dot(maxpool2d_forward(v, c), r);
            };
            CHECK(max_relative_error(g, finite_difference_gradient(f, x, kEps)) < kTol);
        }
    }
    SUBCASE("backward without a cache") {
        CHECK_THROWS_AS(maxpool2d_backward(TensorD({1, 1, 1, 1}), PoolCache{}), UsageError);
    }
}

// ---------------------------------------------------------------- dense, relu, softmax

TEST_CASE("dense") {
    SeededRng rng(6);
    const TensorD x = randn({3, 4}, rng);
    CHECK(dense_forward(x, TensorD::identity(4), TensorD({4})) == x);
    for (int inst = 0; inst < kInstances; ++inst) {
        const TensorD xi = randn({pick(rng, 1, 4), pick(rng, 1, 6)}, rng);
        const TensorD w = randn({xi.dim(1), pick(rng, 1, 5)}, rng), b = randn({w.dim(1)}, rng);
        const TensorD r = randn({xi.dim(0), w.dim(1)}, rng);
        const auto g = dense_backward(r, xi, w);
        CHECK(max_relative_error(g.x, finite_difference_gradient([&](const TensorD& v) { return dot(dense_forward(v, w, b), r); }, xi, kEps)) < kTol);
        CHECK(max_relative_error(g.weight, finite_difference_gradient([&](const TensorD& v) { return dot(dense_forward(xi, v, b), r); }, w, kEps)) < kTol);
        for (std::size_t o = 0; o < w.dim(1); ++o) {
            double s = 0;
            for (std::size_t i = 0; i < xi.dim(0); ++i) s += r.at({i, o});
            CHECK(g.bias[o] == doctest::Approx(s).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(dense_forward(x, TensorD({5, 2}), TensorD({2})), ShapeError);
}

TEST_CASE("relu") {
    const TensorD x({4}, {-1.0, 0.0, 2.0, -3.0});
    const TensorD y = relu_forward(x);
    CHECK(y == TensorD({4}, {0.0, 0.0, 2.0, 0.0}));
    CHECK(relu_backward(TensorD({4}, 1.0), y) == TensorD({4}, {0.0, 0.0, 1.0, 0.0}));
}

TEST_CASE("softmax") {
    CHECK(softmax(TensorD({1, 2}, {0.3, 0.3})) == TensorD({1, 2}, {0.5, 0.5}));
    const TensorD big = softmax(TensorD({1, 2}, {1000.0, 0.0}));
    CHECK(big.all_finite());
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] < 1e-300);

    SeededRng rng(7);
    for (int inst = 0; inst < 10; ++inst) {
        const TensorD l = randn({3, 5}, rng, 4.0);
        TensorD shifted = l;
        const double c = rng.uniform(-50, 50);
        for (auto& v : shifted.data()) v += c;
        const TensorD p = softmax(l), q = softmax(shifted);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(std::abs(p[i] - q[i]) < 1e-12);
            CHECK(p[i] > 0.0);
            CHECK(p[i] < 1.0);
        }
        for (std::size_t r = 0; r < 3; ++r) CHECK(std::abs(p[5 * r] + p[5 * r + 1] + p[5 * r + 2] + p[5 * r + 3] + p[5 * r + 4] - 1.0) < 1e-12);
    }
}

TEST_CASE("fused softmax cross-entropy gradient") {
    SeededRng rng(8);
    for (int inst = 0; inst < kInstances; ++inst) {
        const std::size_t batch = pick(rng, 1, 4), k = pick(rng, 2, 5);
        const TensorD logits = randn({batch, k}, rng, 2.0);
        std::vector<std::size_t> labels(batch);
        for (auto& l : labels) l = rng.below(k);
        const TensorD y = one_hot<double>(labels, k);
        const auto res = cce_loss(softmax(logits), y);
        const TensorD num = finite_difference_gradient([&](const TensorD& v) { return cce_loss(softmax(v), y).loss; }, logits, kEps);
        CHECK(max_relative_error(res.grad_logits, num) < kTol);
        for (std::size_t i = 0; i < num.size(); ++i) CHECK(std::abs(res.grad_logits[i] - num[i]) < 1e-6);
    }
}

TEST_CASE("cce through softmax and dense") {
    SeededRng rng(9);
    for (int inst = 0; inst < kInstances; ++inst) {
        const TensorD x = randn({3, 4}, rng), w = randn({4, 3}, rng), b = randn({3}, rng);
        const std::vector<std::size_t> labels{rng.below(3), rng.below(3), rng.below(3)};
        const TensorD y = one_hot<double>(labels, 3);
        const auto res = cce_loss(softmax(dense_forward(x, w, b)), y);
        const auto g = dense_backward(res.grad_logits, x, w);
        const TensorD num = finite_difference_gradient([&](const TensorD& v) { return cce_loss(softmax(dense_forward(x, v, b)), y).loss; }, w, kEps);
        CHECK(max_relative_error(g.weight, num) < kTol);
    }
}

// ---------------------------------------------------------------- GRU

TEST_CASE("gru forward limits") {
    SeededRng rng(10);
    const std::size_t in = 3, hid = 4, t = 5, batch = 2;
    const TensorD x = randn({t, batch, in}, rng);
    SUBCASE("closed update gate keeps the zero state") {
        GruParams<double> p = random_gru(in, hid, rng);
        p.bz = TensorD({hid}, -60.0);
        const auto out = gru_forward(x, p);
        for (double v : out.h_seq.data()) CHECK(std::abs(v) < 1e-20);
    }
    SUBCASE("open update gate takes the candidate") {
        GruParams<double> p = random_gru(in, hid, rng);
        p.bz = TensorD({hid}, 60.0);
        GruCache<double> cache;
        const auto out = gru_forward(x, p, &cache);
        for (std::size_t s = 0; s < t; ++s)
            for (std::size_t i = 0; i < batch * hid; ++i) CHECK(std::abs(out.h_seq[s * batch * hid + i] - cache.steps[s].h_tilde[i]) < 1e-12);
    }
    SUBCASE("gate ranges") {
        GruParams<double> p = random_gru(in, hid, rng, 1.0);
        GruCache<double> cache;
        gru_forward(randn({t, batch, in}, rng, 2.0), p, &cache);
        for (const auto& st : cache.steps) {
            for (double v : st.z.data()) CHECK((v > 0.0 && v < 1.0));
            for (double v : st.r.data()) CHECK((v > 0.0 && v < 1.0));
            for (double v : st.h_tilde.data()) CHECK((v > -1.0 && v < 1.0));
        }
        // Far into saturation the bounds are reached in floating point but
        // never crossed, and the state stays finite.
        p = random_gru(in, hid, rng, 30.0);
        const auto out = gru_forward(randn({t, batch, in}, rng, 100.0), p, &cache);
        CHECK(out.h_seq.all_finite());
        for (const auto& st : cache.steps) {
            for (double v : st.z.data()) CHECK((v >= 0.0 && v <= 1.0));
            for (double v : st.h_tilde.data()) CHECK((v >= -1.0 && v <= 1.0));
        }
    }
    SUBCASE("non-finite activation names the step") {
        TensorD bad = x;
        bad[2 * batch * in] = std::nan("");
        try {
            gru_forward(bad, random_gru(in, hid, rng));
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("step 2") != std::string::npos);
        }
    }
}

TEST_CASE("gru forward matches the per-equation oracle") {
    SeededRng rng(11);
    const std::size_t in = 2, hid = 3, t = 3, batch = 2;
    const GruParams<double> p = random_gru(in, hid, rng, 0.8);
    const TensorD x = randn({t, batch, in}, rng);
    const auto out = gru_forward(x, p);
    std::vector<std::vector<double>> h(batch, std::vector<double>(hid, 0.0));
    for (std::size_t s = 0; s < t; ++s) {
        for (std::size_t b = 0; b < batch; ++b) {
            // [h_prev, x] times each weight; row index runs over the concatenation.
            const auto input_at = [&](std::size_t row, const std::vector<double>& hv) {
                return row < hid ? hv[row] : x.at({s, b, row - hid});
            };
            std::vector<double> z(hid), r(hid), rh(hid), ht(hid), hn(hid);
            for (std::size_t j = 0; j < hid; ++j) {
                double az = p.bz[j], ar = p.br[j];
                for (std::size_t row = 0; row < hid + in; ++row) {
                    az += input_at(row, h[b]) * p.wz.at({row, j});
                    ar += input_at(row, h[b]) * p.wr.at({row, j});
                }
                z[j] = sigm(az);
                r[j] = sigm(ar);
            }
            for (std::size_t j = 0; j < hid; ++j) rh[j] = r[j] * h[b][j];
            for (std::size_t j = 0; j < hid; ++j) {
                double a = p.bh[j];
                for (std::size_t row = 0; row < hid + in; ++row) a += input_at(row, rh) * p.wh.at({row, j});
                ht[j] = std::tanh(a);
                hn[j] = (1 - z[j]) * h[b][j] + z[j] * ht[j];
            }
            h[b] = hn;
            for (std::size_t j = 0; j < hid; ++j) CHECK(out.h_seq.at({s, b, j}) == doctest::Approx(hn[j]).epsilon(1e-12));
        }
    }
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < hid; ++j) CHECK(out.h_final.at({b, j}) == out.h_seq.at({t - 1, b, j}));
}

TEST_CASE("gru backward") {
    SeededRng rng(12);
    SUBCASE("zero upstream gradient") {
        const GruParams<double> p = random_gru(3, 4, rng);
        GruCache<double> cache;
        const auto out = gru_forward(randn({3, 2, 3}, rng), p, &cache);
        const auto g = gru_backward(TensorD(out.h_seq.shape()), cache, p);
        for (const TensorD* t : {&g.params.wz, &g.params.wr, &g.params.wh, &g.params.bz, &g.params.br, &g.params.bh})
            for (double v : t->data()) CHECK(v == 0.0);
    }
    SUBCASE("missing cache") {
        const GruParams<double> p = random_gru(3, 4, rng);
        CHECK_THROWS_AS(gru_backward(TensorD({1, 1, 4}), GruCache<double>{}, p), UsageError);
    }
    SUBCASE("finite differences on every parameter") {
        for (int inst = 0; inst < kInstances; ++inst) {
            const std::size_t t = inst == 0 ? 4 : pick(rng, 1, 4), hid = inst == 0 ? 8 : pick(rng, 1, 6);
            const std::size_t in = pick(rng, 1, 4), batch = pick(rng, 1, 3);
            GruParams<double> p = random_gru(in, hid, rng);
            const TensorD x = randn({t, batch, in}, rng);
            const TensorD r = randn({t, batch, hid}, rng);
            GruCache<double> cache;
            gru_forward(x, p, &cache);
            const auto g = gru_backward(r, cache, p);
            const auto loss_with = [&](auto mutate) {
                return [&, mutate](const TensorD& v) {
                    GruParams<double> q = p;
                    mutate(q, v);
                    return dot(gru_forward(x, q).h_seq, r);
                };
            };
            CHECK(max_relative_error(g.x_seq, finite_difference_gradient([&](const TensorD& v) { return dot(gru_forward(v, p).h_seq, r); }, x, kEps)) < kTol);
            CHECK(max_relative_error(g.params.wz, finite_difference_gradient(loss_with([](auto& q, const TensorD& v) { q.wz = v; }), p.wz, kEps)) < kTol);
            CHECK(max_relative_error(g.params.wr, finite_difference_gradient(loss_with([](auto& q, const TensorD& v) { q.wr = v; }), p.wr, kEps)) < kTol);
            CHECK(max_relative_error(g.params.wh, finite_difference_gradient(loss_with([](auto& q, const TensorD& v) { q.wh = v; }), p.wh, kEps)) < kTol);
            CHECK(max_relative_error(g.params.bz, finite_difference_gradient(loss_with([](auto& q, const TensorD& v) { q.bz = v; }), p.bz, kEps)) < kTol);
            CHECK(max_relative_error(g.params.br, finite_difference_gradient(loss_with([](auto& q, const TensorD& v) { q.br = v; }), p.br, kEps)) < kTol);
            CHECK(max_relative_error(g.params.bh, finite_difference_gradient(loss_with([](auto& q, const TensorD& v) { q.bh = v; }), p.bh, kEps)) < kTol);
        }
    }
    SUBCASE("single step matches hand-derived formulas") {
        // From h0 = 0: z = s(x Wz_x + bz), h~ = tanh(x W_x + bh), h = z h~, and
        // the reset gate has no influence.
        const std::size_t in = 3, hid = 2, batch = 2;
        const GruParams<double> p = random_gru(in, hid, rng);
        const TensorD x = randn({1, batch, in}, rng), g = randn({1, batch, hid}, rng);
        GruCache<double> cache;
        gru_forward(x, p, &cache);
        const auto grads = gru_backward(g, cache, p);
        TensorD dbz({hid}), dbh({hid}), dwz({hid + in, hid}), dwh({hid + in, hid}), dx({1, batch, in});
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < hid; ++j) {
                double az = p.bz[j], ah = p.bh[j];
                for (std::size_t k = 0; k < in; ++k) {
                    az += x.at({0, b, k}) * p.wz.at({hid + k, j});
                    ah += x.at({0, b, k}) * p.wh.at({hid + k, j});
                }
                const double z = sigm(az), ht = std::tanh(ah), gj = g.at({0, b, j});
                const double daz = gj * ht * z * (1 - z), dah = gj * z * (1 - ht * ht);
                dbz[j] += daz;
                dbh[j] += dah;
                for (std::size_t k = 0; k < in; ++k) {
                    dwz.at({hid + k, j}) += x.at({0, b, k}) * daz;
                    dwh.at({hid + k, j}) += x.at({0, b, k}) * dah;
                    dx.at({0, b, k}) += daz * p.wz.at({hid + k, j}) + dah * p.wh.at({hid + k, j});
                }
            }
        }
        check_close(grads.params.bz, dbz, 1e-12);
        check_close(grads.params.bh, dbh, 1e-12);
        check_close(grads.params.wz, dwz, 1e-12);
        check_close(grads.params.wh, dwh, 1e-12);
        check_close(grads.x_seq, dx, 1e-12);
        for (double v : grads.params.br.data()) CHECK(v == 0.0);
        for (double v : grads.params.wr.data()) CHECK(v == 0.0);
    }
}

// ---------------------------------------------------------------- model

TEST_CASE("model configuration") {
    CHECK(ModelConfig::paper().conv2d_filters == std::vector<std::size_t>{20, 30, 40, 50, 32});
    CHECK(ModelConfig::paper().feature_size() == std::pair<std::size_t, std::size_t>{4, 4});
    CHECK(ModelConfig::paper().gru_input_size() == 50);
    ModelConfig flat = ModelConfig::paper();
    flat.bridge = Bridge::flatten;
    CHECK(flat.gru_input_size() == 4 * 4 * 50);
    ModelConfig bad = ModelConfig::tiny();
    bad.num_classes = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(parse_bridge(bridge_name(Bridge::flatten)) == Bridge::flatten);
    CHECK_THROWS_AS(parse_bridge("mean"), ConfigError);

    const auto specs = param_specs(ModelConfig::tiny());
    std::vector<std::string> names;
    for (const auto& s : specs) names.push_back(s.name);
    CHECK(names.front() == "conv2d.0.weight");
    CHECK(std::find(names.begin(), names.end(), "gru.0.Wz") != names.end());
    CHECK(names.back() == "dense.1.bias");
}

TEST_CASE("model state checks name the offending parameter") {
    SeededRng rng(13);
    const ModelConfig cfg = ModelConfig::tiny();
    ModelState<double> st = init_params<double>(cfg, rng);
    CHECK_NOTHROW(check_state(st, cfg));
    st.at("gru.0.Wr") = TensorD({2, 2});
    try {
        check_state(st, cfg);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("gru.0.Wr") != std::string::npos);
    }
    ModelState<double> partial;
    partial.add("conv2d.0.weight", TensorD({3, 3, 3, 2}));
    partial.add("extra", TensorD({1}));
    try {
        check_state(partial, cfg);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dense.1.bias") != std::string::npos);
        CHECK(msg.find("extra") != std::string::npos);
    }
}

TEST_CASE("init_params") {
    const ModelConfig cfg = ModelConfig::tiny();
    SeededRng a(5), b(5), c(6);
    const auto sa = init_params<float>(cfg, a), sb = init_params<float>(cfg, b), sc = init_params<float>(cfg, c);
    CHECK(sa == sb);
    CHECK(!(sa == sc));
    CHECK(sa.at("gru.0.z.bias") == TensorF({cfg.gru_hidden}, -1.0f));
    CHECK(sa.at("gru.0.r.bias") == TensorF({cfg.gru_hidden}));
    CHECK(sa.at("dense.0.bias") == TensorF({cfg.dense_units}));

    // Moment check on the full-size profile.
    SeededRng r(7);
    const auto full = init_params<double>(ModelConfig::paper(), r);
    int checked = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        const Shape& s = full.tensors()[i].shape();
        if (s.size() < 2) continue;
        const std::size_t receptive = shape_numel(Shape(s.begin(), s.end() - 2));
        const double fan_in = double(receptive * s[s.size() - 2]), fan_out = double(receptive * s.back());
        if (fan_in < 100 || fan_out < 100) continue;
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        double mean = 0, sq = 0;
        for (double v : full.tensors()[i].data()) {
            CHECK(std::abs(v) <= bound);
            mean += v;
            sq += v * v;
        }
        const double n = double(full.tensors()[i].size());
        const double sd = std::sqrt(sq / n - (mean / n) * (mean / n));
        CHECK(std::abs(sd / (bound / std::sqrt(3.0)) - 1.0) < 0.2);
        ++checked;
    }
    CHECK(checked >= 5);
}

TEST_CASE("model forward invariants") {
    const ModelConfig cfg = ModelConfig::tiny();
    SeededRng rng(14);
    const auto st = init_params<double>(cfg, rng);
    TensorD clip({1, cfg.frames, cfg.height, cfg.width, cfg.channels});
    for (auto& v : clip.data()) v = rng.uniform();
    TensorD other = clip;
    for (auto& v : other.data()) v = rng.uniform();

    const TensorD batch = concat_axis<double>({clip, other, clip}, 0);
    const TensorD p = model_forward(batch, st, cfg);
    REQUIRE(p.shape() == Shape{3, 2});
    for (std::size_t r = 0; r < 3; ++r) CHECK(std::abs(p[2 * r] + p[2 * r + 1] - 1.0) < 1e-6);
    CHECK(p[0] == p[4]);
    CHECK(p[1] == p[5]);
    CHECK(model_forward(batch, st, cfg) == p);

    const TensorD perm = model_forward(concat_axis<double>({other, clip, clip}, 0), st, cfg);
    CHECK(perm[0] == p[2]);
    CHECK(perm[2] == p[0]);

    CHECK_THROWS_AS(model_forward(TensorD({1, cfg.frames, 9, cfg.width, cfg.channels}), st, cfg), ShapeError);
    CHECK_THROWS_AS(model_backward(TensorD({1, 2}), ModelCache<double>{}, st, cfg), UsageError);

    ModelConfig flat = cfg;
    flat.bridge = Bridge::flatten;
    SeededRng rng2(3);
    CHECK(model_forward(clip, init_params<double>(flat, rng2), flat).shape() == Shape{1, 2});
}

namespace {

template <typename T>
double model_fd_error(const ModelConfig& cfg, std::uint64_t seed, double eps, double abs_floor) {
    SeededRng rng(seed);
    ModelState<T> st = init_params<T>(cfg, rng);
    // Non-zero biases so every code path carries signal.
    for (std::size_t i = 0; i < st.size(); ++i)
        if (st.names()[i].ends_with(".bias"))
            for (auto& v : st.tensors()[i].data()) v += static_cast<T>(0.1 * rng.normal());
    const std::size_t batch = 2;
    Tensor<T> input({batch, cfg.frames, cfg.height, cfg.width, cfg.channels});
    for (auto& v : input.data()) v = static_cast<T>(rng.uniform());
    const std::vector<std::size_t> labels{0, 1};
    const Tensor<T> y = one_hot<T>(labels, cfg.num_classes);

    ModelCache<T> cache;
    const auto res = cce_loss(softmax(model_logits(input, st, cfg, &cache)), y);
    const ModelState<T> grads = model_backward(res.grad_logits, cache, st, cfg);

    // Random 1% subset of all parameter elements (at least 8).
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t p = 0; p < st.size(); ++p)
        for (std::size_t i = 0; i < st.tensors()[p].size(); ++i) all.emplace_back(p, i);
    const std::size_t n = std::max<std::size_t>(8, all.size() / 100);
    for (std::size_t i = 0; i < n; ++i) std::swap(all[i], all[i + rng.below(all.size() - i)]);

    Tensor<T> analytic({n}), numeric({n});
    for (std::size_t k = 0; k < n; ++k) {
        const auto [p, i] = all[k];
        ModelState<T> probe = st;
        const T orig = probe.tensors()[p][i];
        probe.tensors()[p][i] = orig + static_cast<T>(eps);
        const double up = cce_loss(model_forward(input, probe, cfg), y).loss;
        probe.tensors()[p][i] = orig - static_cast<T>(eps);
        const double down = cce_loss(model_forward(input, probe, cfg), y).loss;
        const T actual_step = (orig + static_cast<T>(eps)) - (orig - static_cast<T>(eps));
        analytic[k] = grads.tensors()[p][i];
        numeric[k] = static_cast<T>((up - down) / double(actual_step));
    }
    return max_relative_error(analytic, numeric, abs_floor);
}

}  // namespace

TEST_CASE("tiny model end-to-end gradient, 64-bit") {
    for (std::uint64_t seed : {1u, 2u, 3u}) CHECK(model_fd_error<double>(ModelConfig::tiny(), seed, 1e-6, 1e-8) < 1e-4);
    ModelConfig flat = ModelConfig::tiny();
    flat.bridge = Bridge::flatten;
    flat.gru_layers = 2;
    CHECK(model_fd_error<double>(flat, 4, 1e-6, 1e-8) < 1e-4);
}

TEST_CASE("tiny model end-to-end gradient, 32-bit") {
    CHECK(model_fd_error<float>(ModelConfig::tiny(), 1, 1e-2, 1e-4) < 1e-3);
}
