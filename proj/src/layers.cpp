#include "stflow/layers.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace stflow {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

std::string shapes(const Shape& a, const Shape& b) { return shape_to_string(a) + " vs " + shape_to_string(b); }

struct Pad {
    std::ptrdiff_t before;
    explicit Pad(std::size_t k) : before(static_cast<std::ptrdiff_t>((k - 1) / 2)) {}
};

}  // namespace

template <typename T>
T sigmoid(T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require(x.rank() == 4 && weight.rank() == 4 && bias.rank() == 1, "conv2d expects x (n,h,w,c), weight (kh,kw,cin,cout), bias (cout)");
    require(x.dim(3) == weight.dim(2), "conv2d input channels mismatch: " + shapes(x.shape(), weight.shape()));
    require(bias.dim(0) == weight.dim(3), "conv2d bias mismatch: " + shapes(bias.shape(), weight.shape()));
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
    const std::size_t kh = weight.dim(0), kw = weight.dim(1), co = weight.dim(3);
    const Pad py(kh), px(kw);
    Tensor<T> out({n, h, w, co});
    const T* X = x.data().data();
    const T* W = weight.data().data();
    T* O = out.data().data();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oy = 0; oy < h; ++oy) {
            for (std::size_t ox = 0; ox < w; ++ox) {
                T* o = O + ((b * h + oy) * w + ox) * co;
                for (std::size_t c = 0; c < co; ++c) o[c] = bias[c];
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - py.before;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - px.before;
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        const T* xp = X + ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * ci;
                        const T* wp = W + (ky * kw + kx) * ci * co;
                        for (std::size_t i = 0; i < ci; ++i) {
                            const T xv = xp[i];
                            const T* wr = wp + i * co;
                            for (std::size_t c = 0; c < co; ++c) o[c] += xv * wr[c];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& weight) {
    if (x.empty() || weight.empty()) throw UsageError("conv2d_backward called without forward cache");
    require(grad_out.rank() == 4 && grad_out.dim(0) == x.dim(0) && grad_out.dim(1) == x.dim(1) &&
                grad_out.dim(2) == x.dim(2) && grad_out.dim(3) == weight.dim(3),
            "conv2d_backward grad shape mismatch: " + shapes(grad_out.shape(), x.shape()));
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
    const std::size_t kh = weight.dim(0), kw = weight.dim(1), co = weight.dim(3);
    const Pad py(kh), px(kw);
    Conv2dGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>({co})};
    const T* X = x.data().data();
    const T* W = weight.data().data();
    const T* G = grad_out.data().data();
    T* GX = g.x.data().data();
    T* GW = g.weight.data().data();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oy = 0; oy < h; ++oy) {
            for (std::size_t ox = 0; ox < w; ++ox) {
                const T* go = G + ((b * h + oy) * w + ox) * co;
                for (std::size_t c = 0; c < co; ++c) g.bias[c] += go[c];
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - py.before;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - px.before;
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        const std::size_t xoff = ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * ci;
                        const std::size_t woff = (ky * kw + kx) * ci * co;
                        for (std::size_t i = 0; i < ci; ++i) {
                            const T xv = X[xoff + i];
                            const T* wr = W + woff + i * co;
                            T* gwr = GW + woff + i * co;
                            T acc = T(0);
                            for (std::size_t c = 0; c < co; ++c) {
                                acc += go[c] * wr[c];
                                gwr[c] += xv * go[c];
                            }
                            GX[xoff + i] += acc;
                        }
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require(x.rank() == 5 && weight.rank() == 5 && bias.rank() == 1,
            "conv3d expects x (n,t,h,w,c), weight (kt,kh,kw,cin,cout), bias (cout)");
    require(x.dim(4) == weight.dim(3), "conv3d input channels mismatch: " + shapes(x.shape(), weight.shape()));
    require(bias.dim(0) == weight.dim(4), "conv3d bias mismatch: " + shapes(bias.shape(), weight.shape()));
    const std::size_t n = x.dim(0), t = x.dim(1), h = x.dim(2), w = x.dim(3), ci = x.dim(4);
    const std::size_t kt = weight.dim(0), kh = weight.dim(1), kw = weight.dim(2), co = weight.dim(4);
    const Pad pt(kt), py(kh), px(kw);
    Tensor<T> out({n, t, h, w, co});
    const T* X = x.data().data();
    const T* W = weight.data().data();
    T* O = out.data().data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ot = 0; ot < t; ++ot)
            for (std::size_t oy = 0; oy < h; ++oy)
                for (std::size_t ox = 0; ox < w; ++ox) {
                    T* o = O + (((b * t + ot) * h + oy) * w + ox) * co;
                    for (std::size_t c = 0; c < co; ++c) o[c] = bias[c];
                    for (std::size_t kz = 0; kz < kt; ++kz) {
                        const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot + kz) - pt.before;
                        if (it < 0 || it >= static_cast<std::ptrdiff_t>(t)) continue;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - py.before;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - px.before;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                const T* xp = X + (((b * t + static_cast<std::size_t>(it)) * h + static_cast<std::size_t>(iy)) * w +
                                                   static_cast<std::size_t>(ix)) * ci;
                                const T* wp = W + ((kz * kh + ky) * kw + kx) * ci * co;
                                for (std::size_t i = 0; i < ci; ++i) {
                                    const T xv = xp[i];
                                    const T* wr = wp + i * co;
                                    for (std::size_t c = 0; c < co; ++c) o[c] += xv * wr[c];
                                }
                            }
                        }
                    }
                }
    return out;
}

template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& weight) {
    if (x.empty() || weight.empty()) throw UsageError("conv3d_backward called without forward cache");
    require(grad_out.rank() == 5 && grad_out.dim(0) == x.dim(0) && grad_out.dim(1) == x.dim(1) &&
                grad_out.dim(2) == x.dim(2) && grad_out.dim(3) == x.dim(3) && grad_out.dim(4) == weight.dim(4),
            "conv3d_backward grad shape mismatch: " + shapes(grad_out.shape(), x.shape()));
    const std::size_t n = x.dim(0), t = x.dim(1), h = x.dim(2), w = x.dim(3), ci = x.dim(4);
    const std::size_t kt = weight.dim(0), kh = weight.dim(1), kw = weight.dim(2), co = weight.dim(4);
    const Pad pt(kt), py(kh), px(kw);
    Conv3dGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>({co})};
    const T* X = x.data().data();
    const T* W = weight.data().data();
    const T* G = grad_out.data().data();
    T* GX = g.x.data().data();
    T* GW = g.weight.data().data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ot = 0; ot < t; ++ot)
            for (std::size_t oy = 0; oy < h; ++oy)
                for (std::size_t ox = 0; ox < w; ++ox) {
                    const T* go = G + (((b * t + ot) * h + oy) * w + ox) * co;
                    for (std::size_t c = 0; c < co; ++c) g.bias[c] += go[c];
                    for (std::size_t kz = 0; kz < kt; ++kz) {
                        const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot + kz) - pt.before;
                        if (it < 0 || it >= static_cast<std::ptrdiff_t>(t)) continue;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - py.before;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - px.before;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                const std::size_t xoff = (((b * t + static_cast<std::size_t>(it)) * h + static_cast<std::size_t>(iy)) * w +
                                                          static_cast<std::size_t>(ix)) * ci;
                                const std::size_t woff = ((kz * kh + ky) * kw + kx) * ci * co;
                                for (std::size_t i = 0; i < ci; ++i) {
                                    const T xv = X[xoff + i];
                                    const T* wr = W + woff + i * co;
                                    T* gwr = GW + woff + i * co;
                                    T acc = T(0);
                                    for (std::size_t c = 0; c < co; ++c) {
                                        acc += go[c] * wr[c];
                                        gwr[c] += xv * go[c];
                                    }
                                    GX[xoff + i] += acc;
                                }
                            }
                        }
                    }
                }
    return g;
}

template <typename T>
Tensor<T> maxpool2d_forward(const Tensor<T>& x, PoolCache& cache) {
    require(x.rank() == 4, "maxpool2d expects (n,h,w,c), got " + shape_to_string(x.shape()));
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    require(h >= 2 && w >= 2, "maxpool2d needs spatial dims >= 2, got " + shape_to_string(x.shape()));
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor<T> out({n, oh, ow, c});
    cache.input_shape = x.shape();
    cache.argmax.assign(out.size(), 0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
                for (std::size_t k = 0; k < c; ++k) {
                    std::size_t best = ((b * h + 2 * oy) * w + 2 * ox) * c + k;
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = ((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + k;
                            if (x[idx] > x[best]) best = idx;
                        }
                    const std::size_t o = ((b * oh + oy) * ow + ox) * c + k;
                    out[o] = x[best];
                    cache.argmax[o] = best;
                }
    return out;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_out, const PoolCache& cache) {
    if (cache.input_shape.empty()) throw UsageError("maxpool2d_backward called without forward cache");
    require(grad_out.size() == cache.argmax.size(), "maxpool2d_backward grad size mismatch");
    Tensor<T> gx(cache.input_shape);
    for (std::size_t o = 0; o < grad_out.size(); ++o) gx[cache.argmax[o]] += grad_out[o];
    return gx;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (auto& v : out.data()) v = v > T(0) ? v : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& out) {
    require(grad_out.shape() == out.shape(), "relu_backward shape mismatch: " + shapes(grad_out.shape(), out.shape()));
    Tensor<T> g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(out[i] > T(0))) g[i] = T(0);
    }
    return g;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require(x.rank() == 2 && weight.rank() == 2 && bias.rank() == 1 && x.dim(1) == weight.dim(0) &&
                bias.dim(0) == weight.dim(1),
            "dense shape mismatch: x " + shape_to_string(x.shape()) + ", weight " + shape_to_string(weight.shape()) +
                ", bias " + shape_to_string(bias.shape()));
    Tensor<T> out = matmul(x, weight);
    const std::size_t m = out.dim(0), n = out.dim(1);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[j];
    return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& weight) {
    if (x.empty() || weight.empty()) throw UsageError("dense_backward called without forward cache");
    require(grad_out.rank() == 2 && grad_out.dim(0) == x.dim(0) && grad_out.dim(1) == weight.dim(1),
            "dense_backward grad shape mismatch: " + shapes(grad_out.shape(), weight.shape()));
    DenseGrads<T> g{matmul(grad_out, transpose2d(weight)), matmul(transpose2d(x), grad_out), Tensor<T>({weight.dim(1)})};
    const std::size_t m = grad_out.dim(0), n = grad_out.dim(1);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g.bias[j] += grad_out[i * n + j];
    return g;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    require(logits.rank() == 2, "softmax expects (batch,k), got " + shape_to_string(logits.shape()));
    const std::size_t m = logits.dim(0), k = logits.dim(1);
    Tensor<T> out(logits.shape());
    for (std::size_t i = 0; i < m; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits[i * k + j]);
        T sum = T(0);
        for (std::size_t j = 0; j < k; ++j) {
            out[i * k + j] = std::exp(logits[i * k + j] - mx);
            sum += out[i * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= sum;
    }
    return out;
}

namespace {

template <typename T>
void check_gru(const GruParams<T>& p) {
    require(p.wz.rank() == 2 && p.wz.dim(0) > p.wz.dim(1), "GRU Wz must be (hidden+in, hidden), got " + shape_to_string(p.wz.shape()));
    require(p.wr.shape() == p.wz.shape() && p.wh.shape() == p.wz.shape(), "GRU weight shapes differ");
    const Shape hb{p.wz.dim(1)};
    require(p.bz.shape() == hb && p.br.shape() == hb && p.bh.shape() == hb, "GRU bias shapes must be (hidden)");
}

// [a, b] along axis 1 for two rank-2 tensors with equal row counts.
template <typename T>
Tensor<T> hcat(const Tensor<T>& a, const Tensor<T>& b) {
    return concat_axis<T>({a, b}, 1);
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return dense_forward(x, w, b);
}

}  // namespace

template <typename T>
GruOutput<T> gru_forward(const Tensor<T>& x_seq, const GruParams<T>& params, GruCache<T>* cache) {
    check_gru(params);
    require(x_seq.rank() == 3 && x_seq.dim(2) == params.input(),
            "gru_forward input must be (t,batch," + std::to_string(params.input()) + "), got " + shape_to_string(x_seq.shape()));
    const std::size_t steps = x_seq.dim(0), batch = x_seq.dim(1), hid = params.hidden();
    GruOutput<T> out{Tensor<T>({steps, batch, hid}), Tensor<T>({batch, hid})};
    if (cache) cache->steps.clear();
    Tensor<T> h({batch, hid});
    for (std::size_t s = 0; s < steps; ++s) {
        const Tensor<T> x = x_seq.slice(0, s, s + 1).reshaped({batch, x_seq.dim(2)});
        const Tensor<T> hx = hcat(h, x);
        Tensor<T> z = affine(hx, params.wz, params.bz);
        Tensor<T> r = affine(hx, params.wr, params.br);
        for (auto& v : z.data()) v = sigmoid(v);
        for (auto& v : r.data()) v = sigmoid(v);
        Tensor<T> rh = h;
        for (std::size_t i = 0; i < rh.size(); ++i) rh[i] *= r[i];
        const Tensor<T> rhx = hcat(rh, x);
        Tensor<T> ht = affine(rhx, params.wh, params.bh);
        for (auto& v : ht.data()) v = std::tanh(v);
        Tensor<T> hn({batch, hid});
        for (std::size_t i = 0; i < hn.size(); ++i) {
            hn[i] = (T(1) - z[i]) * h[i] + z[i] * ht[i];
            if (!std::isfinite(hn[i])) throw NumericError("GRU produced a non-finite activation at step " + std::to_string(s));
        }
        std::copy(hn.data().begin(), hn.data().end(), out.h_seq.data().begin() + static_cast<std::ptrdiff_t>(s * batch * hid));
        if (cache) cache->steps.push_back({h, hx, rhx, std::move(z), std::move(r), std::move(ht)});
        h = std::move(hn);
    }
    out.h_final = h;
    return out;
}

template <typename T>
GruGrads<T> gru_backward(const Tensor<T>& grad_h_seq, const GruCache<T>& cache, const GruParams<T>& params) {
    if (cache.steps.empty()) throw UsageError("gru_backward called without forward cache");
    check_gru(params);
    const std::size_t steps = cache.steps.size(), batch = cache.steps[0].h_prev.dim(0), hid = params.hidden(),
                      in = params.input();
    require(grad_h_seq.shape() == Shape({steps, batch, hid}),
            "gru_backward grad shape " + shape_to_string(grad_h_seq.shape()) + " does not match cache");
    GruGrads<T> g{Tensor<T>({steps, batch, in}),
                  {Tensor<T>(params.wz.shape()), Tensor<T>(params.wr.shape()), Tensor<T>(params.wh.shape()),
                   Tensor<T>({hid}), Tensor<T>({hid}), Tensor<T>({hid})}};
    const Tensor<T> wzt = transpose2d(params.wz), wrt = transpose2d(params.wr), wht = transpose2d(params.wh);

    auto add_into = [](Tensor<T>& acc, const Tensor<T>& v) {
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
    };
    auto col_sum_into = [](Tensor<T>& acc, const Tensor<T>& v) {
        const std::size_t m = v.dim(0), n = v.dim(1);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) acc[j] += v[i * n + j];
    };

    Tensor<T> dh_next({batch, hid});
    for (std::size_t s = steps; s-- > 0;) {
        const GruStep<T>& st = cache.steps[s];
        Tensor<T> dh = grad_h_seq.slice(0, s, s + 1).reshaped({batch, hid});
        add_into(dh, dh_next);

        Tensor<T> da_h({batch, hid}), da_z({batch, hid});
        Tensor<T> dh_prev({batch, hid});
        for (std::size_t i = 0; i < dh.size(); ++i) {
            const T z = st.z[i], ht = st.h_tilde[i];
            const T dht = dh[i] * z;
            const T dz = dh[i] * (ht - st.h_prev[i]);
            dh_prev[i] = dh[i] * (T(1) - z);
            da_h[i] = dht * (T(1) - ht * ht);
            da_z[i] = dz * z * (T(1) - z);
        }
        add_into(g.params.wh, matmul(transpose2d(st.rhx), da_h));
        col_sum_into(g.params.bh, da_h);
        const Tensor<T> d_rhx = matmul(da_h, wht);  // (batch, hid + in)

        Tensor<T> da_r({batch, hid});
        Tensor<T> dx({batch, in});
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < hid; ++j) {
                const std::size_t i = b * hid + j;
                const T d_rh = d_rhx[b * (hid + in) + j];
                const T r = st.r[i];
                dh_prev[i] += d_rh * r;
                da_r[i] = d_rh * st.h_prev[i] * r * (T(1) - r);
            }
            for (std::size_t j = 0; j < in; ++j) dx[b * in + j] = d_rhx[b * (hid + in) + hid + j];
        }

        const Tensor<T> hxt = transpose2d(st.hx);
        add_into(g.params.wz, matmul(hxt, da_z));
        add_into(g.params.wr, matmul(hxt, da_r));
        col_sum_into(g.params.bz, da_z);
        col_sum_into(g.params.br, da_r);
        const Tensor<T> d_hx_z = matmul(da_z, wzt);
        const Tensor<T> d_hx_r = matmul(da_r, wrt);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < hid; ++j)
                dh_prev[b * hid + j] += d_hx_z[b * (hid + in) + j] + d_hx_r[b * (hid + in) + j];
            for (std::size_t j = 0; j < in; ++j)
                dx[b * in + j] += d_hx_z[b * (hid + in) + hid + j] + d_hx_r[b * (hid + in) + hid + j];
        }
        std::copy(dx.data().begin(), dx.data().end(), g.x_seq.data().begin() + static_cast<std::ptrdiff_t>(s * batch * in));
        dh_next = std::move(dh_prev);
    }
    return g;
}

#define STFLOW_INSTANTIATE(T)                                                                           \
    template T sigmoid<T>(T);                                                                           \
    template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
    template Conv2dGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
    template Tensor<T> conv3d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
    template Conv3dGrads<T> conv3d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
    template Tensor<T> maxpool2d_forward<T>(const Tensor<T>&, PoolCache&);                              \
    template Tensor<T> maxpool2d_backward<T>(const Tensor<T>&, const PoolCache&);                       \
    template Tensor<T> relu_forward<T>(const Tensor<T>&);                                               \
    template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> dense_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
    template DenseGrads<T> dense_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
    template Tensor<T> softmax<T>(const Tensor<T>&);                                                    \
    template GruOutput<T> gru_forward<T>(const Tensor<T>&, const GruParams<T>&, GruCache<T>*);          \
    template GruGrads<T> gru_backward<T>(const Tensor<T>&, const GruCache<T>&, const GruParams<T>&);

STFLOW_INSTANTIATE(float)
STFLOW_INSTANTIATE(double)

#undef STFLOW_INSTANTIATE

}  // namespace stflow
