#include "stflow/flow.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace stflow {

void FlowParams::validate() const {
    if (pyramid_levels < 1) throw ConfigError("pyramid_levels must be >= 1");
    if (!(pyramid_scale > 0.0 && pyramid_scale < 1.0)) throw ConfigError("pyramid_scale must lie in (0,1)");
    if (!(window_sigma > 0.0)) throw ConfigError("window_sigma must be positive");
    if (expansion_window < 3 || expansion_window % 2 == 0) throw ConfigError("expansion_window must be odd and >= 3");
    if (averaging_window < 3 || averaging_window % 2 == 0) throw ConfigError("averaging_window must be odd and >= 3");
    if (iterations_per_level < 1) throw ConfigError("iterations_per_level must be >= 1");
}

int FlowParams::max_pyramid_levels(std::size_t h, std::size_t w) const {
    int levels = 0;
    double scale = 1.0;
    for (int level = 0; level < pyramid_levels; ++level, scale *= pyramid_scale) {
        const auto lh = std::lround(double(h) * scale), lw = std::lround(double(w) * scale);
        if (lh < expansion_window || lw < expansion_window) break;
        levels = level + 1;
    }
    return levels;
}

FlowField FlowField::zeros(std::size_t h, std::size_t w) {
    return {TensorD({h, w}), TensorD({h, w})};
}

template <typename T>
GrayImage to_grayscale(const Tensor<T>& rgb) {
    if (rgb.rank() != 3 || rgb.dim(2) != 3) throw ShapeError("to_grayscale expects (h,w,3), got " + shape_to_string(rgb.shape()));
    const std::size_t h = rgb.dim(0), w = rgb.dim(1);
    TensorD gray({h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        const double r = rgb[3 * i], g = rgb[3 * i + 1], b = rgb[3 * i + 2];
        if (!std::isfinite(r) || !std::isfinite(g) || !std::isfinite(b)) throw NumericError("to_grayscale: non-finite input");
        gray[i] = std::clamp(0.299 * r + 0.587 * g + 0.114 * b, 0.0, 1.0);
    }
    return GrayImage(std::move(gray));
}

TensorD separable_filter(const TensorD& img, std::span<const double> kernel_x, std::span<const double> kernel_y) {
    const std::size_t h = img.dim(0), w = img.dim(1);
    const auto rx = static_cast<std::ptrdiff_t>(kernel_x.size() / 2);
    const auto ry = static_cast<std::ptrdiff_t>(kernel_y.size() / 2);
    const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    TensorD tmp({h, w});
    for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -rx; k <= rx; ++k) {
                const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(x + k, 0, W - 1);
                acc += kernel_x[static_cast<std::size_t>(k + rx)] * img[static_cast<std::size_t>(y * W + xx)];
            }
            tmp[static_cast<std::size_t>(y * W + x)] = acc;
        }
    }
    TensorD out({h, w});
    for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -ry; k <= ry; ++k) {
                const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(y + k, 0, H - 1);
                acc += kernel_y[static_cast<std::size_t>(k + ry)] * tmp[static_cast<std::size_t>(yy * W + x)];
            }
            out[static_cast<std::size_t>(y * W + x)] = acc;
        }
    }
    return out;
}

PolyExpansion polynomial_expansion(const GrayImage& img, const FlowParams& params) {
    params.validate();
    const auto win = static_cast<std::size_t>(params.expansion_window);
    if (img.height() < win || img.width() < win) {
        throw ConfigError("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                          " smaller than expansion window " + std::to_string(win));
    }
    const int n = params.expansion_window / 2;
    const double s2 = params.window_sigma * params.window_sigma;

    // Applicability g and its first two moments as 1-D filters.
    std::vector<double> g0, g1, g2;
    for (int k = -n; k <= n; ++k) {
        const double g = std::exp(-double(k * k) / (2.0 * s2));
        g0.push_back(g);
        g1.push_back(g * k);
        g2.push_back(g * k * k);
    }

    // Normal matrix of the weighted basis {1, x, y, x^2, y^2, xy}. It is the
    // same at every pixel because borders are replicate-padded.
    Eigen::Matrix<double, 6, 6> gram = Eigen::Matrix<double, 6, 6>::Zero();
    for (int v = -n; v <= n; ++v) {
        for (int u = -n; u <= n; ++u) {
            const double wgt = g0[static_cast<std::size_t>(u + n)] * g0[static_cast<std::size_t>(v + n)];
            const Eigen::Matrix<double, 6, 1> basis(1.0, u, v, double(u * u), double(v * v), double(u * v));
            gram += wgt * basis * basis.transpose();
        }
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(gram);
    if (lu.rcond() < 1e-12) {
        gram += 1e-8 * gram.trace() * Eigen::Matrix<double, 6, 6>::Identity();
        lu.compute(gram);
    }
    const Eigen::Matrix<double, 6, 6> ginv = lu.inverse();

    // Weighted projections onto each basis function.
    const TensorD& f = img.intensity();
    const std::array<TensorD, 6> proj = {
        separable_filter(f, g0, g0),  // 1
        separable_filter(f, g1, g0),  // x
        separable_filter(f, g0, g1),  // y
        separable_filter(f, g2, g0),  // x^2
        separable_filter(f, g0, g2),  // y^2
        separable_filter(f, g1, g1),  // xy
    };

    const std::size_t h = img.height(), w = img.width();
    PolyExpansion e{TensorD({h, w}), TensorD({h, w}), TensorD({h, w}), TensorD({h, w}), TensorD({h, w}), TensorD({h, w})};
    for (std::size_t i = 0; i < h * w; ++i) {
        Eigen::Matrix<double, 6, 1> rhs;
        for (int k = 0; k < 6; ++k) rhs[k] = proj[static_cast<std::size_t>(k)][i];
        const Eigen::Matrix<double, 6, 1> r = ginv * rhs;
        e.c[i] = r[0];
        e.b1[i] = r[1];
        e.b2[i] = r[2];
        e.a11[i] = r[3];
        e.a22[i] = r[4];
        e.a12[i] = 0.5 * r[5];
    }
    return e;
}

namespace {

void check_same(const TensorD& a, const TensorD& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
    }
}

std::vector<double> box_kernel(int window) {
    return std::vector<double>(static_cast<std::size_t>(window), 1.0 / window);
}

// Pixel-centre aligned bilinear resampling, used for the pyramid.
TensorD resample(const TensorD& img, std::size_t out_h, std::size_t out_w) {
    const std::size_t h = img.dim(0), w = img.dim(1);
    TensorD out({out_h, out_w});
    const double sy = double(h) / double(out_h), sx = double(w) / double(out_w);
    for (std::size_t i = 0; i < out_h; ++i) {
        const double y = (double(i) + 0.5) * sy - 0.5;
        for (std::size_t j = 0; j < out_w; ++j) {
            const double x = (double(j) + 0.5) * sx - 0.5;
            out[i * out_w + j] = bilinear_sample_clamped(img, x, y);
        }
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(sigma * 3.0)));
    std::vector<double> k;
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k.push_back(std::exp(-double(i * i) / (2.0 * sigma * sigma)));
        sum += k.back();
    }
    for (auto& v : k) v /= sum;
    return k;
}

}  // namespace

FlowField estimate_flow(const PolyExpansion& e1, const PolyExpansion& e2, const FlowField& prior,
                        const FlowParams& params) {
    params.validate();
    check_same(e1.c, e2.c, "estimate_flow expansion shapes differ");
    check_same(e1.c, prior.dx, "estimate_flow prior shape differs");
    check_same(prior.dx, prior.dy, "estimate_flow prior components differ");
    const std::size_t h = e1.c.dim(0), w = e1.c.dim(1);

    // Per-pixel normal equations of A_bar d = delta_b, to be pooled.
    TensorD g11({h, w}), g12({h, w}), g22({h, w}), h1({h, w}), h2({h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            const double dx = prior.dx[i], dy = prior.dy[i];
            const double px = double(x) + dx, py = double(y) + dy;
            const double a11 = 0.5 * (e1.a11[i] + bilinear_sample_clamped(e2.a11, px, py));
            const double a12 = 0.5 * (e1.a12[i] + bilinear_sample_clamped(e2.a12, px, py));
            const double a22 = 0.5 * (e1.a22[i] + bilinear_sample_clamped(e2.a22, px, py));
            const double db1 = -0.5 * (bilinear_sample_clamped(e2.b1, px, py) - e1.b1[i]) + a11 * dx + a12 * dy;
            const double db2 = -0.5 * (bilinear_sample_clamped(e2.b2, px, py) - e1.b2[i]) + a12 * dx + a22 * dy;
            g11[i] = a11 * a11 + a12 * a12;
            g12[i] = a11 * a12 + a12 * a22;
            g22[i] = a12 * a12 + a22 * a22;
            h1[i] = a11 * db1 + a12 * db2;
            h2[i] = a12 * db1 + a22 * db2;
        }
    }

    const auto box = box_kernel(params.averaging_window);
    g11 = separable_filter(g11, box, box);
    g12 = separable_filter(g12, box, box);
    g22 = separable_filter(g22, box, box);
    h1 = separable_filter(h1, box, box);
    h2 = separable_filter(h2, box, box);

    FlowField out = prior;
    for (std::size_t i = 0; i < h * w; ++i) {
        const double trace = g11[i] + g22[i];
        if (!(trace > 0.0) || !std::isfinite(trace)) continue;
        const double lambda = 1e-8 * trace;
        const double m11 = g11[i] + lambda, m22 = g22[i] + lambda, m12 = g12[i];
        // Eigenvalues of the symmetric 2x2 system give its exact condition number.
        const double half_tr = 0.5 * (m11 + m22);
        const double disc = std::sqrt(0.25 * (m11 - m22) * (m11 - m22) + m12 * m12);
        const double lmax = half_tr + disc, lmin = half_tr - disc;
        if (!(lmin > 0.0) || lmax / lmin > 1e8) continue;
        const double det = m11 * m22 - m12 * m12;
        out.dx[i] = (m22 * h1[i] - m12 * h2[i]) / det;
        out.dy[i] = (m11 * h2[i] - m12 * h1[i]) / det;
    }
    return out;
}

FlowField farneback_flow(const GrayImage& f1, const GrayImage& f2, const FlowParams& params) {
    params.validate();
    check_same(f1.intensity(), f2.intensity(), "farneback_flow frame shapes differ");
    const std::size_t h = f1.height(), w = f1.width();

    std::vector<std::pair<std::size_t, std::size_t>> sizes;
    double scale = 1.0;
    for (int level = 0; level < params.pyramid_levels; ++level) {
        const auto lh = static_cast<std::size_t>(std::lround(double(h) * scale));
        const auto lw = static_cast<std::size_t>(std::lround(double(w) * scale));
        if (lh < static_cast<std::size_t>(params.expansion_window) || lw < static_cast<std::size_t>(params.expansion_window)) {
            throw ConfigError("pyramid level " + std::to_string(level) + " is " + std::to_string(lh) + "x" +
                              std::to_string(lw) + ", smaller than expansion window " +
                              std::to_string(params.expansion_window));
        }
        sizes.emplace_back(lh, lw);
        scale *= params.pyramid_scale;
    }

    auto level_image = [&](const GrayImage& img, int level) {
        if (level == 0) return img.intensity();
        const double s = std::pow(params.pyramid_scale, level);
        const auto k = gaussian_kernel((1.0 / s - 1.0) * 0.5);
        const TensorD blurred = separable_filter(img.intensity(), k, k);
        return resample(blurred, sizes[static_cast<std::size_t>(level)].first, sizes[static_cast<std::size_t>(level)].second);
    };

    FlowField flow;
    for (int level = params.pyramid_levels - 1; level >= 0; --level) {
        const auto [lh, lw] = sizes[static_cast<std::size_t>(level)];
        if (flow.dx.empty()) {
            flow = FlowField::zeros(lh, lw);
        } else {
            const double sx = double(lw) / double(flow.width());
            const double sy = double(lh) / double(flow.height());
            FlowField up{resample(flow.dx, lh, lw), resample(flow.dy, lh, lw)};
            for (auto& v : up.dx.data()) v *= sx;
            for (auto& v : up.dy.data()) v *= sy;
            flow = std::move(up);
        }
        const PolyExpansion e1 = polynomial_expansion(GrayImage(level_image(f1, level)), params);
        const PolyExpansion e2 = polynomial_expansion(GrayImage(level_image(f2, level)), params);
        for (int it = 0; it < params.iterations_per_level; ++it) flow = estimate_flow(e1, e2, flow, params);
    }
    return flow;
}

double WarpResidual::mean_abs(std::size_t border) const {
    const std::size_t h = value.dim(0), w = value.dim(1);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t y = border; y + border < h; ++y) {
        for (std::size_t x = border; x + border < w; ++x) {
            const std::size_t i = y * w + x;
            if (!valid[i]) continue;
            sum += std::abs(value[i]);
            ++count;
        }
    }
    return count ? sum / double(count) : 0.0;
}

WarpResidual brightness_constancy_residual(const GrayImage& f1, const GrayImage& f2, const FlowField& flow) {
    check_same(f1.intensity(), f2.intensity(), "residual frame shapes differ");
    check_same(f1.intensity(), flow.dx, "residual flow shape differs");
    check_same(flow.dx, flow.dy, "residual flow components differ");
    const std::size_t h = f1.height(), w = f1.width();
    WarpResidual r{TensorD({h, w}), std::vector<std::uint8_t>(h * w, 0)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            double warped;
            if (bilinear_sample(f2.intensity(), double(x) + flow.dx[i], double(y) + flow.dy[i], warped)) {
                r.value[i] = warped - f1(y, x);
                r.valid[i] = 1;
            }
        }
    }
    return r;
}

TensorD stack_flow(std::span<const FlowField> flows) {
    if (flows.empty()) throw ShapeError("stack_flow needs at least one flow");
    const std::size_t h = flows[0].height(), w = flows[0].width(), L = flows.size();
    for (const auto& f : flows) {
        check_same(flows[0].dx, f.dx, "stack_flow shapes differ");
        check_same(flows[0].dx, f.dy, "stack_flow shapes differ");
    }
    TensorD out({h, w, 2 * L});
    for (std::size_t i = 0; i < h * w; ++i) {
        for (std::size_t k = 0; k < L; ++k) {
            out[i * 2 * L + 2 * k] = flows[k].dx[i];
            out[i * 2 * L + 2 * k + 1] = flows[k].dy[i];
        }
    }
    return out;
}

std::vector<FlowField> unstack_flow(const TensorD& stacked) {
    if (stacked.rank() != 3 || stacked.dim(2) % 2 != 0) {
        throw ShapeError("unstack_flow expects (h,w,2L), got " + shape_to_string(stacked.shape()));
    }
    const std::size_t h = stacked.dim(0), w = stacked.dim(1), c = stacked.dim(2);
    std::vector<FlowField> flows(c / 2, FlowField::zeros(h, w));
    for (std::size_t i = 0; i < h * w; ++i) {
        for (std::size_t k = 0; k < c / 2; ++k) {
            flows[k].dx[i] = stacked[i * c + 2 * k];
            flows[k].dy[i] = stacked[i * c + 2 * k + 1];
        }
    }
    return flows;
}

TensorD flow_to_rgb(const FlowField& flow, double max_mag) {
    if (!(max_mag > 0.0)) throw ConfigError("flow_to_rgb: max_mag must be positive");
    check_same(flow.dx, flow.dy, "flow components differ");
    const std::size_t h = flow.height(), w = flow.width();
    TensorD out({h, w, 3});
    for (std::size_t i = 0; i < h * w; ++i) {
        const double dx = flow.dx[i], dy = flow.dy[i];
        out[3 * i] = std::clamp(dx / max_mag, -1.0, 1.0) / 2.0 + 0.5;
        out[3 * i + 1] = std::clamp(dy / max_mag, -1.0, 1.0) / 2.0 + 0.5;
        out[3 * i + 2] = std::clamp(std::hypot(dx, dy) / max_mag, 0.0, 1.0);
    }
    return out;
}

TensorD flow_to_tensor(const FlowField& flow) {
    std::array<FlowField, 1> one{flow};
    return stack_flow(one);
}

FlowField flow_from_tensor(const TensorD& t) {
    if (t.rank() != 3 || t.dim(2) != 2) throw ShapeError("flow tensor must be (h,w,2), got " + shape_to_string(t.shape()));
    return unstack_flow(t).front();
}

template GrayImage to_grayscale<float>(const TensorF&);
template GrayImage to_grayscale<double>(const TensorD&);

}  // namespace stflow
