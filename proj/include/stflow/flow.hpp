#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stflow/image.hpp"
#include "stflow/tensor.hpp"

namespace stflow {

struct FlowParams {
    int pyramid_levels = 3;       // total levels including the full-resolution one
    double pyramid_scale = 0.5;
    double window_sigma = 1.5;    // Gaussian applicability of the expansion
    int expansion_window = 11;
    int iterations_per_level = 3;
    int averaging_window = 15;    // box window over which displacement equations are pooled

    void validate() const;

    // Largest level count (at most pyramid_levels) whose coarsest level still
    // spans expansion_window pixels in both dimensions; 0 if none does.
    int max_pyramid_levels(std::size_t h, std::size_t w) const;
};

// Per-pixel displacement from frame 1 to frame 2, in pixels.
struct FlowField {
    TensorD dx;
    TensorD dy;

    static FlowField zeros(std::size_t h, std::size_t w);
    std::size_t height() const { return dx.dim(0); }
    std::size_t width() const { return dx.dim(1); }
};

// Local quadratic model f(p + u) ~ u^T A u + b^T u + c with u = (x, y)
// offsets in pixel units (x along columns). A = [[a11, a12], [a12, a22]]
// is symmetric by construction. Every field is (h, w).
struct PolyExpansion {
    TensorD a11, a12, a22;
    TensorD b1, b2;
    TensorD c;
};

// Luma with weights (0.299, 0.587, 0.114), clamped to [0, 1].
template <typename T>
GrayImage to_grayscale(const Tensor<T>& rgb);

PolyExpansion polynomial_expansion(const GrayImage& img, const FlowParams& params);

// One refinement round: solves the pooled displacement equations around the
// prior warp. Pixels whose pooled system is ill-conditioned keep the prior.
FlowField estimate_flow(const PolyExpansion& e1, const PolyExpansion& e2, const FlowField& prior,
                        const FlowParams& params);

// Coarse-to-fine dense flow from f1 to f2.
FlowField farneback_flow(const GrayImage& f1, const GrayImage& f2, const FlowParams& params);

struct WarpResidual {
    TensorD value;                    // f2(x + dx, y + dy) - f1(x, y)
    std::vector<std::uint8_t> valid;  // 0 where the warped point fell outside f2

    // Mean |value| over valid pixels at least `border` pixels from every edge.
    double mean_abs(std::size_t border = 0) const;
};

WarpResidual brightness_constancy_residual(const GrayImage& f1, const GrayImage& f2, const FlowField& flow);

// (h, w, 2L): channel 2k holds dx of flow k and 2k + 1 its dy (0-based).
TensorD stack_flow(std::span<const FlowField> flows);
std::vector<FlowField> unstack_flow(const TensorD& stacked);

// Three-channel encoding: (clamp(dx/m)/2 + 1/2, clamp(dy/m)/2 + 1/2, clamp(|d|/m, 0, 1)).
TensorD flow_to_rgb(const FlowField& flow, double max_mag);

// (h, w, 2) with dx in channel 0 and dy in channel 1, the flow dump layout.
TensorD flow_to_tensor(const FlowField& flow);
FlowField flow_from_tensor(const TensorD& t);

// Separable correlation with replicate borders; kernels have odd length and
// are centred. Exposed for the pyramid and the expansion filters.
TensorD separable_filter(const TensorD& img, std::span<const double> kernel_x, std::span<const double> kernel_y);

}  // namespace stflow
