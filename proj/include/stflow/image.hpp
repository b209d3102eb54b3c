#pragma once

#include <filesystem>
#include <iosfwd>

#include "stflow/tensor.hpp"

namespace stflow {

// Single-channel intensity image, (h, w) with values in [0, 1].
class GrayImage {
public:
    GrayImage() = default;
    explicit GrayImage(TensorD intensity);

    std::size_t height() const { return intensity_.dim(0); }
    std::size_t width() const { return intensity_.dim(1); }
    const TensorD& intensity() const { return intensity_; }
    double operator()(std::size_t y, std::size_t x) const { return intensity_[y * width() + x]; }

private:
    TensorD intensity_;
};

// Bilinear sample of a rank-2 (h, w) tensor at fractional (x, y). Returns
// false and leaves `out` untouched when the point lies outside
// [0, w-1] x [0, h-1].
bool bilinear_sample(const TensorD& img, double x, double y, double& out);

// Same, but coordinates are clamped to the image so a value always exists.
double bilinear_sample_clamped(const TensorD& img, double x, double y);

// Corner-aligned bilinear resize of an (h, w, c) image: output pixel i maps to
// source coordinate i * (h - 1) / (out_h - 1).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, std::size_t out_h, std::size_t out_w);

// 8-bit and 16-bit binary PPM (P6) decoding to (h, w, 3) in [0, 1].
TensorF read_ppm(std::istream& is);
TensorF read_ppm(const std::filesystem::path& path);

// 8-bit P6 encoding; values are clamped to [0, 1] and rounded to 0..255.
template <typename T>
void write_ppm(std::ostream& os, const Tensor<T>& rgb);
template <typename T>
void write_ppm(const std::filesystem::path& path, const Tensor<T>& rgb);

}  // namespace stflow
