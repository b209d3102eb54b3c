#pragma once

#include "stflow/rng.hpp"
#include "stflow/tensor.hpp"

namespace stflow {

// Uniform noise blurred by a Gaussian of std-dev `sigma` and stretched to
// span [0, 1]. The shared texture source for synthetic frames and flow tests.
TensorD smooth_noise(std::size_t h, std::size_t w, double sigma, SeededRng& rng);

// Rows [y0, y0 + h) and columns [x0, x0 + w) of a rank-2 tensor.
TensorD crop(const TensorD& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

}  // namespace stflow
