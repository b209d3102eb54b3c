#include "stflow/texture.hpp"

#include <algorithm>
#include <cmath>

#include "stflow/flow.hpp"

namespace stflow {

TensorD smooth_noise(std::size_t h, std::size_t w, double sigma, SeededRng& rng) {
    TensorD noise({h, w});
    for (auto& v : noise.data()) v = rng.uniform();
    if (sigma > 0.0) {
        const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
        std::vector<double> k;
        double sum = 0.0;
        for (int i = -radius; i <= radius; ++i) {
            k.push_back(std::exp(-double(i * i) / (2.0 * sigma * sigma)));
            sum += k.back();
        }
        for (auto& v : k) v /= sum;
        noise = separable_filter(noise, k, k);
    }
    const auto [lo, hi] = std::minmax_element(noise.data().begin(), noise.data().end());
    const double a = *lo, span = *hi - *lo;
    for (auto& v : noise.data()) v = span > 0.0 ? (v - a) / span : 0.5;
    return noise;
}

TensorD crop(const TensorD& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    if (img.rank() != 2 || y0 + h > img.dim(0) || x0 + w > img.dim(1)) {
        throw ShapeError("crop out of range for " + shape_to_string(img.shape()));
    }
    TensorD out({h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out[y * w + x] = img[(y0 + y) * img.dim(1) + x0 + x];
    return out;
}

}  // namespace stflow
