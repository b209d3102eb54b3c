#include "stflow/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace stflow {

GrayImage::GrayImage(TensorD intensity) : intensity_(std::move(intensity)) {
    if (intensity_.rank() != 2) throw ShapeError("GrayImage expects (h,w), got " + shape_to_string(intensity_.shape()));
    for (double v : intensity_.data()) {
        if (!std::isfinite(v)) throw NumericError("GrayImage: non-finite intensity");
        if (v < -1e-9 || v > 1.0 + 1e-9) throw DataError("GrayImage: intensity outside [0,1]");
    }
}

bool bilinear_sample(const TensorD& img, double x, double y, double& out) {
    const std::size_t h = img.dim(0), w = img.dim(1);
    if (!(x >= 0.0 && y >= 0.0 && x <= double(w - 1) && y <= double(h - 1))) return false;
    out = bilinear_sample_clamped(img, x, y);
    return true;
}

double bilinear_sample_clamped(const TensorD& img, double x, double y) {
    const std::size_t h = img.dim(0), w = img.dim(1);
    x = std::clamp(x, 0.0, double(w - 1));
    y = std::clamp(y, 0.0, double(h - 1));
    const auto x0 = static_cast<std::size_t>(x);
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t x1 = std::min(x0 + 1, w - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fx = x - double(x0), fy = y - double(y0);
    const double top = img[y0 * w + x0] * (1 - fx) + img[y0 * w + x1] * fx;
    const double bot = img[y1 * w + x0] * (1 - fx) + img[y1 * w + x1] * fx;
    return top * (1 - fy) + bot * fy;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, std::size_t out_h, std::size_t out_w) {
    if (img.rank() != 3) throw ShapeError("resize_bilinear expects (h,w,c), got " + shape_to_string(img.shape()));
    if (out_h == 0 || out_w == 0) throw ConfigError("resize_bilinear: degenerate target size");
    const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (h == out_h && w == out_w) return img;
    Tensor<T> out({out_h, out_w, c});
    const double sy = out_h > 1 ? double(h - 1) / double(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? double(w - 1) / double(out_w - 1) : 0.0;
    for (std::size_t i = 0; i < out_h; ++i) {
        const double y = std::min(double(i) * sy, double(h - 1));
        const auto y0 = static_cast<std::size_t>(y);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double fy = y - double(y0);
        for (std::size_t j = 0; j < out_w; ++j) {
            const double x = std::min(double(j) * sx, double(w - 1));
            const auto x0 = static_cast<std::size_t>(x);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double fx = x - double(x0);
            for (std::size_t k = 0; k < c; ++k) {
                const double v00 = img[(y0 * w + x0) * c + k], v01 = img[(y0 * w + x1) * c + k];
                const double v10 = img[(y1 * w + x0) * c + k], v11 = img[(y1 * w + x1) * c + k];
                const double v = (v00 * (1 - fx) + v01 * fx) * (1 - fy) + (v10 * (1 - fx) + v11 * fx) * fy;
                out[(i * out_w + j) * c + k] = static_cast<T>(v);
            }
        }
    }
    return out;
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string ppm_token(std::istream& is) {
    std::string tok;
    int ch;
    while ((ch = is.get()) != EOF) {
        if (ch == '#') {
            while ((ch = is.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

std::size_t ppm_number(std::istream& is, const char* what) {
    const std::string tok = ppm_token(is);
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw DataError(std::string("PPM: bad ") + what);
    }
    return std::stoul(tok);
}

}  // namespace

TensorF read_ppm(std::istream& is) {
    if (ppm_token(is) != "P6") throw DataError("PPM: not a binary P6 file");
    const std::size_t w = ppm_number(is, "width");
    const std::size_t h = ppm_number(is, "height");
    const std::size_t maxval = ppm_number(is, "maxval");
    if (w == 0 || h == 0) throw DataError("PPM: zero dimension");
    if (maxval == 0 || maxval > 65535) throw DataError("PPM: maxval out of range");
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(w * h * 3 * bytes_per);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw DataError("PPM: truncated pixel data");
    }
    TensorF out({h, w, 3});
    for (std::size_t i = 0; i < w * h * 3; ++i) {
        const unsigned v = bytes_per == 2 ? (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
        if (v > maxval) throw DataError("PPM: sample exceeds maxval");
        out[i] = static_cast<float>(double(v) / double(maxval));
    }
    return out;
}

TensorF read_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    try {
        return read_ppm(is);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

template <typename T>
void write_ppm(std::ostream& os, const Tensor<T>& rgb) {
    if (rgb.rank() != 3 || rgb.dim(2) != 3) throw ShapeError("write_ppm expects (h,w,3), got " + shape_to_string(rgb.shape()));
    os << "P6\n" << rgb.dim(1) << ' ' << rgb.dim(0) << "\n255\n";
    std::vector<unsigned char> raw(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        const double v = std::clamp(double(rgb[i]), 0.0, 1.0);
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

template <typename T>
void write_ppm(const std::filesystem::path& path, const Tensor<T>& rgb) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_ppm(os, rgb);
    if (!os) throw DataError("write failed: " + path.string());
}

template TensorF resize_bilinear<float>(const TensorF&, std::size_t, std::size_t);
template TensorD resize_bilinear<double>(const TensorD&, std::size_t, std::size_t);
template void write_ppm<float>(std::ostream&, const TensorF&);
template void write_ppm<double>(std::ostream&, const TensorD&);
template void write_ppm<float>(const std::filesystem::path&, const TensorF&);
template void write_ppm<double>(const std::filesystem::path&, const TensorD&);

}  // namespace stflow
