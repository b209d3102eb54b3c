#include "stflow/tensor.hpp"

#include <cmath>
#include <sstream>

namespace stflow {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace {

void check_dims(const Shape& shape) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
    }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
    check_dims(shape_);
    data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("shape " + shape_to_string(shape_) + " holds " + std::to_string(shape_numel(shape_)) +
                         " elements but " + std::to_string(data_.size()) + " were given");
    }
}

template <typename T>
Tensor<T> Tensor<T>::identity(std::size_t n) {
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) out.data_[i * n + i] = T(1);
    return out;
}

template <typename T>
Shape Tensor<T>::strides() const {
    Shape s(shape_.size(), 1);
    for (std::size_t i = shape_.size(); i-- > 1;) s[i - 1] = s[i] * shape_[i];
    return s;
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw ShapeError("index of rank " + std::to_string(index.size()) + " into tensor " + shape_to_string(shape_));
    }
    std::size_t off = 0;
    std::size_t k = 0;
    for (auto i : index) {
        if (i >= shape_[k]) throw ShapeError("index out of range for tensor " + shape_to_string(shape_));
        off = off * shape_[k] + i;
        ++k;
    }
    return off;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

template <typename T>
Tensor<T> Tensor<T>::slice(std::size_t axis, std::size_t begin, std::size_t end) const {
    if (axis >= rank() || begin >= end || end > shape_[axis]) {
        throw ShapeError("bad slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + shape_to_string(shape_));
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape_[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < rank(); ++i) inner *= shape_[i];
    Shape out_shape = shape_;
    out_shape[axis] = end - begin;
    std::vector<T> out;
    out.reserve(shape_numel(out_shape));
    for (std::size_t o = 0; o < outer; ++o) {
        auto first = data_.begin() + static_cast<std::ptrdiff_t>((o * shape_[axis] + begin) * inner);
        out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>((end - begin) * inner));
    }
    return Tensor(std::move(out_shape), std::move(out));
}

template <typename T>
bool Tensor<T>::all_finite() const {
    for (auto v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul shape mismatch: " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> c({m, n});
    auto A = a.data();
    auto B = b.data();
    auto C = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = &C[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = A[i * k + p];
            const T* brow = &B[p * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

template <typename T>
Tensor<T> concat_axis(std::span<const Tensor<T>> tensors, std::size_t axis) {
    if (tensors.empty()) throw ShapeError("concat_axis needs at least one tensor");
    const Shape& ref = tensors[0].shape();
    if (axis >= ref.size()) throw ShapeError("concat axis " + std::to_string(axis) + " out of range for " + shape_to_string(ref));
    Shape out_shape = ref;
    out_shape[axis] = 0;
    for (const auto& t : tensors) {
        bool ok = t.rank() == ref.size();
        for (std::size_t i = 0; ok && i < ref.size(); ++i) {
            if (i != axis && t.dim(i) != ref[i]) ok = false;
        }
        if (!ok) {
            throw ShapeError("concat_axis shape mismatch: " + shape_to_string(ref) + " vs " + shape_to_string(t.shape()) +
                             " on axis " + std::to_string(axis));
        }
        out_shape[axis] += t.dim(axis);
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
    std::vector<T> out;
    out.reserve(shape_numel(out_shape));
    for (std::size_t o = 0; o < outer; ++o) {
        for (const auto& t : tensors) {
            const std::size_t chunk = t.dim(axis) * inner;
            auto src = t.data().subspan(o * chunk, chunk);
            out.insert(out.end(), src.begin(), src.end());
        }
    }
    return Tensor<T>(std::move(out_shape), std::move(out));
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.rank() != 2) throw ShapeError("transpose2d expects rank 2, got " + shape_to_string(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor<T> out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

#define STFLOW_INSTANTIATE(T)                                                          \
    template class Tensor<T>;                                                          \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> concat_axis<T>(std::span<const Tensor<T>>, std::size_t);        \
    template Tensor<T> transpose2d<T>(const Tensor<T>&);

STFLOW_INSTANTIATE(float)
STFLOW_INSTANTIATE(double)

#undef STFLOW_INSTANTIATE

}  // namespace stflow
