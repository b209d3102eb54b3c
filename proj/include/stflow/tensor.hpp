#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "stflow/error.hpp"

namespace stflow {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major n-dimensional array. The scalar type selects the numeric
// profile: double for gradient checks and oracles, float for training.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
    static Tensor identity(std::size_t n);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    Shape strides() const;
    std::size_t offset(std::initializer_list<std::size_t> index) const;
    T& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
    const T& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

    // Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    // Elements [begin, end) along `axis`.
    Tensor slice(std::size_t axis, std::size_t begin, std::size_t end) const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> concat_axis(std::span<const Tensor<T>> tensors, std::size_t axis);

template <typename T>
Tensor<T> concat_axis(std::initializer_list<Tensor<T>> tensors, std::size_t axis) {
    std::vector<Tensor<T>> v(tensors);
    return concat_axis<T>(std::span<const Tensor<T>>(v), axis);
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a);

}  // namespace stflow
