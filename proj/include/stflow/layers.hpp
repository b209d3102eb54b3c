#pragma once

#include <vector>

#include "stflow/tensor.hpp"

namespace stflow {

// All layers use channels-last layouts and stride-1 "same" padding. For an
// even kernel extent k the padding is (k-1)/2 before and k/2 after.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct Conv2dGrads {
    Tensor<T> x, weight, bias;
};

// `x` and `weight` are the forward inputs; they are the whole cache.
template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& weight);

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
using Conv3dGrads = Conv2dGrads<T>;

template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& weight);

// 2x2 max pool with stride 2 over (n, h, w, c). Odd trailing rows/columns
// are dropped. Ties go to the first element in row-major window order.
struct PoolCache {
    Shape input_shape;
    std::vector<std::size_t> argmax;  // flat input offset per output element
};

template <typename T>
Tensor<T> maxpool2d_forward(const Tensor<T>& x, PoolCache& cache);

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_out, const PoolCache& cache);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);

// Gradient through ReLU given the forward output.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& out);

// x (batch, in) . weight (in, out) + bias (out).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
using DenseGrads = Conv2dGrads<T>;

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& weight);

// Row-wise softmax over (batch, k) with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

// Gated recurrent unit acting on row-batched inputs. Each weight multiplies
// the concatenation [h_prev, x_t] from the right, so its shape is
// (hidden + in, hidden).
template <typename T>
struct GruParams {
    Tensor<T> wz, wr, wh;
    Tensor<T> bz, br, bh;

    std::size_t hidden() const { return wz.dim(1); }
    std::size_t input() const { return wz.dim(0) - wz.dim(1); }
};

template <typename T>
struct GruStep {
    Tensor<T> h_prev, hx, rhx, z, r, h_tilde;
};

template <typename T>
struct GruCache {
    std::vector<GruStep<T>> steps;
};

template <typename T>
struct GruOutput {
    Tensor<T> h_seq;    // (t, batch, hidden)
    Tensor<T> h_final;  // (batch, hidden)
};

// x_seq is (t, batch, in); the initial state is zero. Pass a cache to enable
// gru_backward.
template <typename T>
GruOutput<T> gru_forward(const Tensor<T>& x_seq, const GruParams<T>& params, GruCache<T>* cache = nullptr);

template <typename T>
struct GruGrads {
    Tensor<T> x_seq;
    GruParams<T> params;
};

// Backpropagation through time. grad_h_seq is the loss gradient with respect
// to every emitted hidden state (zeros where a step feeds nothing).
template <typename T>
GruGrads<T> gru_backward(const Tensor<T>& grad_h_seq, const GruCache<T>& cache, const GruParams<T>& params);

template <typename T>
T sigmoid(T v);

}  // namespace stflow
