#pragma once

#include <span>
#include <vector>

#include "neuroclip/tensor.hpp"

// Differentiable primitives. Every function records its own backward rule and
// is covered by finite-difference checks in tests/test_ops.cpp.
namespace neuroclip {

// Elementwise with NumPy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// Exact (erf) form.
Tensor gelu(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Matrix product over the last two axes. Supported forms:
//   [..., m, k] x [k, n]        (right operand shared across the batch)
//   [m, k]      x [..., k, n]   (left operand shared across the batch)
//   [..., m, k] x [..., k, n]   (identical batch axes)
Tensor matmul(const Tensor& a, const Tensor& b);

// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor permute(const Tensor& a, std::span<const std::size_t> axes);
Tensor reshape(const Tensor& a, Shape shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
// Gathers rows (entries along axis 0).
Tensor index_select(const Tensor& a, std::span<const std::size_t> rows);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor mean_axis(const Tensor& a, std::size_t axis, bool keepdim = false);

// Softmax over the last axis of x / temperature, with row-max subtraction.
Tensor softmax_rows(const Tensor& x, double temperature = 1.0);
Tensor log_softmax_rows(const Tensor& x);

// Rows (last axis) scaled to unit Euclidean norm: x / max(|x|, sqrt(eps)).
// With eps = 0 a zero row raises NumericError.
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

// Normalizes the last axis, then applies gain and bias of shape [d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// softmax(q k^T / sqrt(d)) v over the last two axes, batch axes broadcast-free.
// When `weights` is non-null it receives the attention matrix.
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, Tensor* weights = nullptr);

// im2col: [B, C, H, W] -> [B, C*kh*kw, Ho*Wo], zero padding.
// Row index is c*kh*kw + i*kw + j; column index is oy*Wo + ox.
Tensor unfold(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad_h,
              std::size_t pad_w);
inline Tensor unfold(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
  return unfold(x, kh, kw, stride, pad, pad);
}

// Cross-correlation. x [B, Ci, H, W], w [Co, Ci, kh, kw], b [Co].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);

// Row-wise KL(p || q) for row-stochastic [R, n] inputs, summed over columns and
// averaged over rows. Probabilities are clamped at `clamp` before the log, so
// 0 * log 0 contributes 0.
Tensor kl_div_rows(const Tensor& p, const Tensor& q, double clamp = 1e-12);

}  // namespace neuroclip
