#include "neuroclip/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>

#include "neuroclip/errors.hpp"

namespace neuroclip {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(std::span<const double> s, std::size_t offset, std::size_t rows, std::size_t cols) {
  return ConstMap(s.data() + offset, Eigen::Index(rows), Eigen::Index(cols));
}

MutMap as_matrix(std::span<double> s, std::size_t offset, std::size_t rows, std::size_t cols) {
  return MutMap(s.data() + offset, Eigen::Index(rows), Eigen::Index(cols));
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> st(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

// Output shape and, per output element, the source element of each operand.
// An empty map means the operand already has the output shape.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> ia;
  std::vector<std::size_t> ib;

  std::size_t a(std::size_t i) const { return ia.empty() ? i : ia[i]; }
  std::size_t b(std::size_t i) const { return ib.empty() ? i : ib[i]; }
};

std::vector<std::size_t> source_index(const Shape& src, const Shape& out) {
  const std::size_t n = numel(out);
  const std::size_t lead = out.size() - src.size();
  std::vector<std::size_t> st(out.size(), 0);
  const auto src_st = strides_of(src);
  for (std::size_t i = 0; i < src.size(); ++i) st[lead + i] = src[i] == 1 ? 0 : src_st[i];
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = pos;
    for (std::size_t ax = out.size(); ax-- > 0;) {
      ++idx[ax];
      pos += st[ax];
      if (idx[ax] < out[ax]) break;
      pos -= st[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return map;
}

Broadcast make_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast plan;
  const std::size_t r = std::max(a.size(), b.size());
  plan.out.assign(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i + a.size() >= r ? a[i + a.size() - r] : 1;
    const std::size_t db = i + b.size() >= r ? b[i + b.size() - r] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    plan.out[i] = da == 1 ? db : da;
  }
  if (a != plan.out) plan.ia = source_index(a, plan.out);
  if (b != plan.out) plan.ib = source_index(b, plan.out);
  return plan;
}

template <class F, class DA, class DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  auto plan = std::make_shared<Broadcast>(make_broadcast(a.shape(), b.shape(), name));
  const std::size_t n = numel(plan->out);
  std::vector<double> out(n);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[plan->a(i)], bd[plan->b(i)]);
  const Tensor inputs[] = {a, b};
  return Tensor::from_op(name, plan->out, std::move(out), inputs,
                         [a, b, plan, da, db](std::span<const double> g, std::span<const double>,
                                              std::span<detail::GradSink> sinks) {
                           const auto ad = a.data();
                           const auto bd = b.data();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const double x = ad[plan->a(i)];
                             const double y = bd[plan->b(i)];
                             if (!sinks[0].empty()) sinks[0][plan->a(i)] += da(x, y, g[i]);
                             if (!sinks[1].empty()) sinks[1][plan->b(i)] += db(x, y, g[i]);
                           }
                         });
}

// df receives (input, output, upstream gradient).
template <class F, class DF>
Tensor unary_op(const char* name, const Tensor& a, F f, DF df) {
  std::vector<double> out(a.size());
  const auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i]);
  const Tensor inputs[] = {a};
  return Tensor::from_op(name, a.shape(), std::move(out), inputs,
                         [a, df](std::span<const double> g, std::span<const double> y,
                                 std::span<detail::GradSink> sinks) {
                           const auto ad = a.data();
                           for (std::size_t i = 0; i < g.size(); ++i) sinks[0][i] += df(ad[i], y[i], g[i]);
                         });
}

// Gathers `a` through a flat source map; gradient scatters back.
Tensor gather_op(const char* name, const Tensor& a, Shape shape, std::shared_ptr<const std::vector<std::size_t>> map) {
  std::vector<double> out(map->size());
  const auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[(*map)[i]];
  const Tensor inputs[] = {a};
  return Tensor::from_op(name, std::move(shape), std::move(out), inputs,
                         [map](std::span<const double> g, std::span<const double>, std::span<detail::GradSink> sinks) {
                           for (std::size_t i = 0; i < g.size(); ++i) sinks[0][(*map)[i]] += g[i];
                         });
}

void require_rank(const Tensor& t, std::size_t min_rank, const char* op) {
  if (t.rank() < min_rank) {
    throw DimensionError(std::string(op) + ": expected rank >= " + std::to_string(min_rank) + ", got " +
                         to_string(t.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double g) { return g; },
      [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double g) { return g; },
      [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double g) { return g / y; },
      [](double x, double y, double g) { return -g * x / (y * y); });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      "scale", a, [s](double x) { return x * s; }, [s](double, double, double g) { return g * s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double, double g) { return g; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y, double g) { return g * y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); }, [](double x, double, double g) { return g / x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op("sigmoid", a, stable_sigmoid, [](double, double y, double g) { return g * y * (1.0 - y); });
}

Tensor gelu(const Tensor& a) {
  return unary_op(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double, double g) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return g * (cdf + x * pdf);
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape().back();
  const std::size_t kb = b.shape()[b.rank() - 2];
  const std::size_t n = b.shape().back();
  auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  };
  if (k != kb) throw mismatch();

  Shape out_shape;
  std::vector<double> out;
  const Tensor inputs[] = {a, b};

  if (b.rank() == 2) {
    // Fold all leading axes of `a` into rows.
    out_shape.assign(a.shape().begin(), a.shape().end() - 1);
    const std::size_t M = numel(out_shape);
    out_shape.push_back(n);
    out.assign(M * n, 0.0);
    as_matrix(std::span<double>(out), 0, M, n).noalias() = as_matrix(a.data(), 0, M, k) * as_matrix(b.data(), 0, k, n);
    return Tensor::from_op("matmul", std::move(out_shape), std::move(out), inputs,
                           [a, b, M, k, n](std::span<const double> g, std::span<const double>,
                                           std::span<detail::GradSink> sinks) {
                             const auto G = as_matrix(g, 0, M, n);
                             if (!sinks[0].empty())
                               as_matrix(sinks[0], 0, M, k).noalias() += G * as_matrix(b.data(), 0, k, n).transpose();
                             if (!sinks[1].empty())
                               as_matrix(sinks[1], 0, k, n).noalias() += as_matrix(a.data(), 0, M, k).transpose() * G;
                           });
  }

  const bool shared_left = a.rank() == 2;
  if (!shared_left && Shape(a.shape().begin(), a.shape().end() - 2) != Shape(b.shape().begin(), b.shape().end() - 2)) {
    throw mismatch();
  }
  out_shape.assign(b.shape().begin(), b.shape().end() - 2);
  const std::size_t batch = numel(out_shape);
  out_shape.push_back(m);
  out_shape.push_back(n);
  out.assign(batch * m * n, 0.0);
  const std::size_t a_step = shared_left ? 0 : m * k;
  for (std::size_t i = 0; i < batch; ++i) {
    as_matrix(std::span<double>(out), i * m * n, m, n).noalias() =
        as_matrix(a.data(), i * a_step, m, k) * as_matrix(b.data(), i * k * n, k, n);
  }
  return Tensor::from_op("matmul", std::move(out_shape), std::move(out), inputs,
                         [a, b, batch, m, k, n, a_step](std::span<const double> g, std::span<const double>,
                                                        std::span<detail::GradSink> sinks) {
                           for (std::size_t i = 0; i < batch; ++i) {
                             const auto G = as_matrix(g, i * m * n, m, n);
                             if (!sinks[0].empty())
                               as_matrix(sinks[0], i * a_step, m, k).noalias() +=
                                   G * as_matrix(b.data(), i * k * n, k, n).transpose();
                             if (!sinks[1].empty())
                               as_matrix(sinks[1], i * k * n, k, n).noalias() +=
                                   as_matrix(a.data(), i * a_step, m, k).transpose() * G;
                           }
                         });
}

Tensor permute(const Tensor& a, std::span<const std::size_t> axes) {
  if (axes.size() != a.rank()) throw DimensionError("permute: axis count does not match " + to_string(a.shape()));
  std::vector<bool> used(axes.size(), false);
  Shape out_shape(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= a.rank() || used[axes[i]]) throw DimensionError("permute: invalid axis order");
    used[axes[i]] = true;
    out_shape[i] = a.shape()[axes[i]];
  }
  const auto src_st = strides_of(a.shape());
  std::vector<std::size_t> st(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) st[i] = src_st[axes[i]];
  const std::size_t n = a.size();
  auto map = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(axes.size(), 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*map)[i] = pos;
    for (std::size_t ax = axes.size(); ax-- > 0;) {
      ++idx[ax];
      pos += st[ax];
      if (idx[ax] < out_shape[ax]) break;
      pos -= st[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return gather_op("permute", a, std::move(out_shape), std::move(map));
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
  return permute(a, axes);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  const Tensor inputs[] = {a};
  return Tensor::from_op("reshape", std::move(shape), std::move(out), inputs,
                         [](std::span<const double> g, std::span<const double>, std::span<detail::GradSink> sinks) {
                           for (std::size_t i = 0; i < g.size(); ++i) sinks[0][i] += g[i];
                         });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  Broadcast plan = make_broadcast(a.shape(), shape, "broadcast_to");
  if (plan.out != shape) {
    throw DimensionError("broadcast_to: cannot expand " + to_string(a.shape()) + " to " + to_string(shape));
  }
  if (plan.ia.empty()) {
    plan.ia.resize(a.size());
    std::iota(plan.ia.begin(), plan.ia.end(), 0);
  }
  return gather_op("broadcast_to", a, shape, std::make_shared<const std::vector<std::size_t>>(std::move(plan.ia)));
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + to_string(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != ref.size()) throw DimensionError("concat: rank mismatch " + to_string(s) + " vs " + to_string(ref));
    out_shape[axis] += s[axis];
    s[axis] = ref[axis];
    if (s != ref) throw DimensionError("concat: shape mismatch " + to_string(p.shape()) + " vs " + to_string(ref));
  }
  const std::size_t outer = numel(Shape(ref.begin(), ref.begin() + std::ptrdiff_t(axis)));
  const std::size_t inner = numel(Shape(ref.begin() + std::ptrdiff_t(axis) + 1, ref.end()));
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) widths.push_back(p.shape()[axis] * inner);
  const std::size_t row = out_shape[axis] * inner;

  std::vector<double> out(numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t col = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      std::copy_n(parts[p].data().begin() + std::ptrdiff_t(o * widths[p]), widths[p],
                  out.begin() + std::ptrdiff_t(o * row + col));
      col += widths[p];
    }
  }
  return Tensor::from_op("concat", std::move(out_shape), std::move(out), parts,
                         [outer, row, widths](std::span<const double> g, std::span<const double>,
                                              std::span<detail::GradSink> sinks) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             std::size_t col = 0;
                             for (std::size_t p = 0; p < widths.size(); ++p) {
                               if (!sinks[p].empty()) {
                                 for (std::size_t i = 0; i < widths[p]; ++i)
                                   sinks[p][o * widths[p] + i] += g[o * row + col + i];
                               }
                               col += widths[p];
                             }
                           }
                         });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank() || start + length > a.shape()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of bounds for axis " + std::to_string(axis) + " of " + to_string(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  const std::size_t outer = numel(Shape(a.shape().begin(), a.shape().begin() + std::ptrdiff_t(axis)));
  const std::size_t inner = numel(Shape(a.shape().begin() + std::ptrdiff_t(axis) + 1, a.shape().end()));
  auto map = std::make_shared<std::vector<std::size_t>>();
  map->reserve(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < length * inner; ++i) map->push_back((o * a.shape()[axis] + start) * inner + i);
  return gather_op("slice", a, std::move(out_shape), std::move(map));
}

Tensor index_select(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank(a, 1, "index_select");
  const std::size_t inner = a.size() / std::max<std::size_t>(a.shape()[0], 1);
  Shape out_shape = a.shape();
  out_shape[0] = rows.size();
  auto map = std::make_shared<std::vector<std::size_t>>();
  map->reserve(rows.size() * inner);
  for (std::size_t r : rows) {
    if (r >= a.shape()[0]) throw DimensionError("index_select: row " + std::to_string(r) + " out of range");
    for (std::size_t i = 0; i < inner; ++i) map->push_back(r * inner + i);
  }
  return gather_op("index_select", a, std::move(out_shape), std::move(map));
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const Tensor inputs[] = {a};
  return Tensor::from_op("sum", Shape{}, {s}, inputs,
                         [](std::span<const double> g, std::span<const double>, std::span<detail::GradSink> sinks) {
                           for (double& v : sinks[0]) v += g[0];
                         });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DomainError("mean of an empty tensor");
  return scale(sum(a), 1.0 / double(a.size()));
}

Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim) {
  if (axis >= a.rank()) throw DimensionError("sum_axis: axis out of range for " + to_string(a.shape()));
  const std::size_t len = a.shape()[axis];
  const std::size_t outer = numel(Shape(a.shape().begin(), a.shape().begin() + std::ptrdiff_t(axis)));
  const std::size_t inner = numel(Shape(a.shape().begin() + std::ptrdiff_t(axis) + 1, a.shape().end()));
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + std::ptrdiff_t(axis));
  }
  std::vector<double> out(outer * inner, 0.0);
  const auto ad = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += ad[(o * len + l) * inner + i];
  const Tensor inputs[] = {a};
  return Tensor::from_op("sum_axis", std::move(out_shape), std::move(out), inputs,
                         [outer, len, inner](std::span<const double> g, std::span<const double>,
                                             std::span<detail::GradSink> sinks) {
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t l = 0; l < len; ++l)
                               for (std::size_t i = 0; i < inner; ++i)
                                 sinks[0][(o * len + l) * inner + i] += g[o * inner + i];
                         });
}

Tensor mean_axis(const Tensor& a, std::size_t axis, bool keepdim) {
  const std::size_t len = a.dim(axis);
  if (len == 0) throw DomainError("mean_axis over an empty axis");
  return scale(sum_axis(a, axis, keepdim), 1.0 / double(len));
}

Tensor softmax_rows(const Tensor& x, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("softmax_rows: temperature must be positive");
  require_rank(x, 1, "softmax_rows");
  const std::size_t n = x.shape().back();
  const std::size_t rows = n == 0 ? 0 : x.size() / n;
  std::vector<double> out(x.size());
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp((in[j] - mx) / temperature));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  const Tensor inputs[] = {x};
  return Tensor::from_op("softmax_rows", x.shape(), std::move(out), inputs,
                         [rows, n, temperature](std::span<const double> g, std::span<const double> y,
                                                std::span<detail::GradSink> sinks) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
                             for (std::size_t j = 0; j < n; ++j)
                               sinks[0][r * n + j] += y[r * n + j] * (g[r * n + j] - dot) / temperature;
                           }
                         });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank(x, 1, "log_softmax_rows");
  const std::size_t n = x.shape().back();
  const std::size_t rows = n == 0 ? 0 : x.size() / n;
  std::vector<double> out(x.size());
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = in[j] - lse;
  }
  const Tensor inputs[] = {x};
  return Tensor::from_op("log_softmax_rows", x.shape(), std::move(out), inputs,
                         [rows, n](std::span<const double> g, std::span<const double> y,
                                   std::span<detail::GradSink> sinks) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             double gs = 0.0;
                             for (std::size_t j = 0; j < n; ++j) gs += g[r * n + j];
                             for (std::size_t j = 0; j < n; ++j)
                               sinks[0][r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * gs;
                           }
                         });
}

Tensor l2_normalize(const Tensor& x, double eps) {
  require_rank(x, 1, "l2_normalize");
  const std::size_t d = x.shape().back();
  const std::size_t rows = d == 0 ? 0 : x.size() / d;
  // x / max(|x|, sqrt(eps)): rows above the floor come out exactly unit-norm,
  // clamped rows are scaled by a constant.
  auto norms = std::make_shared<std::vector<double>>(rows);
  auto clamped = std::make_shared<std::vector<char>>(rows, 0);
  std::vector<double> out(x.size());
  const auto xd = x.data();
  const double floor = std::sqrt(eps);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += xd[r * d + j] * xd[r * d + j];
    double nrm = std::sqrt(s);
    if (nrm < floor) nrm = floor, (*clamped)[r] = 1;
    if (nrm == 0.0) throw NumericError("l2_normalize: row " + std::to_string(r) + " is the zero vector");
    (*norms)[r] = nrm;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xd[r * d + j] / nrm;
  }
  const Tensor inputs[] = {x};
  return Tensor::from_op("l2_normalize", x.shape(), std::move(out), inputs,
                         [rows, d, norms, clamped](std::span<const double> g, std::span<const double> y,
                                                   std::span<detail::GradSink> sinks) {
                           // d/dx (x/n) = (g - y (y.g)) / n, or g / n once clamped
                           for (std::size_t r = 0; r < rows; ++r) {
                             double dot = 0.0;
                             if (!(*clamped)[r])
                               for (std::size_t j = 0; j < d; ++j) dot += y[r * d + j] * g[r * d + j];
                             const double inv = 1.0 / (*norms)[r];
                             for (std::size_t j = 0; j < d; ++j)
                               sinks[0][r * d + j] += (g[r * d + j] - y[r * d + j] * dot) * inv;
                           }
                         });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank(x, 1, "layer_norm");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " + to_string(gain.shape()) +
                         " and " + to_string(bias.shape()));
  }
  const std::size_t rows = d == 0 ? 0 : x.size() / d;
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xd[r * d + j];
    mu /= double(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xd[r * d + j] - mu) * (xd[r * d + j] - mu);
    var /= double(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xd[r * d + j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  const Tensor inputs[] = {x, gain, bias};
  return Tensor::from_op(
      "layer_norm", x.shape(), std::move(out), inputs,
      [gain, rows, d, xhat, rstd](std::span<const double> g, std::span<const double>,
                                  std::span<detail::GradSink> sinks) {
        const auto gd = gain.data();
        std::vector<double> dh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double m1 = 0.0;
          double m2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double gj = g[r * d + j];
            const double h = (*xhat)[r * d + j];
            dh[j] = gj * gd[j];
            m1 += dh[j];
            m2 += dh[j] * h;
            if (!sinks[1].empty()) sinks[1][j] += gj * h;
            if (!sinks[2].empty()) sinks[2][j] += gj;
          }
          if (sinks[0].empty()) continue;
          m1 /= double(d);
          m2 /= double(d);
          for (std::size_t j = 0; j < d; ++j)
            sinks[0][r * d + j] += (*rstd)[r] * (dh[j] - m1 - (*xhat)[r * d + j] * m2);
        }
      });
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, Tensor* weights) {
  require_rank(q, 2, "attention");
  const std::size_t d = q.shape().back();
  if (k.shape().back() != d) {
    throw DimensionError("attention: query/key width mismatch " + to_string(q.shape()) + " vs " + to_string(k.shape()));
  }
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(double(d)));
  Tensor w = softmax_rows(scores);
  if (weights) *weights = w;
  return matmul(w, v);
}

Tensor unfold(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad_h,
              std::size_t pad_w) {
  if (x.rank() != 4) throw DimensionError("unfold: expected [B, C, H, W], got " + to_string(x.shape()));
  if (kh == 0 || kw == 0 || stride == 0) throw DomainError("unfold: kernel and stride must be positive");
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (H + 2 * pad_h < kh || W + 2 * pad_w < kw) {
    throw DimensionError("unfold: kernel larger than padded input " + to_string(x.shape()));
  }
  const std::size_t Ho = (H + 2 * pad_h - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * pad_w - kw) / stride + 1;
  const std::size_t K = C * kh * kw;
  const std::size_t L = Ho * Wo;
  constexpr std::size_t kPad = static_cast<std::size_t>(-1);
  auto map = std::make_shared<std::vector<std::size_t>>(B * K * L, kPad);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < kh; ++i)
        for (std::size_t j = 0; j < kw; ++j) {
          const std::size_t row = (c * kh + i) * kw + j;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const std::ptrdiff_t y = std::ptrdiff_t(oy * stride + i) - std::ptrdiff_t(pad_h);
            if (y < 0 || y >= std::ptrdiff_t(H)) continue;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const std::ptrdiff_t xx = std::ptrdiff_t(ox * stride + j) - std::ptrdiff_t(pad_w);
              if (xx < 0 || xx >= std::ptrdiff_t(W)) continue;
              (*map)[(b * K + row) * L + oy * Wo + ox] = ((b * C + c) * H + std::size_t(y)) * W + std::size_t(xx);
            }
          }
        }
  std::vector<double> out(map->size(), 0.0);
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    if ((*map)[i] != kPad) out[i] = xd[(*map)[i]];
  const Tensor inputs[] = {x};
  return Tensor::from_op("unfold", Shape{B, K, L}, std::move(out), inputs,
                         [map](std::span<const double> g, std::span<const double>, std::span<detail::GradSink> sinks) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if ((*map)[i] != kPad) sinks[0][(*map)[i]] += g[i];
                         });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw DimensionError("conv2d: expected 4-D input and weight, got " + to_string(x.shape()) + " and " +
                         to_string(w.shape()));
  }
  const std::size_t Co = w.shape()[0], Ci = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
  if (x.shape()[1] != Ci) {
    throw DimensionError("conv2d: input channels " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  }
  if (b.shape() != Shape{Co}) throw DimensionError("conv2d: bias must be [" + std::to_string(Co) + "]");
  const std::size_t B = x.shape()[0], H = x.shape()[2], W = x.shape()[3];
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor cols = unfold(x, kh, kw, stride, pad);
  Tensor y = matmul(reshape(w, {Co, Ci * kh * kw}), cols);
  y = add(y, reshape(b, {Co, 1}));
  return reshape(y, {B, Co, Ho, Wo});
}

Tensor kl_div_rows(const Tensor& p, const Tensor& q, double clamp) {
  if (p.shape() != q.shape() || p.rank() != 2) {
    throw DimensionError("kl_div_rows: expected equal 2-D shapes, got " + to_string(p.shape()) + " and " +
                         to_string(q.shape()));
  }
  const std::size_t rows = p.shape()[0];
  if (rows == 0) throw DomainError("kl_div_rows: no rows");
  const auto pd = p.data();
  const auto qd = q.data();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    total += pd[i] * (std::log(std::max(pd[i], clamp)) - std::log(std::max(qd[i], clamp)));
  }
  total /= double(rows);
  const Tensor inputs[] = {p, q};
  return Tensor::from_op("kl_div_rows", Shape{}, {total}, inputs,
                         [p, q, rows, clamp](std::span<const double> g, std::span<const double>,
                                             std::span<detail::GradSink> sinks) {
                           const auto pd = p.data();
                           const auto qd = q.data();
                           const double s = g[0] / double(rows);
                           for (std::size_t i = 0; i < pd.size(); ++i) {
                             if (!sinks[0].empty()) {
                               const double lp = std::log(std::max(pd[i], clamp));
                               const double lq = std::log(std::max(qd[i], clamp));
                               sinks[0][i] += s * (lp - lq + (pd[i] > clamp ? 1.0 : 0.0));
                             }
                             if (!sinks[1].empty() && qd[i] > clamp) sinks[1][i] -= s * pd[i] / qd[i];
                           }
                         });
}

}  // namespace neuroclip
