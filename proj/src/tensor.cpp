#include "fedccrl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace fedccrl {

std::string shape_to_string(const Shape& s) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << ',';
    out << s[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

namespace {

bool wants_grad(const TensorStorage& s) { return s.requires_grad || s.node != nullptr; }

std::vector<double>& ensure_grad(TensorStorage& s) {
  if (s.grad.empty()) s.grad.assign(s.data.size(), 0.0);
  return s.grad;
}

struct BroadcastPlan {
  Shape out_shape;
  std::vector<std::size_t> a_strides;  // 0 on broadcast axes
  std::vector<std::size_t> b_strides;
  std::size_t numel = 1;
  bool same_shape = false;
};

BroadcastPlan make_plan(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  if (a == b) {
    p.out_shape = a;
    p.numel = shape_numel(a);
    p.same_shape = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  p.out_shape.resize(rank);
  Shape ap(rank, 1), bp(rank, 1);
  std::copy(a.begin(), a.end(), ap.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), bp.begin() + (rank - b.size()));
  for (std::size_t d = 0; d < rank; ++d) {
    if (ap[d] != bp[d] && ap[d] != 1 && bp[d] != 1) {
      throw TensorError(std::string(op) + ": shapes do not broadcast: " + shape_to_string(a) +
                        " vs " + shape_to_string(b));
    }
    p.out_shape[d] = std::max(ap[d], bp[d]);
  }
  p.numel = shape_numel(p.out_shape);
  // Row-major strides, zeroed on broadcast axes.
  p.a_strides.assign(rank, 0);
  p.b_strides.assign(rank, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t d = rank; d-- > 0;) {
    if (ap[d] != 1) p.a_strides[d] = sa;
    if (bp[d] != 1) p.b_strides[d] = sb;
    sa *= ap[d];
    sb *= bp[d];
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_pair(const BroadcastPlan& p, F&& f) {
  if (p.same_shape) {
    for (std::size_t i = 0; i < p.numel; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = p.out_shape.size();
  std::vector<std::size_t> coord(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < p.numel; ++i) {
    f(i, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++coord[d];
      ia += p.a_strides[d];
      ib += p.b_strides[d];
      if (coord[d] < p.out_shape[d]) break;
      ia -= p.a_strides[d] * coord[d];
      ib -= p.b_strides[d] * coord[d];
      coord[d] = 0;
    }
  }
}

void check_finite_forward(const std::vector<double>& data, const char* op) {
  for (double v : data) {
    if (std::isnan(v)) throw TensorError(std::string("NaN in forward output of ") + op);
  }
}

// [outer, axis_extent, inner] view of a shape around one axis.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  v.extent = s[axis];
  for (std::size_t d = 0; d < axis; ++d) v.outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) v.inner *= s[d];
  return v;
}

}  // namespace

Tensor make_result(Shape shape, std::vector<double> data, std::string op, std::vector<Tensor> inputs,
                   std::function<void(const TensorStorage&)> backprop) {
  check_finite_forward(data, op.c_str());
  auto s = std::make_shared<TensorStorage>();
  s->shape = std::move(shape);
  s->data = std::move(data);
  bool attached = false;
  for (const auto& t : inputs) attached = attached || t.attached();
  if (attached) {
    auto node = std::make_shared<TapeNode>();
    node->op = std::move(op);
    node->parents.reserve(inputs.size());
    for (const auto& t : inputs) node->parents.push_back(t.storage());
    node->backprop = std::move(backprop);
    s->node = std::move(node);
  }
  return Tensor(std::move(s));
}

Tensor Tensor::zeros(Shape shape) {
  auto s = std::make_shared<TensorStorage>();
  s->data.assign(shape_numel(shape), 0.0);
  s->shape = std::move(shape);
  return Tensor(std::move(s));
}

Tensor Tensor::full(Shape shape, double value) {
  auto s = std::make_shared<TensorStorage>();
  s->data.assign(shape_numel(shape), value);
  s->shape = std::move(shape);
  return Tensor(std::move(s));
}

Tensor Tensor::scalar(double value) { return full({}, value); }

Tensor Tensor::from_data(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw TensorError("from_data: shape " + shape_to_string(shape) + " needs " +
                      std::to_string(shape_numel(shape)) + " values, got " +
                      std::to_string(values.size()));
  }
  auto s = std::make_shared<TensorStorage>();
  s->shape = std::move(shape);
  s->data = std::move(values);
  return Tensor(std::move(s));
}

double Tensor::item() const {
  if (size() != 1) {
    throw TensorError("item: expected a single-element tensor, got shape " +
                      shape_to_string(shape()));
  }
  return s_->data[0];
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw TensorError("grad: no gradient accumulated");
  return s_->grad;
}

void Tensor::zero_grad() { s_->grad.assign(s_->data.size(), 0.0); }

Tensor Tensor::clone() const {
  auto s = std::make_shared<TensorStorage>();
  s->shape = s_->shape;
  s->data = s_->data;
  return Tensor(std::move(s));
}

namespace {

// Shared skeleton for broadcasting binary elementwise ops.
template <typename Fwd, typename Bwd>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd partials) {
  BroadcastPlan plan = make_plan(a.shape(), b.shape(), name);
  std::vector<double> out(plan.numel);
  const auto ad = a.data();
  const auto bd = b.data();
  for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = fwd(ad[ia], bd[ib]);
  });
  auto as = a.storage();
  auto bs = b.storage();
  return make_result(
      plan.out_shape, std::move(out), name, {a, b},
      [plan, as, bs, partials](const TensorStorage& o) {
        const bool ga = wants_grad(*as);
        const bool gb = wants_grad(*bs);
        if (!ga && !gb) return;
        if (ga) ensure_grad(*as);
        if (gb) ensure_grad(*bs);
        for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          const double g = o.grad[i];
          const auto [da, db] = partials(as->data[ia], bs->data[ib]);
          if (ga) as->grad[ia] += g * da;
          if (gb) bs->grad[ib] += g * db;
        });
      });
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Bwd dfdx) {
  std::vector<double> out(a.size());
  const auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i]);
  auto as = a.storage();
  return make_result(a.shape(), std::move(out), name, {a},
                     [as, dfdx](const TensorStorage& o) {
                       if (!wants_grad(*as)) return;
                       auto& g = ensure_grad(*as);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += o.grad[i] * dfdx(as->data[i], o.data[i]);
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / (y + kDivEpsilon); },
      [](double x, double y) {
        const double d = y + kDivEpsilon;
        return std::pair{1.0 / d, -x / (d * d)};
      });
}

Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor sub(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x + kLogEpsilon); },
      [](double x, double) { return 1.0 / (x + kLogEpsilon); });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  auto as = a.storage();
  return make_result({}, {total}, "sum", {a}, [as](const TensorStorage& o) {
    if (!wants_grad(*as)) return;
    auto& g = ensure_grad(*as);
    for (double& gi : g) gi += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw TensorError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(a.size());
  double total = 0.0;
  for (double v : a.data()) total += v;
  auto as = a.storage();
  return make_result({}, {total * inv}, "mean", {a}, [as, inv](const TensorStorage& o) {
    if (!wants_grad(*as)) return;
    auto& g = ensure_grad(*as);
    for (double& gi : g) gi += o.grad[0] * inv;
  });
}

Tensor sum_last_axis(const Tensor& a) {
  if (a.rank() == 0) throw TensorError("sum_last_axis: rank-0 tensor");
  const std::size_t n = a.shape().back();
  if (n == 0) throw TensorError("sum_last_axis: empty last axis");
  const std::size_t rows = a.size() / n;
  std::vector<double> out(rows, 0.0);
  const auto ad = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r] += ad[r * n + j];
  }
  Shape shape = a.shape();
  shape.back() = 1;
  auto as = a.storage();
  return make_result(std::move(shape), std::move(out), "sum_last_axis", {a},
                     [as, rows, n](const TensorStorage& o) {
                       if (!wants_grad(*as)) return;
                       auto& g = ensure_grad(*as);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < n; ++j) g[r * n + j] += o.grad[r];
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw TensorError("matmul: expected rank-2 operands, got " + shape_to_string(a.shape()) +
                      " and " + shape_to_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw TensorError("matmul: inner dimensions differ: " + shape_to_string(a.shape()) + " vs " +
                      shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ad[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = &bd[kk * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  auto as = a.storage();
  auto bs = b.storage();
  return make_result(
      {m, n}, std::move(out), "matmul", {a, b}, [as, bs, m, k, n](const TensorStorage& o) {
        if (wants_grad(*as)) {
          auto& ga = ensure_grad(*as);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              const double g = o.grad[i * n + j];
              if (g == 0.0) continue;
              for (std::size_t kk = 0; kk < k; ++kk) ga[i * k + kk] += g * bs->data[kk * n + j];
            }
          }
        }
        if (wants_grad(*bs)) {
          auto& gb = ensure_grad(*bs);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double av = as->data[i * k + kk];
              if (av == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) gb[kk * n + j] += av * o.grad[i * n + j];
            }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw TensorError("transpose: expected rank-2, got " + shape_to_string(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(a.size());
  const auto ad = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = ad[i * n + j];
  }
  auto as = a.storage();
  return make_result({n, m}, std::move(out), "transpose", {a},
                     [as, m, n](const TensorStorage& o) {
                       if (!wants_grad(*as)) return;
                       auto& g = ensure_grad(*as);
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw TensorError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                      shape_to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto as = a.storage();
  return make_result(std::move(shape), std::move(out), "reshape", {a},
                     [as](const TensorStorage& o) {
                       if (!wants_grad(*as)) return;
                       auto& g = ensure_grad(*as);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw TensorError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw TensorError("concat: axis out of range");
  Shape out_shape = first;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) {
      throw TensorError("concat: rank mismatch: " + shape_to_string(first) + " vs " +
                        shape_to_string(p.shape()));
    }
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.shape()[d] != first[d]) {
        throw TensorError("concat: shape mismatch off the concat axis: " + shape_to_string(first) +
                          " vs " + shape_to_string(p.shape()));
      }
    }
    total += p.shape()[axis];
  }
  out_shape[axis] = total;
  const AxisView ov = axis_view(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t e = p.shape()[axis];
    const auto pd = p.data();
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy_n(pd.begin() + o * e * ov.inner, e * ov.inner,
                  out.begin() + (o * ov.extent + offset) * ov.inner);
    }
    offset += e;
  }
  std::vector<std::shared_ptr<TensorStorage>> storages;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    storages.push_back(p.storage());
    extents.push_back(p.shape()[axis]);
  }
  return make_result(out_shape, std::move(out), "concat", parts,
                     [storages, extents, ov](const TensorStorage& o) {
                       std::size_t off = 0;
                       for (std::size_t pi = 0; pi < storages.size(); ++pi) {
                         auto& s = *storages[pi];
                         const std::size_t e = extents[pi];
                         if (wants_grad(s)) {
                           auto& g = ensure_grad(s);
                           for (std::size_t ou = 0; ou < ov.outer; ++ou) {
                             const double* src = &o.grad[(ou * ov.extent + off) * ov.inner];
                             double* dst = &g[ou * e * ov.inner];
                             for (std::size_t i = 0; i < e * ov.inner; ++i) dst[i] += src[i];
                           }
                         }
                         off += e;
                       }
                     });
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank()) throw TensorError("narrow: axis out of range");
  if (start + length > a.shape()[axis]) {
    throw TensorError("narrow: window [" + std::to_string(start) + "," +
                      std::to_string(start + length) + ") exceeds extent " +
                      std::to_string(a.shape()[axis]));
  }
  const AxisView av = axis_view(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::vector<double> out(shape_numel(out_shape));
  const auto ad = a.data();
  for (std::size_t o = 0; o < av.outer; ++o) {
    std::copy_n(ad.begin() + (o * av.extent + start) * av.inner, length * av.inner,
                out.begin() + o * length * av.inner);
  }
  auto as = a.storage();
  return make_result(std::move(out_shape), std::move(out), "narrow", {a},
                     [as, av, start, length](const TensorStorage& o) {
                       if (!wants_grad(*as)) return;
                       auto& g = ensure_grad(*as);
                       for (std::size_t ou = 0; ou < av.outer; ++ou) {
                         const double* src = &o.grad[ou * length * av.inner];
                         double* dst = &g[(ou * av.extent + start) * av.inner];
                         for (std::size_t i = 0; i < length * av.inner; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor index_select(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& indices) {
  if (axis >= a.rank()) throw TensorError("index_select: axis out of range");
  const AxisView av = axis_view(a.shape(), axis);
  for (auto ix : indices) {
    if (ix >= av.extent) {
      throw TensorError("index_select: index " + std::to_string(ix) + " out of range for extent " +
                        std::to_string(av.extent));
    }
  }
  Shape out_shape = a.shape();
  out_shape[axis] = indices.size();
  std::vector<double> out(shape_numel(out_shape));
  const auto ad = a.data();
  for (std::size_t o = 0; o < av.outer; ++o) {
    for (std::size_t r = 0; r < indices.size(); ++r) {
      std::copy_n(ad.begin() + (o * av.extent + indices[r]) * av.inner, av.inner,
                  out.begin() + (o * indices.size() + r) * av.inner);
    }
  }
  auto as = a.storage();
  auto idx = indices;
  return make_result(std::move(out_shape), std::move(out), "index_select", {a},
                     [as, av, idx](const TensorStorage& o) {
                       if (!wants_grad(*as)) return;
                       auto& g = ensure_grad(*as);
                       for (std::size_t ou = 0; ou < av.outer; ++ou) {
                         for (std::size_t r = 0; r < idx.size(); ++r) {
                           const double* src = &o.grad[(ou * idx.size() + r) * av.inner];
                           double* dst = &g[(ou * av.extent + idx[r]) * av.inner];
                           for (std::size_t i = 0; i < av.inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw TensorError("softmax: rank-0 tensor");
  const std::size_t n = a.shape().back();
  if (n == 0) throw TensorError("softmax: empty last axis");
  const std::size_t rows = a.size() / n;
  std::vector<double> out(a.size());
  const auto ad = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = &ad[r * n];
    double m = row[0];
    for (std::size_t j = 1; j < n; ++j) m = std::max(m, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = std::exp(row[j] - m);
      denom += out[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= denom;
  }
  auto as = a.storage();
  return make_result(a.shape(), std::move(out), "softmax", {a},
                     [as, rows, n](const TensorStorage& o) {
                       if (!wants_grad(*as)) return;
                       auto& g = ensure_grad(*as);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = &o.data[r * n];
                         const double* gy = &o.grad[r * n];
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                         for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
                       }
                     });
}

Tensor rowmax_detached(const Tensor& a) {
  if (a.rank() == 0) throw TensorError("rowmax: rank-0 tensor");
  const std::size_t n = a.shape().back();
  if (n == 0) throw TensorError("rowmax: empty last axis");
  const std::size_t rows = a.size() / n;
  Shape shape = a.shape();
  shape.back() = 1;
  std::vector<double> out(rows);
  const auto ad = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double m = ad[r * n];
    for (std::size_t j = 1; j < n; ++j) m = std::max(m, ad[r * n + j]);
    out[r] = m;
  }
  return Tensor::from_data(std::move(shape), std::move(out));
}

void backward(const Tensor& root) {
  if (root.size() != 1) {
    throw TensorError("backward: root must be a single-element tensor, got shape " +
                      shape_to_string(root.shape()));
  }
  if (!root.attached()) return;  // constant graph: nothing to do

  // Reverse post-order DFS over the op DAG gives a topological order with
  // every consumer before its inputs.
  std::vector<TensorStorage*> order;
  std::unordered_set<TensorStorage*> seen;
  struct Frame {
    TensorStorage* s;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  TensorStorage* rs = root.storage().get();
  if (rs->node) {
    stack.push_back({rs});
    seen.insert(rs);
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    auto& parents = f.s->node->parents;
    if (f.next < parents.size()) {
      TensorStorage* p = parents[f.next++].get();
      if (p->node && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p});
      }
    } else {
      order.push_back(f.s);
      stack.pop_back();
    }
  }

  // Gradients of op results are recomputed per sweep; leaf gradients persist.
  for (TensorStorage* s : order) s->grad.assign(s->data.size(), 0.0);
  ensure_grad(*rs);
  rs->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    (*it)->node->backprop(**it);
  }
}

}  // namespace fedccrl
