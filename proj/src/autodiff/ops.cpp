#include "cag/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <cblas.h>

namespace cag::ad {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

void record(const char* op, std::initializer_list<const Tensor*> inputs, const Tensor& out, BackwardFn fn) {
  std::vector<ImplPtr> impls;
  impls.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    if (t && t->defined()) impls.push_back(t->impl());
  }
  active_tape().record(op, std::move(impls), out.impl(), std::move(fn));
}

bool wants(const ImplPtr& p) { return p && p->requires_grad; }

[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t d = shape.size(); d-- > 1;) strides[d - 1] = strides[d] * shape[d];
  return strides;
}

// Strides of `in` laid over `out` (right-aligned); broadcast dims get 0.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> result(out.size(), 0);
  const auto in_strides = contiguous_strides(in);
  const std::size_t offset = out.size() - in.size();
  for (std::size_t d = 0; d < in.size(); ++d) {
    result[offset + d] = in[d] == 1 ? 0 : in_strides[d];
  }
  return result;
}

Shape broadcast_shape(const std::string& op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) shape_fail(op, a, b);
    out[i] = std::max(da, db);
  }
  return out;
}

template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        F&& f) {
  const std::size_t rank = out.size();
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, oa, ob);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryKind { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
  static const char* names[] = {"add", "sub", "mul"};
  const char* name = names[static_cast<int>(kind)];
  const Shape out_shape = broadcast_shape(name, a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(shape_numel(out_shape));
  const bool same = a.shape() == b.shape();
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = kind == BinaryKind::add ? av[i] + bv[i] : kind == BinaryKind::sub ? av[i] - bv[i] : av[i] * bv[i];
    }
  } else {
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      out[o] = kind == BinaryKind::add ? av[ia] + bv[ib] : kind == BinaryKind::sub ? av[ia] - bv[ib] : av[ia] * bv[ib];
    });
  }
  const bool rg = any_requires_grad({&a, &b});
  Tensor result = make_result(out_shape, std::move(out), rg);
  if (rg) {
    ImplPtr ai = a.impl();
    ImplPtr bi = b.impl();
    record(name, {&a, &b}, result, [ai, bi, out_shape, sa, sb, kind, same](std::span<const double> g) {
      const bool ga_on = wants(ai);
      const bool gb_on = wants(bi);
      double* ga = ga_on ? grad_buffer(*ai).data() : nullptr;
      double* gb = gb_on ? grad_buffer(*bi).data() : nullptr;
      const double* av = ai->values.data();
      const double* bv = bi->values.data();
      auto body = [&](std::size_t o, std::size_t ia, std::size_t ib) {
        switch (kind) {
          case BinaryKind::add:
            if (ga) ga[ia] += g[o];
            if (gb) gb[ib] += g[o];
            break;
          case BinaryKind::sub:
            if (ga) ga[ia] += g[o];
            if (gb) gb[ib] -= g[o];
            break;
          case BinaryKind::mul:
            if (ga) ga[ia] += g[o] * bv[ib];
            if (gb) gb[ib] += g[o] * av[ia];
            break;
        }
      };
      if (same) {
        for (std::size_t i = 0; i < g.size(); ++i) body(i, i, i);
      } else {
        for_each_broadcast(out_shape, sa, sb, body);
      }
    });
  }
  return result;
}

blasint blas_int(std::size_t n) { return static_cast<blasint>(n); }

// c[M,P] += a[M,K] * b[K,P]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t p) {
  if (m == 0 || k == 0 || p == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_int(m), blas_int(p), blas_int(k), 1.0, a,
              blas_int(k), b, blas_int(p), 1.0, c, blas_int(p));
}

// da[M,K] += dc[M,P] * b[K,P]^T
void gemm_nt(const double* dc, const double* b, double* da, std::size_t m, std::size_t k, std::size_t p) {
  if (m == 0 || k == 0 || p == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, blas_int(m), blas_int(k), blas_int(p), 1.0, dc,
              blas_int(p), b, blas_int(p), 1.0, da, blas_int(k));
}

// db[K,P] += a[M,K]^T * dc[M,P]
void gemm_tn(const double* a, const double* dc, double* db, std::size_t m, std::size_t k, std::size_t p) {
  if (m == 0 || k == 0 || p == 0) return;
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blas_int(k), blas_int(p), blas_int(m), 1.0, a,
              blas_int(k), dc, blas_int(p), 1.0, db, blas_int(p));
}

struct FeatureDims {
  std::size_t batch;
  std::size_t frames;
  std::size_t joints;
  std::size_t channels;
  bool batched;
};

FeatureDims feature_dims(const std::string& op, const Tensor& x) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
  throw ShapeError(op + ": expected [T, N, C] or [B, T, N, C], got " + shape_str(x.shape()));
}

Shape feature_shape(const FeatureDims& d, std::size_t frames, std::size_t channels) {
  if (d.batched) return {d.batch, frames, d.joints, channels};
  return {frames, d.joints, channels};
}

Tensor linear_last_axis(const char* op, const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.rank() != 2) throw ShapeError(std::string(op) + ": weight must be 2-D, got " + shape_str(w.shape()));
  if (x.rank() < 1 || x.dim(-1) != w.dim(0)) shape_fail(op, x.shape(), w.shape());
  const std::size_t din = w.dim(0);
  const std::size_t dout = w.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != dout)) shape_fail(op, w.shape(), bias.shape());
  const std::size_t rows = x.numel() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  std::vector<double> out(rows * dout, 0.0);
  gemm_nn(x.values().data(), w.values().data(), out.data(), rows, din, dout);
  if (bias.defined()) {
    const auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < dout; ++j) out[r * dout + j] += bv[j];
  }
  add_macs(rows * din * dout);
  const bool rg = any_requires_grad({&x, &w, &bias});
  Tensor result = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    ImplPtr wi = w.impl();
    ImplPtr bi = bias.defined() ? bias.impl() : nullptr;
    record(op, {&x, &w, &bias}, result, [xi, wi, bi, rows, din, dout](std::span<const double> g) {
      if (wants(xi)) gemm_nt(g.data(), wi->values.data(), grad_buffer(*xi).data(), rows, din, dout);
      if (wants(wi)) gemm_tn(xi->values.data(), g.data(), grad_buffer(*wi).data(), rows, din, dout);
      if (wants(bi)) {
        auto& gb = grad_buffer(*bi);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < dout; ++j) gb[j] += g[r * dout + j];
      }
    });
  }
  return result;
}

void require_odd_kernel(const char* op, std::size_t k) {
  if (k % 2 == 0) throw ShapeError(std::string(op) + ": temporal kernel size must be odd, got " + std::to_string(k));
}

std::size_t strided_length(std::size_t frames, std::size_t stride) { return (frames - 1) / stride + 1; }

}  // namespace

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul); }

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= factor;
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("scale", {&x}, result, [xi, factor](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    });
  }
  return result;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  const Shape out_shape = broadcast_shape("broadcast_to", x.shape(), shape);
  if (out_shape != shape) shape_fail("broadcast_to", x.shape(), shape);
  const auto sx = broadcast_strides(x.shape(), shape);
  const std::vector<std::size_t> none(shape.size(), 0);
  const auto xv = x.values();
  std::vector<double> out(shape_numel(shape));
  for_each_broadcast(shape, sx, none, [&](std::size_t o, std::size_t ix, std::size_t) { out[o] = xv[ix]; });
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(shape, std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("broadcast_to", {&x}, result, [xi, shape, sx, none](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for_each_broadcast(shape, sx, none, [&](std::size_t o, std::size_t ix, std::size_t) { gx[ix] += g[o]; });
    });
  }
  return result;
}

// ----------------------------------------------------------------- reductions

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result({1}, {total}, rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("sum", {&x}, result, [xi](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (double& v : gx) v += g[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

// ---------------------------------------------------------------------- shape

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape);
  std::vector<double> out(x.values().begin(), x.values().end());
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(std::move(shape), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("reshape", {&x}, result, [xi](std::span<const double> g) { accumulate_grad(*xi, g); });
  }
  return result;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  if (axes.size() != rank) throw ShapeError("permute: axes length does not match rank " + std::to_string(rank));
  std::vector<bool> seen(rank, false);
  Shape out_shape(rank);
  const auto in_strides = contiguous_strides(x.shape());
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (axes[d] >= rank || seen[axes[d]]) throw ShapeError("permute: axes are not a permutation");
    seen[axes[d]] = true;
    out_shape[d] = x.dim(static_cast<int>(axes[d]));
    src_strides[d] = in_strides[axes[d]];
  }
  const std::vector<std::size_t> none(rank, 0);
  const auto xv = x.values();
  std::vector<double> out(x.numel());
  for_each_broadcast(out_shape, src_strides, none, [&](std::size_t o, std::size_t ix, std::size_t) { out[o] = xv[ix]; });
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(out_shape, std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("permute", {&x}, result, [xi, out_shape, src_strides, none](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for_each_broadcast(out_shape, src_strides, none, [&](std::size_t o, std::size_t ix, std::size_t) { gx[ix] += g[o]; });
    });
  }
  return result;
}

Tensor select(const Tensor& x, int axis, std::size_t index) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const Shape& s = x.shape();
  if (index >= s[a]) throw ShapeError("select: index " + std::to_string(index) + " out of range for " + shape_str(s));
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < a; ++d) outer *= s[d];
  for (std::size_t d = a + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t len = s[a];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d)
    if (d != a) out_shape.push_back(s[d]);
  if (out_shape.empty()) out_shape.push_back(1);
  const auto xv = x.values();
  std::vector<double> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + (o * len + index) * inner, inner, out.begin() + o * inner);
  }
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("select", {&x}, result, [xi, outer, inner, len, index](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) gx[(o * len + index) * inner + i] += g[o * inner + i];
    });
  }
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t a = normalize_axis(axis, first.size());
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < a; ++d) outer *= first[d];
  for (std::size_t d = a + 1; d < first.size(); ++d) inner *= first[d];
  std::vector<std::size_t> lengths;
  std::size_t total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_fail("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != a && s[d] != first[d]) shape_fail("concat", first, s);
    lengths.push_back(s[a]);
    total += s[a];
    rg = rg || any_requires_grad({&p});
  }
  Shape out_shape = first;
  out_shape[a] = total;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    const std::size_t block = lengths[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * block, block, out.begin() + o * total * inner + offset * inner);
    }
    offset += lengths[k];
  }
  Tensor result = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    std::vector<ImplPtr> impls;
    for (const Tensor& p : parts) impls.push_back(p.impl());
    active_tape().record("concat", impls, result.impl(), [impls, lengths, outer, inner, total](std::span<const double> g) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < impls.size(); ++k) {
        const std::size_t block = lengths[k] * inner;
        if (wants(impls[k])) {
          auto& gp = grad_buffer(*impls[k]);
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < block; ++i) gp[o * block + i] += g[o * total * inner + offset * inner + i];
        }
        offset += lengths[k];
      }
    });
  }
  return result;
}

Tensor stack(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t a = normalize_axis(axis, first.size() + 1);
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const Tensor& p : parts) {
    if (p.shape() != first) shape_fail("stack", first, p.shape());
    Shape s = p.shape();
    s.insert(s.begin() + static_cast<long>(a), 1);
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, static_cast<int>(a));
}

Tensor index_select(const Tensor& x, int axis, const std::vector<std::size_t>& indices) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const Shape& s = x.shape();
  if (indices.empty()) throw ShapeError("index_select: empty index list");
  for (std::size_t i : indices)
    if (i >= s[a]) throw ShapeError("index_select: index " + std::to_string(i) + " out of range for " + shape_str(s));
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < a; ++d) outer *= s[d];
  for (std::size_t d = a + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t len = s[a];
  const std::size_t count = indices.size();
  Shape out_shape = s;
  out_shape[a] = count;
  const auto xv = x.values();
  std::vector<double> out(outer * count * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < count; ++j)
      std::copy_n(xv.begin() + (o * len + indices[j]) * inner, inner, out.begin() + (o * count + j) * inner);
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("index_select", {&x}, result, [xi, indices, outer, inner, len, count](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < count; ++j)
          for (std::size_t i = 0; i < inner; ++i) gx[(o * len + indices[j]) * inner + i] += g[(o * count + j) * inner + i];
    });
  }
  return result;
}

// ------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) shape_fail("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(-2);
  const std::size_t k = a.dim(-1);
  const std::size_t p = b.dim(-1);
  if (b.dim(-2) != k) shape_fail("matmul", a.shape(), b.shape());
  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  const Shape batch = broadcast_shape("matmul", a_batch, b_batch);
  // Batch strides measured in whole matrices.
  auto sa = broadcast_strides(a_batch, batch);
  auto sb = broadcast_strides(b_batch, batch);
  for (auto& v : sa) v *= m * k;
  for (auto& v : sb) v *= k * p;
  const std::size_t nbatch = shape_numel(batch);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(p);
  std::vector<double> out(nbatch * m * p, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for_each_broadcast(batch, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    gemm_nn(av + ia, bv + ib, out.data() + o * m * p, m, k, p);
  });
  add_macs(nbatch * m * k * p);
  const bool rg = any_requires_grad({&a, &b});
  Tensor result = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    ImplPtr ai = a.impl();
    ImplPtr bi = b.impl();
    record("matmul", {&a, &b}, result, [ai, bi, batch, sa, sb, m, k, p](std::span<const double> g) {
      double* ga = wants(ai) ? grad_buffer(*ai).data() : nullptr;
      double* gb = wants(bi) ? grad_buffer(*bi).data() : nullptr;
      const double* av = ai->values.data();
      const double* bv = bi->values.data();
      for_each_broadcast(batch, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        const double* go = g.data() + o * m * p;
        if (ga) gemm_nt(go, bv + ib, ga + ia, m, k, p);
        if (gb) gemm_tn(av + ia, go, gb + ib, m, k, p);
      });
    });
  }
  return result;
}

Tensor conv1x1(const Tensor& x, const Tensor& w) { return linear_last_axis("conv1x1", x, w, Tensor()); }

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return linear_last_axis("fully_connected", x, w, bias);
}

// ------------------------------------------------------ depthwise / temporal

Tensor depthwise_joint_scale(const Tensor& x, const Tensor& f) {
  const FeatureDims d = feature_dims("depthwise_joint_scale", x);
  const std::size_t nc = d.joints * d.channels;
  bool per_batch = false;
  if (f.rank() == 2) {
    if (f.dim(0) != d.joints || f.dim(1) != d.channels) shape_fail("depthwise_joint_scale", x.shape(), f.shape());
  } else if (f.rank() == 3 && d.batched) {
    if (f.dim(0) != d.batch || f.dim(1) != d.joints || f.dim(2) != d.channels)
      shape_fail("depthwise_joint_scale", x.shape(), f.shape());
    per_batch = true;
  } else {
    shape_fail("depthwise_joint_scale", x.shape(), f.shape());
  }
  const auto xv = x.values();
  const auto fv = f.values();
  std::vector<double> out(x.numel());
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* fb = fv.data() + (per_batch ? b * nc : 0);
    for (std::size_t t = 0; t < d.frames; ++t) {
      const std::size_t base = (b * d.frames + t) * nc;
      for (std::size_t i = 0; i < nc; ++i) out[base + i] = xv[base + i] * fb[i];
    }
  }
  add_macs(x.numel());
  const bool rg = any_requires_grad({&x, &f});
  Tensor result = make_result(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    ImplPtr fi = f.impl();
    record("depthwise_joint_scale", {&x, &f}, result, [xi, fi, d, nc, per_batch](std::span<const double> g) {
      double* gx = wants(xi) ? grad_buffer(*xi).data() : nullptr;
      double* gf = wants(fi) ? grad_buffer(*fi).data() : nullptr;
      const double* xv = xi->values.data();
      const double* fv = fi->values.data();
      for (std::size_t b = 0; b < d.batch; ++b) {
        const std::size_t foff = per_batch ? b * nc : 0;
        for (std::size_t t = 0; t < d.frames; ++t) {
          const std::size_t base = (b * d.frames + t) * nc;
          for (std::size_t i = 0; i < nc; ++i) {
            if (gx) gx[base + i] += g[base + i] * fv[foff + i];
            if (gf) gf[foff + i] += g[base + i] * xv[base + i];
          }
        }
      }
    });
  }
  return result;
}

Tensor depthwise_temporal_conv(const Tensor& x, const Tensor& f, std::size_t stride) {
  const char* op = "depthwise_temporal_conv";
  const FeatureDims d = feature_dims(op, x);
  if (stride == 0) throw ShapeError("depthwise_temporal_conv: stride must be positive");
  std::size_t k = 0;
  std::size_t fb_stride = 0;
  std::size_t fk_stride = 0;
  std::size_t fn_stride = 0;
  if (f.rank() == 2) {
    if (f.dim(1) != d.channels) shape_fail(op, x.shape(), f.shape());
    k = f.dim(0);
    fk_stride = d.channels;
  } else if (f.rank() == 3) {
    if (f.dim(1) != d.joints || f.dim(2) != d.channels) shape_fail(op, x.shape(), f.shape());
    k = f.dim(0);
    fk_stride = d.joints * d.channels;
    fn_stride = d.channels;
  } else if (f.rank() == 4 && d.batched) {
    if (f.dim(0) != d.batch || f.dim(2) != d.joints || f.dim(3) != d.channels) shape_fail(op, x.shape(), f.shape());
    k = f.dim(1);
    fk_stride = d.joints * d.channels;
    fn_stride = d.channels;
    fb_stride = k * fk_stride;
  } else {
    shape_fail(op, x.shape(), f.shape());
  }
  require_odd_kernel(op, k);
  const std::size_t pad = k / 2;
  const std::size_t t_out = strided_length(d.frames, stride);
  const std::size_t nc = d.joints * d.channels;
  const auto xv = x.values();
  const auto fv = f.values();
  std::vector<double> out(d.batch * t_out * nc, 0.0);
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t to = 0; to < t_out; ++to)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const long ti = static_cast<long>(to * stride + kk) - static_cast<long>(pad);
        if (ti < 0 || ti >= static_cast<long>(d.frames)) continue;
        const double* xrow = xv.data() + (b * d.frames + static_cast<std::size_t>(ti)) * nc;
        double* orow = out.data() + (b * t_out + to) * nc;
        const double* fk = fv.data() + b * fb_stride + kk * fk_stride;
        for (std::size_t n = 0; n < d.joints; ++n) {
          const double* fn = fk + n * fn_stride;
          for (std::size_t c = 0; c < d.channels; ++c) orow[n * d.channels + c] += xrow[n * d.channels + c] * fn[c];
        }
      }
  add_macs(d.batch * t_out * k * nc);
  const bool rg = any_requires_grad({&x, &f});
  Tensor result = make_result(feature_shape(d, t_out, d.channels), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    ImplPtr fi = f.impl();
    record(op, {&x, &f}, result,
           [xi, fi, d, k, pad, stride, t_out, nc, fb_stride, fk_stride, fn_stride](std::span<const double> g) {
             double* gx = wants(xi) ? grad_buffer(*xi).data() : nullptr;
             double* gf = wants(fi) ? grad_buffer(*fi).data() : nullptr;
             const double* xv = xi->values.data();
             const double* fv = fi->values.data();
             for (std::size_t b = 0; b < d.batch; ++b)
               for (std::size_t to = 0; to < t_out; ++to)
                 for (std::size_t kk = 0; kk < k; ++kk) {
                   const long ti = static_cast<long>(to * stride + kk) - static_cast<long>(pad);
                   if (ti < 0 || ti >= static_cast<long>(d.frames)) continue;
                   const std::size_t xoff = (b * d.frames + static_cast<std::size_t>(ti)) * nc;
                   const double* grow = g.data() + (b * t_out + to) * nc;
                   const std::size_t foff = b * fb_stride + kk * fk_stride;
                   for (std::size_t n = 0; n < d.joints; ++n)
                     for (std::size_t c = 0; c < d.channels; ++c) {
                       const std::size_t i = n * d.channels + c;
                       const std::size_t fi_idx = foff + n * fn_stride + c;
                       if (gx) gx[xoff + i] += grow[i] * fv[fi_idx];
                       if (gf) gf[fi_idx] += grow[i] * xv[xoff + i];
                     }
                 }
           });
  }
  return result;
}

Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
  const char* op = "temporal_conv";
  const FeatureDims d = feature_dims(op, x);
  if (stride == 0) throw ShapeError("temporal_conv: stride must be positive");
  if (w.rank() != 3 || w.dim(1) != d.channels) shape_fail(op, x.shape(), w.shape());
  const std::size_t k = w.dim(0);
  const std::size_t cout = w.dim(2);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) shape_fail(op, w.shape(), bias.shape());
  require_odd_kernel(op, k);
  const std::size_t pad = k / 2;
  const std::size_t t_out = strided_length(d.frames, stride);
  const std::size_t cin = d.channels;
  const std::size_t n = d.joints;
  const auto xv = x.values();
  const auto wv = w.values();
  std::vector<double> out(d.batch * t_out * n * cout, 0.0);
  if (bias.defined()) {
    const auto bv = bias.values();
    for (std::size_t r = 0; r < d.batch * t_out * n; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * cout);
  }
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t to = 0; to < t_out; ++to)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const long ti = static_cast<long>(to * stride + kk) - static_cast<long>(pad);
        if (ti < 0 || ti >= static_cast<long>(d.frames)) continue;
        gemm_nn(xv.data() + (b * d.frames + static_cast<std::size_t>(ti)) * n * cin, wv.data() + kk * cin * cout,
                out.data() + (b * t_out + to) * n * cout, n, cin, cout);
      }
  add_macs(d.batch * t_out * k * n * cin * cout);
  const bool rg = any_requires_grad({&x, &w, &bias});
  Tensor result = make_result(feature_shape(d, t_out, cout), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    ImplPtr wi = w.impl();
    ImplPtr bi = bias.defined() ? bias.impl() : nullptr;
    record(op, {&x, &w, &bias}, result, [xi, wi, bi, d, k, pad, stride, t_out, cin, cout, n](std::span<const double> g) {
      double* gx = wants(xi) ? grad_buffer(*xi).data() : nullptr;
      double* gw = wants(wi) ? grad_buffer(*wi).data() : nullptr;
      const double* xv = xi->values.data();
      const double* wv = wi->values.data();
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t to = 0; to < t_out; ++to)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const long ti = static_cast<long>(to * stride + kk) - static_cast<long>(pad);
            if (ti < 0 || ti >= static_cast<long>(d.frames)) continue;
            const std::size_t xoff = (b * d.frames + static_cast<std::size_t>(ti)) * n * cin;
            const double* go = g.data() + (b * t_out + to) * n * cout;
            if (gx) gemm_nt(go, wv + kk * cin * cout, gx + xoff, n, cin, cout);
            if (gw) gemm_tn(xv + xoff, go, gw + kk * cin * cout, n, cin, cout);
          }
      if (wants(bi)) {
        auto& gb = grad_buffer(*bi);
        for (std::size_t r = 0; r < d.batch * t_out * n; ++r)
          for (std::size_t j = 0; j < cout; ++j) gb[j] += g[r * cout + j];
      }
    });
  }
  return result;
}

Tensor temporal_subsample(const Tensor& x, std::size_t stride) {
  const FeatureDims d = feature_dims("temporal_subsample", x);
  if (stride == 0) throw ShapeError("temporal_subsample: stride must be positive");
  const std::size_t t_out = strided_length(d.frames, stride);
  const std::size_t nc = d.joints * d.channels;
  const auto xv = x.values();
  std::vector<double> out(d.batch * t_out * nc);
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t to = 0; to < t_out; ++to)
      std::copy_n(xv.begin() + (b * d.frames + to * stride) * nc, nc, out.begin() + (b * t_out + to) * nc);
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(feature_shape(d, t_out, d.channels), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("temporal_subsample", {&x}, result, [xi, d, t_out, nc, stride](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t to = 0; to < t_out; ++to)
          for (std::size_t i = 0; i < nc; ++i) gx[(b * d.frames + to * stride) * nc + i] += g[(b * t_out + to) * nc + i];
    });
  }
  return result;
}

// -------------------------------------------------------------- normalization

BatchNorm BatchNorm::make(std::size_t features) {
  BatchNorm bn;
  bn.gamma = Tensor::full({features}, 1.0, true);
  bn.beta = Tensor::zeros({features}, true);
  bn.running_mean = Tensor::zeros({features});
  bn.running_var = Tensor::full({features}, 1.0);
  return bn;
}

namespace {
thread_local BatchNormCalibration* active_calibration = nullptr;
}  // namespace

BatchNormCalibration::BatchNormCalibration() : previous_(active_calibration) { active_calibration = this; }

BatchNormCalibration::~BatchNormCalibration() { active_calibration = previous_; }

void BatchNormCalibration::observe(BatchNorm& bn, const std::vector<double>& mean,
                                   const std::vector<double>& sum_sq_dev, std::size_t count) {
  auto& acc = stats_[bn.running_mean.impl().get()];
  if (acc.count == 0) {
    acc.running_mean = bn.running_mean;
    acc.running_var = bn.running_var;
    acc.mean = mean;
    acc.m2 = sum_sq_dev;
    acc.count = count;
    return;
  }
  // Chan et al. pairwise merge of (count, mean, M2).
  const double n_a = static_cast<double>(acc.count);
  const double n_b = static_cast<double>(count);
  const double n = n_a + n_b;
  for (std::size_t f = 0; f < mean.size(); ++f) {
    const double delta = mean[f] - acc.mean[f];
    acc.mean[f] += delta * n_b / n;
    acc.m2[f] += sum_sq_dev[f] + delta * delta * n_a * n_b / n;
  }
  acc.count += count;
}

std::size_t BatchNormCalibration::commit() {
  for (auto& [key, acc] : stats_) {
    auto rm = acc.running_mean.mutable_values();
    auto rv = acc.running_var.mutable_values();
    const double denom = static_cast<double>(acc.count > 1 ? acc.count - 1 : 1);
    for (std::size_t f = 0; f < acc.mean.size(); ++f) {
      rm[f] = acc.mean[f];
      rv[f] = acc.m2[f] / denom;
    }
  }
  const std::size_t updated = stats_.size();
  stats_.clear();
  return updated;
}

Tensor batch_norm(const Tensor& x, int axis, BatchNorm& bn, Mode mode) {
  if (!(bn.eps > 0.0)) throw std::invalid_argument("batch_norm: eps must be positive");
  const std::size_t a = normalize_axis(axis, x.rank());
  const Shape& s = x.shape();
  const std::size_t features = s[a];
  if (bn.gamma.numel() != features || bn.beta.numel() != features) {
    throw ShapeError("batch_norm: " + std::to_string(bn.gamma.numel()) + " affine parameters for " +
                     std::to_string(features) + " features along axis " + std::to_string(a) + " of " + shape_str(s));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < a; ++d) outer *= s[d];
  for (std::size_t d = a + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t count = outer * inner;
  const auto xv = x.values();
  const auto gv = bn.gamma.values();
  const auto bv = bn.beta.values();
  auto at = [&](std::size_t o, std::size_t f, std::size_t i) { return (o * features + f) * inner + i; };

  std::vector<double> inv_std(features);
  std::vector<double> mu(features);
  if (mode == Mode::train) {
    auto rm = bn.running_mean.mutable_values();
    auto rv = bn.running_var.mutable_values();
    // Feature-inner loops keep the traversal contiguous; each feature still
    // accumulates in (o, i) order.
    std::vector<double> var(features, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t f = 0; f < features; ++f)
        for (std::size_t i = 0; i < inner; ++i) mu[f] += xv[at(o, f, i)];
    for (double& m : mu) m /= static_cast<double>(count);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t f = 0; f < features; ++f)
        for (std::size_t i = 0; i < inner; ++i) {
          const double dlt = xv[at(o, f, i)] - mu[f];
          var[f] += dlt * dlt;
        }
    for (std::size_t f = 0; f < features; ++f) {
      const double v = var[f] / static_cast<double>(count);
      inv_std[f] = 1.0 / std::sqrt(v + bn.eps);
      if (active_calibration) continue;
      const double unbiased = count > 1 ? v * static_cast<double>(count) / static_cast<double>(count - 1) : v;
      rm[f] = (1.0 - bn.momentum) * rm[f] + bn.momentum * mu[f];
      rv[f] = (1.0 - bn.momentum) * rv[f] + bn.momentum * unbiased;
    }
    if (active_calibration) active_calibration->observe(bn, mu, var, count);
  } else {
    const auto rm = bn.running_mean.values();
    const auto rv = bn.running_var.values();
    for (std::size_t f = 0; f < features; ++f) {
      mu[f] = rm[f];
      inv_std[f] = 1.0 / std::sqrt(rv[f] + bn.eps);
    }
  }

  std::vector<double> xhat(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t f = 0; f < features; ++f)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t idx = at(o, f, i);
        xhat[idx] = (xv[idx] - mu[f]) * inv_std[f];
        out[idx] = gv[f] * xhat[idx] + bv[f];
      }

  const bool rg = any_requires_grad({&x, &bn.gamma, &bn.beta});
  Tensor result = make_result(s, std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    ImplPtr gi = bn.gamma.impl();
    ImplPtr bi = bn.beta.impl();
    const bool train = mode == Mode::train;
    record("batch_norm", {&x, &bn.gamma, &bn.beta}, result,
           [xi, gi, bi, xhat = std::move(xhat), inv_std, outer, features, inner, count, train](std::span<const double> g) {
             auto at = [&](std::size_t o, std::size_t f, std::size_t i) { return (o * features + f) * inner + i; };
             const double* gamma = gi->values.data();
             double* gg = wants(gi) ? grad_buffer(*gi).data() : nullptr;
             double* gb = wants(bi) ? grad_buffer(*bi).data() : nullptr;
             double* gx = wants(xi) ? grad_buffer(*xi).data() : nullptr;
             std::vector<double> sum_g(features, 0.0);
             std::vector<double> sum_gx(features, 0.0);
             for (std::size_t o = 0; o < outer; ++o)
               for (std::size_t f = 0; f < features; ++f)
                 for (std::size_t i = 0; i < inner; ++i) {
                   const std::size_t idx = at(o, f, i);
                   sum_g[f] += g[idx];
                   sum_gx[f] += g[idx] * xhat[idx];
                 }
             for (std::size_t f = 0; f < features; ++f) {
               if (gg) gg[f] += sum_gx[f];
               if (gb) gb[f] += sum_g[f];
             }
             if (!gx) return;
             const double inv_m = 1.0 / static_cast<double>(count);
             std::vector<double> k(features), mean_g(features), mean_gx(features);
             for (std::size_t f = 0; f < features; ++f) {
               k[f] = gamma[f] * inv_std[f];
               mean_g[f] = train ? inv_m * sum_g[f] : 0.0;
               mean_gx[f] = train ? inv_m * sum_gx[f] : 0.0;
             }
             for (std::size_t o = 0; o < outer; ++o)
               for (std::size_t f = 0; f < features; ++f)
                 for (std::size_t i = 0; i < inner; ++i) {
                   const std::size_t idx = at(o, f, i);
                   gx[idx] += train ? k[f] * (g[idx] - mean_g[f] - xhat[idx] * mean_gx[f]) : k[f] * g[idx];
                 }
           });
  }
  return result;
}

// ---------------------------------------------------------------- activations

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("relu", {&x}, result, [xi](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      const auto& xv = xi->values;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0.0) gx[i] += g[i];
    });
  }
  return result;
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const Shape& s = x.shape();
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < a; ++d) outer *= s[d];
  for (std::size_t d = a + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t len = s[a];
  const auto xv = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, xv[(o * len + l) * inner + i]);
      double z = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t idx = (o * len + l) * inner + i;
        out[idx] = std::exp(xv[idx] - mx);
        z += out[idx];
      }
      for (std::size_t l = 0; l < len; ++l) out[(o * len + l) * inner + i] /= z;
    }
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(s, out, rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("softmax", {&x}, result, [xi, y = std::move(out), outer, inner, len](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          double dot = 0.0;
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t idx = (o * len + l) * inner + i;
            dot += g[idx] * y[idx];
          }
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t idx = (o * len + l) * inner + i;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
    });
  }
  return result;
}

Tensor activation(const Tensor& x, ActivationKind kind, int axis) {
  return kind == ActivationKind::relu ? relu(x) : softmax(x, axis);
}

// -------------------------------------------------------------------- pooling

std::vector<std::pair<std::size_t, std::size_t>> adaptive_bins(std::size_t frames, std::size_t bins) {
  if (bins < 1 || bins > frames) {
    throw ShapeError("adaptive pooling: pooled size " + std::to_string(bins) + " outside [1, " +
                     std::to_string(frames) + "]");
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t base = frames / bins;
  const std::size_t extra = frames % bins;
  std::size_t start = 0;
  for (std::size_t i = 0; i < bins; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    out.emplace_back(start, start + len);
    start += len;
  }
  return out;
}

Tensor adaptive_temporal_pool(const Tensor& x, std::size_t pooled) {
  const FeatureDims d = feature_dims("adaptive_temporal_pool", x);
  const auto bins = adaptive_bins(d.frames, pooled);
  const std::size_t nc = d.joints * d.channels;
  const auto xv = x.values();
  std::vector<double> out(d.batch * pooled * nc, 0.0);
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t p = 0; p < pooled; ++p) {
      const auto [lo, hi] = bins[p];
      double* orow = out.data() + (b * pooled + p) * nc;
      for (std::size_t t = lo; t < hi; ++t) {
        const double* xrow = xv.data() + (b * d.frames + t) * nc;
        for (std::size_t i = 0; i < nc; ++i) orow[i] += xrow[i];
      }
      const double inv = 1.0 / static_cast<double>(hi - lo);
      for (std::size_t i = 0; i < nc; ++i) orow[i] *= inv;
    }
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(feature_shape(d, pooled, d.channels), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("adaptive_temporal_pool", {&x}, result, [xi, d, bins, pooled, nc](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t p = 0; p < pooled; ++p) {
          const auto [lo, hi] = bins[p];
          const double inv = 1.0 / static_cast<double>(hi - lo);
          const double* grow = g.data() + (b * pooled + p) * nc;
          for (std::size_t t = lo; t < hi; ++t)
            for (std::size_t i = 0; i < nc; ++i) gx[(b * d.frames + t) * nc + i] += grow[i] * inv;
        }
    });
  }
  return result;
}

Tensor temporal_mean(const Tensor& x) { return adaptive_temporal_pool(x, 1); }

Tensor temporal_max(const Tensor& x) {
  const FeatureDims d = feature_dims("temporal_max", x);
  const std::size_t nc = d.joints * d.channels;
  const auto xv = x.values();
  std::vector<double> out(d.batch * nc);
  std::vector<std::size_t> arg(d.batch * nc);
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t i = 0; i < nc; ++i) {
      std::size_t best = 0;
      double val = xv[(b * d.frames) * nc + i];
      for (std::size_t t = 1; t < d.frames; ++t) {
        const double v = xv[(b * d.frames + t) * nc + i];
        if (v > val) {
          val = v;
          best = t;
        }
      }
      out[b * nc + i] = val;
      arg[b * nc + i] = best;
    }
  const bool rg = any_requires_grad({&x});
  Tensor result = make_result(feature_shape(d, 1, d.channels), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("temporal_max", {&x}, result, [xi, d, nc, arg = std::move(arg)](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t i = 0; i < nc; ++i) gx[(b * d.frames + arg[b * nc + i]) * nc + i] += g[b * nc + i];
    });
  }
  return result;
}

Tensor global_average_pool(const Tensor& x) {
  const FeatureDims d = feature_dims("global_average_pool", x);
  const std::size_t c = d.channels;
  const std::size_t per = d.frames * d.joints;
  const auto xv = x.values();
  std::vector<double> out(d.batch * c, 0.0);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t r = 0; r < per; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] += xv[(b * per + r) * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] /= static_cast<double>(per);
  }
  const bool rg = any_requires_grad({&x});
  Shape out_shape = d.batched ? Shape{d.batch, c} : Shape{c};
  Tensor result = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    ImplPtr xi = x.impl();
    record("global_average_pool", {&x}, result, [xi, d, c, per](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      const double inv = 1.0 / static_cast<double>(per);
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t r = 0; r < per; ++r)
          for (std::size_t ch = 0; ch < c; ++ch) gx[(b * per + r) * c + ch] += g[b * c + ch] * inv;
    });
  }
  return result;
}

Tensor pool(const Tensor& x, PoolKind kind, std::size_t pooled) {
  switch (kind) {
    case PoolKind::temporal_mean:
      return temporal_mean(x);
    case PoolKind::adaptive_temporal:
      return adaptive_temporal_pool(x, pooled);
    case PoolKind::global_average:
      return global_average_pool(x);
    case PoolKind::temporal_max:
      return temporal_max(x);
  }
  throw std::invalid_argument("unknown pool kind");
}

}  // namespace cag::ad
