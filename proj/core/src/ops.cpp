#include "mainet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace mainet::ops {

namespace {

bool track(GradTape* tape, std::initializer_list<const Tensor*> ins) {
  if (!tape) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

Tensor unary(const Tensor& x, GradTape* tape, const char* name,
             double (*fwd)(double), double (*dfd)(double y, double x)) {
  Tensor out(x.shape());
  const auto& xv = x.data();
  auto& ov = out.mutable_data();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record(name, [xc, oc, dfd]() mutable {
      const auto& og = oc.grad();
      auto& xg = xc.mutable_grad();
      const auto& xv = xc.data();
      const auto& ov = oc.data();
      for (std::size_t i = 0; i < xg.size(); ++i) xg[i] += og[i] * dfd(ov[i], xv[i]);
    });
  }
  return out;
}

}  // namespace

// -- structure ---------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape, GradTape* tape) {
  if (shape_numel(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                     " changes element count");
  Tensor out(std::move(shape), std::vector<double>(x.data()));
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record("reshape", [xc, oc]() mutable {
      const auto& og = oc.grad();
      auto& xg = xc.mutable_grad();
      for (std::size_t i = 0; i < xg.size(); ++i) xg[i] += og[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& x, GradTape* tape) {
  if (x.rank() != 2) throw ShapeError("transpose: rank-2 required, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out({c, r});
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = xv[i * c + j];
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record("transpose", [xc, oc, r, c]() mutable {
      const auto& og = oc.grad();
      auto& xg = xc.mutable_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) xg[i * c + j] += og[j * r + i];
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> xs, std::size_t axis, GradTape* tape) {
  if (xs.empty()) throw ShapeError("concat: empty input list");
  const std::size_t rank = xs[0].rank();
  if (axis >= rank) throw ShapeError("concat: axis out of range");
  if (rank != 1 && rank != 2) throw ShapeError("concat: rank-1 or rank-2 only");
  for (const auto& t : xs) {
    if (t.rank() != rank) throw ShapeError("concat: mixed ranks");
    for (std::size_t a = 0; a < rank; ++a)
      if (a != axis && t.dim(a) != xs[0].dim(a))
        throw ShapeError("concat: shape mismatch " + shape_str(t.shape()) + " vs " +
                         shape_str(xs[0].shape()) + " on axis " + std::to_string(a));
  }

  Shape oshape = xs[0].shape();
  oshape[axis] = 0;
  for (const auto& t : xs) oshape[axis] += t.dim(axis);
  Tensor out(oshape);
  auto& ov = out.mutable_data();

  bool any_grad = false;
  std::vector<Tensor> parts(xs.begin(), xs.end());
  std::vector<std::size_t> offsets(xs.size(), 0);

  if (rank == 1 || axis == 0) {
    std::size_t pos = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      offsets[p] = pos;
      const auto& pv = parts[p].data();
      std::copy(pv.begin(), pv.end(), ov.begin() + static_cast<std::ptrdiff_t>(pos));
      pos += pv.size();
      any_grad |= parts[p].requires_grad();
    }
  } else {  // rank 2, axis 1
    const std::size_t rows = oshape[0], ocols = oshape[1];
    std::size_t col0 = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      offsets[p] = col0;
      const std::size_t pc = parts[p].dim(1);
      const auto& pv = parts[p].data();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < pc; ++j) ov[i * ocols + col0 + j] = pv[i * pc + j];
      col0 += pc;
      any_grad |= parts[p].requires_grad();
    }
  }

  if (tape && any_grad) {
    out.set_requires_grad(true);
    Tensor oc = out;
    tape->record("concat", [parts, offsets, oc, rank, axis]() mutable {
      const auto& og = oc.grad();
      if (rank == 1 || axis == 0) {
        for (std::size_t p = 0; p < parts.size(); ++p) {
          if (!parts[p].requires_grad()) continue;
          auto& pg = parts[p].mutable_grad();
          for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += og[offsets[p] + i];
        }
      } else {
        const std::size_t rows = oc.dim(0), ocols = oc.dim(1);
        for (std::size_t p = 0; p < parts.size(); ++p) {
          if (!parts[p].requires_grad()) continue;
          auto& pg = parts[p].mutable_grad();
          const std::size_t pc = parts[p].dim(1);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < pc; ++j)
              pg[i * pc + j] += og[i * ocols + offsets[p] + j];
        }
      }
    });
  }
  return out;
}

// -- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b, GradTape* tape) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto& ov = out.mutable_data();
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape->record("add", [ac, bc, oc]() mutable {
      const auto& og = oc.grad();
      if (ac.requires_grad()) {
        auto& g = ac.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (bc.requires_grad()) {
        auto& g = bc.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b, GradTape* tape) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto& ov = out.mutable_data();
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape->record("sub", [ac, bc, oc]() mutable {
      const auto& og = oc.grad();
      if (ac.requires_grad()) {
        auto& g = ac.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (bc.requires_grad()) {
        auto& g = bc.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= og[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, GradTape* tape) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto& ov = out.mutable_data();
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape->record("mul", [ac, bc, oc]() mutable {
      const auto& og = oc.grad();
      const auto& av = ac.data();
      const auto& bv = bc.data();
      if (ac.requires_grad()) {
        auto& g = ac.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * bv[i];
      }
      if (bc.requires_grad()) {
        auto& g = bc.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c, GradTape* tape) {
  Tensor out(x.shape());
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * c;
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record("scale", [xc, oc, c]() mutable {
      const auto& og = oc.grad();
      auto& g = xc.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * c;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& x, double c, GradTape* tape) {
  Tensor out(x.shape());
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] + c;
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record("add_scalar", [xc, oc]() mutable {
      const auto& og = oc.grad();
      auto& g = xc.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
    });
  }
  return out;
}

Tensor exp(const Tensor& x, GradTape* tape) {
  return unary(x, tape, "exp", [](double v) { return std::exp(v); },
               [](double y, double) { return y; });
}

Tensor log(const Tensor& x, GradTape* tape) {
  return unary(x, tape, "log", [](double v) { return std::log(v); },
               [](double, double x0) { return 1.0 / x0; });
}

Tensor sigmoid(const Tensor& x, GradTape* tape) {
  return unary(x, tape, "sigmoid",
               [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                              : std::exp(v) / (1.0 + std::exp(v)); },
               [](double y, double) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x, GradTape* tape) {
  return unary(x, tape, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
               [](double, double x0) { return x0 > 0.0 ? 1.0 : 0.0; });
}

// -- broadcasts ----------------------------------------------------------------

Tensor add_rowvec(const Tensor& x, const Tensor& v, GradTape* tape) {
  if (x.rank() != 2 || v.rank() != 1 || v.dim(0) != x.dim(1))
    throw ShapeError("add_rowvec: " + shape_str(x.shape()) + " with " + shape_str(v.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out(x.shape());
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  const auto& vv = v.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) ov[i * cols + j] = xv[i * cols + j] + vv[j];
  if (track(tape, {&x, &v})) {
    out.set_requires_grad(true);
    Tensor xc = x, vc = v, oc = out;
    tape->record("add_rowvec", [xc, vc, oc, rows, cols]() mutable {
      const auto& og = oc.grad();
      if (xc.requires_grad()) {
        auto& g = xc.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (vc.requires_grad()) {
        auto& g = vc.mutable_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) g[j] += og[i * cols + j];
      }
    });
  }
  return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v, GradTape* tape) {
  if (x.rank() != 2 || v.rank() != 1 || v.dim(0) != x.dim(1))
    throw ShapeError("mul_rowvec: " + shape_str(x.shape()) + " with " + shape_str(v.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out(x.shape());
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  const auto& vv = v.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) ov[i * cols + j] = xv[i * cols + j] * vv[j];
  if (track(tape, {&x, &v})) {
    out.set_requires_grad(true);
    Tensor xc = x, vc = v, oc = out;
    tape->record("mul_rowvec", [xc, vc, oc, rows, cols]() mutable {
      const auto& og = oc.grad();
      const auto& xv = xc.data();
      const auto& vv = vc.data();
      if (xc.requires_grad()) {
        auto& g = xc.mutable_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) g[i * cols + j] += og[i * cols + j] * vv[j];
      }
      if (vc.requires_grad()) {
        auto& g = vc.mutable_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) g[j] += og[i * cols + j] * xv[i * cols + j];
      }
    });
  }
  return out;
}

namespace {

enum class BcastOp { Add, Sub, Mul, Div };

Tensor bcast(const Tensor& x, const Tensor& s, GradTape* tape, BcastOp op, const char* name) {
  if (s.size() != 1)
    throw ShapeError(std::string(name) + ": scalar operand has shape " + shape_str(s.shape()));
  const double sv = s.data()[0];
  Tensor out(x.shape());
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    switch (op) {
      case BcastOp::Add: ov[i] = xv[i] + sv; break;
      case BcastOp::Sub: ov[i] = xv[i] - sv; break;
      case BcastOp::Mul: ov[i] = xv[i] * sv; break;
      case BcastOp::Div: ov[i] = xv[i] / sv; break;
    }
  }
  if (track(tape, {&x, &s})) {
    out.set_requires_grad(true);
    Tensor xc = x, sc = s, oc = out;
    tape->record(name, [xc, sc, oc, op]() mutable {
      const auto& og = oc.grad();
      const auto& xv = xc.data();
      const double sv = sc.data()[0];
      if (xc.requires_grad()) {
        auto& g = xc.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          double d = og[i];
          if (op == BcastOp::Mul) d *= sv;
          if (op == BcastOp::Div) d /= sv;
          g[i] += d;
        }
      }
      if (sc.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < og.size(); ++i) {
          switch (op) {
            case BcastOp::Add: acc += og[i]; break;
            case BcastOp::Sub: acc -= og[i]; break;
            case BcastOp::Mul: acc += og[i] * xv[i]; break;
            case BcastOp::Div: acc -= og[i] * xv[i] / (sv * sv); break;
          }
        }
        sc.mutable_grad()[0] += acc;
      }
    });
  }
  return out;
}

}  // namespace

Tensor add_bcast(const Tensor& x, const Tensor& s, GradTape* tape) {
  return bcast(x, s, tape, BcastOp::Add, "add_bcast");
}
Tensor sub_bcast(const Tensor& x, const Tensor& s, GradTape* tape) {
  return bcast(x, s, tape, BcastOp::Sub, "sub_bcast");
}
Tensor mul_bcast(const Tensor& x, const Tensor& s, GradTape* tape) {
  return bcast(x, s, tape, BcastOp::Mul, "mul_bcast");
}
Tensor div_bcast(const Tensor& x, const Tensor& s, GradTape* tape) {
  return bcast(x, s, tape, BcastOp::Div, "div_bcast");
}

// -- reductions ----------------------------------------------------------------

Tensor reduce_sum(const Tensor& x, GradTape* tape) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record("reduce_sum", [xc, oc]() mutable {
      const double og = oc.grad()[0];
      auto& g = xc.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og;
    });
  }
  return out;
}

Tensor reduce_mean(const Tensor& x, GradTape* tape) {
  const double n = static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc / n);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record("reduce_mean", [xc, oc, n]() mutable {
      const double og = oc.grad()[0] / n;
      auto& g = xc.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og;
    });
  }
  return out;
}

Tensor mean_axis0(const Tensor& x, GradTape* tape) {
  if (x.rank() != 2) throw ShapeError("mean_axis0: rank-2 required, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out({cols});
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  for (std::size_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += xv[i * cols + j];
    ov[j] = acc / static_cast<double>(rows);
  }
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record("mean_axis0", [xc, oc, rows, cols]() mutable {
      const auto& og = oc.grad();
      auto& g = xc.mutable_grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          g[i * cols + j] += og[j] / static_cast<double>(rows);
    });
  }
  return out;
}

// -- linear algebra --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, GradTape* tape) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  auto& cv = out.mutable_data();
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const double ait = av[i * k + t];
      if (ait == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) cv[i * n + j] += ait * bv[t * n + j];
    }
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape->record("matmul", [ac, bc, oc, m, k, n]() mutable {
      const auto& og = oc.grad();
      const auto& av = ac.data();
      const auto& bv = bc.data();
      if (ac.requires_grad()) {
        auto& g = ac.mutable_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double d = og[i * n + j];
            if (d == 0.0) continue;
            for (std::size_t t = 0; t < k; ++t) g[i * k + t] += d * bv[t * n + j];
          }
      }
      if (bc.requires_grad()) {
        auto& g = bc.mutable_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            const double ait = av[i * k + t];
            if (ait == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) g[t * n + j] += ait * og[i * n + j];
          }
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, GradTape* tape) {
  if (w.rank() != 2) throw ShapeError("linear: weight must be rank 2, got " + shape_str(w.shape()));
  const bool vec = x.rank() == 1;
  if (!vec && x.rank() != 2)
    throw ShapeError("linear: input must be rank 1 or 2, got " + shape_str(x.shape()));
  const std::size_t in = vec ? x.dim(0) : x.dim(1);
  if (in != w.dim(0))
    throw ShapeError("linear: input width " + std::to_string(in) + " vs weight " +
                     shape_str(w.shape()));
  const std::size_t out_w = w.dim(1);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != out_w))
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " vs weight " + shape_str(w.shape()));

  Tensor x2 = vec ? reshape(x, {1, x.dim(0)}, tape) : x;
  Tensor y = matmul(x2, w, tape);
  if (b.defined()) y = add_rowvec(y, b, tape);
  return vec ? reshape(y, {out_w}, tape) : y;
}

// -- neural-net blocks --------------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis, GradTape* tape) {
  if (x.rank() < 1 || x.rank() > 2 || axis >= x.rank())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                     shape_str(x.shape()));

  // View the tensor as `slices` independent vectors of length `len` with
  // element stride `stride`.
  std::size_t slices, len, stride, slice_stride;
  if (x.rank() == 1) {
    slices = 1, len = x.dim(0), stride = 1, slice_stride = 0;
  } else if (axis == 1) {
    slices = x.dim(0), len = x.dim(1), stride = 1, slice_stride = x.dim(1);
  } else {
    slices = x.dim(1), len = x.dim(0), stride = x.dim(1), slice_stride = 1;
  }

  Tensor out(x.shape());
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t base = s * slice_stride;
    double mx = xv[base];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, xv[base + i * stride]);
    double denom = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(xv[base + i * stride] - mx);
      ov[base + i * stride] = e;
      denom += e;
    }
    for (std::size_t i = 0; i < len; ++i) ov[base + i * stride] /= denom;
  }

  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record("softmax", [xc, oc, slices, len, stride, slice_stride]() mutable {
      const auto& og = oc.grad();
      const auto& yv = oc.data();
      auto& g = xc.mutable_grad();
      for (std::size_t s = 0; s < slices; ++s) {
        const std::size_t base = s * slice_stride;
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i)
          dot += og[base + i * stride] * yv[base + i * stride];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t idx = base + i * stride;
          g[idx] += yv[idx] * (og[idx] - dot);
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Conv2dSpec& spec, GradTape* tape) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be [c,H,W], got " + shape_str(x.shape()));
  if (kernel.rank() != 4)
    throw ShapeError("conv2d: kernel must be [c_out,c_in,k,k], got " + shape_str(kernel.shape()));
  const std::size_t c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t c_out = kernel.dim(0), kc = kernel.dim(1), kh = kernel.dim(2),
                    kw = kernel.dim(3);
  if (kh != kw || kh % 2 == 0)
    throw ConfigError("conv2d: kernel must be square with odd size, got " +
                      shape_str(kernel.shape()));
  if (spec.stride == 0 || spec.dilation == 0) throw ConfigError("conv2d: stride/dilation must be >= 1");
  if (spec.depthwise) {
    if (kc != 1 || c_out != c_in)
      throw ShapeError("conv2d: depthwise kernel must be [c,1,k,k] with c == input channels, got " +
                       shape_str(kernel.shape()) + " for input " + shape_str(x.shape()));
  } else if (kc != c_in) {
    throw ShapeError("conv2d: kernel input channels " + std::to_string(kc) +
                     " vs input " + std::to_string(c_in));
  }

  const long span = static_cast<long>(spec.dilation) * (static_cast<long>(kh) - 1) + 1;
  const long oh_l = (static_cast<long>(h) + 2 * static_cast<long>(spec.padding) - span) /
                        static_cast<long>(spec.stride) + 1;
  const long ow_l = (static_cast<long>(w) + 2 * static_cast<long>(spec.padding) - span) /
                        static_cast<long>(spec.stride) + 1;
  if (oh_l <= 0 || ow_l <= 0)
    throw ConfigError("conv2d: non-positive output dims for input " + shape_str(x.shape()) +
                      ", kernel " + shape_str(kernel.shape()) + ", stride " +
                      std::to_string(spec.stride) + ", padding " + std::to_string(spec.padding) +
                      ", dilation " + std::to_string(spec.dilation));
  const std::size_t oh = static_cast<std::size_t>(oh_l), ow = static_cast<std::size_t>(ow_l);

  Tensor out({c_out, oh, ow});
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  const auto& kv = kernel.data();

  const long pad = static_cast<long>(spec.padding);
  const long dil = static_cast<long>(spec.dilation);
  const long st = static_cast<long>(spec.stride);

  for (std::size_t co = 0; co < c_out; ++co) {
    const std::size_t ci_begin = spec.depthwise ? co : 0;
    const std::size_t ci_end = spec.depthwise ? co + 1 : c_in;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t ci = ci_begin; ci < ci_end; ++ci) {
          const std::size_t kci = spec.depthwise ? 0 : ci;
          for (std::size_t u = 0; u < kh; ++u) {
            const long iy = static_cast<long>(i) * st - pad + static_cast<long>(u) * dil;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t v = 0; v < kw; ++v) {
              const long ix = static_cast<long>(j) * st - pad + static_cast<long>(v) * dil;
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              acc += xv[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] *
                     kv[((co * kc + kci) * kh + u) * kw + v];
            }
          }
        }
        ov[(co * oh + i) * ow + j] = acc;
      }
  }

  if (track(tape, {&x, &kernel})) {
    out.set_requires_grad(true);
    Tensor xc = x, kc2 = kernel, oc = out;
    const Conv2dSpec sp = spec;
    tape->record("conv2d", [xc, kc2, oc, sp, c_in, h, w, c_out, kc, kh, kw, oh, ow]() mutable {
      const auto& og = oc.grad();
      const auto& xv = xc.data();
      const auto& kv = kc2.data();
      const bool gx = xc.requires_grad();
      const bool gk = kc2.requires_grad();
      const long pad = static_cast<long>(sp.padding);
      const long dil = static_cast<long>(sp.dilation);
      const long st = static_cast<long>(sp.stride);
      for (std::size_t co = 0; co < c_out; ++co) {
        const std::size_t ci_begin = sp.depthwise ? co : 0;
        const std::size_t ci_end = sp.depthwise ? co + 1 : c_in;
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            const double d = og[(co * oh + i) * ow + j];
            if (d == 0.0) continue;
            for (std::size_t ci = ci_begin; ci < ci_end; ++ci) {
              const std::size_t kci = sp.depthwise ? 0 : ci;
              for (std::size_t u = 0; u < kh; ++u) {
                const long iy = static_cast<long>(i) * st - pad + static_cast<long>(u) * dil;
                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                for (std::size_t v = 0; v < kw; ++v) {
                  const long ix = static_cast<long>(j) * st - pad + static_cast<long>(v) * dil;
                  if (ix < 0 || ix >= static_cast<long>(w)) continue;
                  const std::size_t xi =
                      (ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
                  const std::size_t ki = ((co * kc + kci) * kh + u) * kw + v;
                  if (gx) xc.mutable_grad()[xi] += d * kv[ki];
                  if (gk) kc2.mutable_grad()[ki] += d * xv[xi];
                }
              }
            }
          }
      }
    });
  }
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b, GradTape* tape) {
  if (x.rank() != 3 || b.rank() != 1 || b.dim(0) != x.dim(0))
    throw ShapeError("add_channel_bias: " + shape_str(x.shape()) + " with " + shape_str(b.shape()));
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  Tensor out(x.shape());
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  const auto& bv = b.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p) ov[ch * plane + p] = xv[ch * plane + p] + bv[ch];
  if (track(tape, {&x, &b})) {
    out.set_requires_grad(true);
    Tensor xc = x, bc = b, oc = out;
    tape->record("add_channel_bias", [xc, bc, oc, c, plane]() mutable {
      const auto& og = oc.grad();
      if (xc.requires_grad()) {
        auto& g = xc.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (bc.requires_grad()) {
        auto& g = bc.mutable_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (std::size_t p = 0; p < plane; ++p) acc += og[ch * plane + p];
          g[ch] += acc;
        }
      }
    });
  }
  return out;
}

Tensor scale_channels(const Tensor& x, const Tensor& z, GradTape* tape) {
  if (x.rank() != 3 || z.rank() != 1 || z.dim(0) != x.dim(0))
    throw ShapeError("scale_channels: " + shape_str(x.shape()) + " with " + shape_str(z.shape()));
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  Tensor out(x.shape());
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  const auto& zv = z.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p) ov[ch * plane + p] = xv[ch * plane + p] * zv[ch];
  if (track(tape, {&x, &z})) {
    out.set_requires_grad(true);
    Tensor xc = x, zc = z, oc = out;
    tape->record("scale_channels", [xc, zc, oc, c, plane]() mutable {
      const auto& og = oc.grad();
      const auto& xv = xc.data();
      const auto& zv = zc.data();
      if (xc.requires_grad()) {
        auto& g = xc.mutable_grad();
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t p = 0; p < plane; ++p) g[ch * plane + p] += og[ch * plane + p] * zv[ch];
      }
      if (zc.requires_grad()) {
        auto& g = zc.mutable_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (std::size_t p = 0; p < plane; ++p) acc += og[ch * plane + p] * xv[ch * plane + p];
          g[ch] += acc;
        }
      }
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x, GradTape* tape) {
  if (x.rank() != 3) throw ShapeError("global_avg_pool: [c,H,W] required, got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  Tensor out({c});
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += xv[ch * plane + p];
    ov[ch] = acc / static_cast<double>(plane);
  }
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record("global_avg_pool", [xc, oc, c, plane]() mutable {
      const auto& og = oc.grad();
      auto& g = xc.mutable_grad();
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = og[ch] / static_cast<double>(plane);
        for (std::size_t p = 0; p < plane; ++p) g[ch * plane + p] += d;
      }
    });
  }
  return out;
}

Tensor adaptive_avg_pool(const Tensor& x, std::size_t out_h, std::size_t out_w, GradTape* tape) {
  if (x.rank() != 3) throw ShapeError("adaptive_avg_pool: [c,H,W] required, got " + shape_str(x.shape()));
  if (out_h == 0 || out_w == 0) throw ConfigError("adaptive_avg_pool: output dims must be >= 1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);

  auto lo = [](std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; };
  auto hi = [](std::size_t i, std::size_t in, std::size_t out) {
    return ((i + 1) * in + out - 1) / out;  // ceil
  };

  Tensor out({c, out_h, out_w});
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t y0 = lo(i, h, out_h), y1 = hi(i, h, out_h);
      for (std::size_t j = 0; j < out_w; ++j) {
        const std::size_t x0 = lo(j, w, out_w), x1 = hi(j, w, out_w);
        double acc = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t xw = x0; xw < x1; ++xw) acc += xv[(ch * h + y) * w + xw];
        ov[(ch * out_h + i) * out_w + j] =
            acc / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }

  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record("adaptive_avg_pool", [xc, oc, c, h, w, out_h, out_w, lo, hi]() mutable {
      const auto& og = oc.grad();
      auto& g = xc.mutable_grad();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < out_h; ++i) {
          const std::size_t y0 = lo(i, h, out_h), y1 = hi(i, h, out_h);
          for (std::size_t j = 0; j < out_w; ++j) {
            const std::size_t x0 = lo(j, w, out_w), x1 = hi(j, w, out_w);
            const double d = og[(ch * out_h + i) * out_w + j] /
                             static_cast<double>((y1 - y0) * (x1 - x0));
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t xw = x0; xw < x1; ++xw) g[(ch * h + y) * w + xw] += d;
          }
        }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& probs, std::size_t label, GradTape* tape) {
  if (probs.rank() != 1) throw ShapeError("cross_entropy: probability vector required, got " +
                                          shape_str(probs.shape()));
  if (label >= probs.dim(0))
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     shape_str(probs.shape()));
  const double p = probs.data()[label] + 1e-12;
  Tensor out = Tensor::scalar(-std::log(p));
  if (track(tape, {&probs})) {
    out.set_requires_grad(true);
    Tensor pc = probs, oc = out;
    tape->record("cross_entropy", [pc, oc, label, p]() mutable {
      pc.mutable_grad()[label] += oc.grad()[0] * (-1.0 / p);
    });
  }
  return out;
}

std::size_t argmax(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("argmax: empty tensor");
  std::size_t best = 0;
  const auto& v = x.data();
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace mainet::ops
