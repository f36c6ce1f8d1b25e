#include "cpgnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "cpgnn/error.hpp"
#include "cpgnn/random.hpp"

namespace cpgnn {

Var Tape::push(Node node) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) throw ContractViolation("tape overflow");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::view(const Tensor& value) {
  Node n;
  n.external = &value;
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractViolation("operation mixes variables from different tapes");
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  n.requires_grad = n.requires_grad && grad_enabled_;
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id_);
  return n.external ? *n.external : n.value;
}

Tensor* Tape::grad_slot(Var v) {
  Node& n = nodes_.at(v.id_);
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(value(v).shape());
    n.has_grad = true;
  }
  return &n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractViolation("loss belongs to a different tape");
  if (backward_done_) throw ContractViolation("backward already ran on this tape; reset() before reuse");
  if (value(loss).numel() != 1) {
    throw ContractViolation("backward needs a scalar root, got shape " + shape_str(value(loss).shape()));
  }
  backward_done_ = true;
  if (!nodes_[loss.id_].requires_grad) return;
  grad_slot(loss)->fill(Real(1));

  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) {
      n.backward(*this, n.grad, n.value);
      // Intermediate gradients are dead once propagated.
      if (i != loss.id_) {
        n.grad = Tensor();
        n.has_grad = false;
      }
    } else if (n.param) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.zero_grad();
      auto dst = p.grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id_);
  if (n.has_grad) return n.grad;
  return Tensor(value(v).shape());
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

namespace ops {
namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

Tape& tape_of(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractViolation("operation mixes variables from different tapes");
  return a.tape();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ContractViolation(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                            shape_str(t.shape()));
  }
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class BinOp { kAdd, kSub, kMul };

Var binary(Var a, Var b, BinOp op) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool a_big = is_suffix(bv.shape(), av.shape());
  if (!a_big && !is_suffix(av.shape(), bv.shape())) {
    throw ContractViolation("incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  const Shape out_shape = a_big ? av.shape() : bv.shape();
  Tensor out(out_shape);
  const std::size_t n = out.numel();
  const std::size_t na = av.numel();
  const std::size_t nb = bv.numel();
  const Real* pa = av.ptr();
  const Real* pb = bv.ptr();
  Real* po = out.ptr();
  if (n > 0) {
    for (std::size_t i = 0; i < n; ++i) {
      const Real x = pa[i % na];
      const Real y = pb[i % nb];
      po[i] = op == BinOp::kAdd ? x + y : op == BinOp::kSub ? x - y : x * y;
    }
  }
  return tape.record(std::move(out), {a, b}, [a, b, op](Tape& t, const Tensor& g, const Tensor&) {
    const std::size_t n = g.numel();
    if (n == 0) return;
    const Real* pg = g.ptr();
    if (Tensor* ga = t.grad_slot(a)) {
      const std::size_t na = ga->numel();
      Real* d = ga->ptr();
      const Real* pb = t.value(b).ptr();
      const std::size_t nb = t.value(b).numel();
      for (std::size_t i = 0; i < n; ++i) {
        d[i % na] += op == BinOp::kMul ? pg[i] * pb[i % nb] : pg[i];
      }
    }
    if (Tensor* gb = t.grad_slot(b)) {
      const std::size_t nb = gb->numel();
      Real* d = gb->ptr();
      const Real* pa = t.value(a).ptr();
      const std::size_t na = t.value(a).numel();
      for (std::size_t i = 0; i < n; ++i) {
        d[i % nb] += op == BinOp::kMul ? pg[i] * pa[i % na] : op == BinOp::kSub ? -pg[i] : pg[i];
      }
    }
  });
}

template <typename Fwd, typename Bwd>
Var unary(Var a, Fwd fwd, Bwd bwd) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = fwd(av[i]);
  return a.tape().record(std::move(out), {a}, [a, bwd](Tape& t, const Tensor& g, const Tensor&) {
    Tensor* ga = t.grad_slot(a);
    if (!ga) return;
    const Tensor& x = t.value(a);
    for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bwd(x[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ContractViolation("matmul: inner dimensions differ " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  Tensor out({m, n});
  if (m && n) {
    Map(out.ptr(), m, n).noalias() = MapC(av.ptr(), m, k) * MapC(bv.ptr(), k, n);
  }
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g, const Tensor&) {
    if (!m || !n || !k) return;
    MapC G(g.ptr(), m, n);
    if (Tensor* ga = t.grad_slot(a)) Map(ga->ptr(), m, k).noalias() += G * MapC(t.value(b).ptr(), k, n).transpose();
    if (Tensor* gb = t.grad_slot(b)) Map(gb->ptr(), k, n).noalias() += MapC(t.value(a).ptr(), m, k).transpose() * G;
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul_nt");
  require_rank(bv, 2, "matmul_nt");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  if (bv.dim(1) != k) {
    throw ContractViolation("matmul_nt: inner dimensions differ " + shape_str(av.shape()) + " x " +
                            shape_str(bv.shape()) + "^T");
  }
  Tensor out({m, n});
  if (m && n) {
    Map(out.ptr(), m, n).noalias() = MapC(av.ptr(), m, k) * MapC(bv.ptr(), n, k).transpose();
  }
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g, const Tensor&) {
    if (!m || !n || !k) return;
    MapC G(g.ptr(), m, n);
    if (Tensor* ga = t.grad_slot(a)) Map(ga->ptr(), m, k).noalias() += G * MapC(t.value(b).ptr(), n, k);
    if (Tensor* gb = t.grad_slot(b)) Map(gb->ptr(), n, k).noalias() += G.transpose() * MapC(t.value(a).ptr(), m, k);
  });
}

Var add(Var a, Var b) { return binary(a, b, BinOp::kAdd); }
Var sub(Var a, Var b) { return binary(a, b, BinOp::kSub); }
Var mul(Var a, Var b) { return binary(a, b, BinOp::kMul); }

Var scale(Var a, Real c) {
  return unary(a, [c](Real x) { return c * x; }, [c](Real) { return c; });
}

Var gather_rows(Var table, std::span<const std::uint32_t> ids) {
  const Tensor& tv = table.value();
  require_rank(tv, 2, "gather_rows");
  const std::size_t n = tv.dim(0), d = tv.dim(1);
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= n) {
      throw ContractViolation("gather_rows: id " + std::to_string(ids[i]) + " out of range for " + std::to_string(n) +
                              " rows");
    }
    std::copy_n(tv.ptr() + static_cast<std::size_t>(ids[i]) * d, d, out.ptr() + i * d);
  }
  std::vector<std::uint32_t> idx(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [table, idx = std::move(idx), d](Tape& t, const Tensor& g, const Tensor&) {
    Tensor* gt = t.grad_slot(table);
    if (!gt) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Real* dst = gt->ptr() + static_cast<std::size_t>(idx[i]) * d;
      const Real* src = g.ptr() + i * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

Var segment_weighted_sum(Var values, Var weights, std::span<const std::uint32_t> segments,
                         std::size_t num_segments) {
  Tape& tape = tape_of(values, weights);
  const Tensor& vv = values.value();
  const Tensor& wv = weights.value();
  require_rank(vv, 2, "segment_weighted_sum");
  const std::size_t e = vv.dim(0), d = vv.dim(1);
  if (wv.numel() != e || segments.size() != e) {
    throw ContractViolation("segment_weighted_sum: " + std::to_string(e) + " rows but " +
                            std::to_string(wv.numel()) + " weights and " + std::to_string(segments.size()) +
                            " segment ids");
  }
  Tensor out({num_segments, d});
  for (std::size_t i = 0; i < e; ++i) {
    const std::size_t s = segments[i];
    if (s >= num_segments) throw ContractViolation("segment_weighted_sum: segment id out of range");
    const Real w = wv[i];
    const Real* src = vv.ptr() + i * d;
    Real* dst = out.ptr() + s * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
  }
  std::vector<std::uint32_t> seg(segments.begin(), segments.end());
  return tape.record(std::move(out), {values, weights},
                     [values, weights, seg = std::move(seg), d](Tape& t, const Tensor& g, const Tensor&) {
                       Tensor* gv = t.grad_slot(values);
                       Tensor* gw = t.grad_slot(weights);
                       const Tensor& vv = t.value(values);
                       const Tensor& wv = t.value(weights);
                       for (std::size_t i = 0; i < seg.size(); ++i) {
                         const Real* gs = g.ptr() + static_cast<std::size_t>(seg[i]) * d;
                         if (gv) {
                           Real* dst = gv->ptr() + i * d;
                           for (std::size_t c = 0; c < d; ++c) dst[c] += wv[i] * gs[c];
                         }
                         if (gw) {
                           const Real* src = vv.ptr() + i * d;
                           Real acc = 0;
                           for (std::size_t c = 0; c < d; ++c) acc += gs[c] * src[c];
                           (*gw)[i] += acc;
                         }
                       }
                     });
}

Var segment_softmax(Var scores, std::span<const std::uint32_t> segments, std::size_t num_segments) {
  const Tensor& sv = scores.value();
  const std::size_t e = sv.numel();
  if (segments.size() != e) throw ContractViolation("segment_softmax: one segment id per score required");
  std::vector<Real> max_s(num_segments, -std::numeric_limits<Real>::infinity());
  for (std::size_t i = 0; i < e; ++i) {
    if (segments[i] >= num_segments) throw ContractViolation("segment_softmax: segment id out of range");
    max_s[segments[i]] = std::max(max_s[segments[i]], sv[i]);
  }
  std::vector<Real> denom(num_segments, Real(0));
  Tensor out(sv.shape());
  for (std::size_t i = 0; i < e; ++i) {
    out[i] = std::exp(sv[i] - max_s[segments[i]]);
    denom[segments[i]] += out[i];
  }
  for (std::size_t i = 0; i < e; ++i) out[i] /= denom[segments[i]];

  std::vector<std::uint32_t> seg(segments.begin(), segments.end());
  return scores.tape().record(std::move(out), {scores},
                              [scores, seg = std::move(seg), num_segments](Tape& t, const Tensor& g, const Tensor& y) {
                                Tensor* gs = t.grad_slot(scores);
                                if (!gs) return;
                                std::vector<Real> dot(num_segments, Real(0));
                                for (std::size_t i = 0; i < seg.size(); ++i) dot[seg[i]] += y[i] * g[i];
                                for (std::size_t i = 0; i < seg.size(); ++i) (*gs)[i] += y[i] * (g[i] - dot[seg[i]]);
                              });
}

Var rowwise_dot(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "rowwise_dot");
  if (av.shape() != bv.shape()) {
    throw ContractViolation("rowwise_dot: shapes differ " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  const std::size_t e = av.dim(0), d = av.dim(1);
  Tensor out({e});
  for (std::size_t i = 0; i < e; ++i) {
    Real acc = 0;
    for (std::size_t c = 0; c < d; ++c) acc += av[i * d + c] * bv[i * d + c];
    out[i] = acc;
  }
  return tape.record(std::move(out), {a, b}, [a, b, e, d](Tape& t, const Tensor& g, const Tensor&) {
    if (Tensor* ga = t.grad_slot(a)) {
      const Tensor& bv = t.value(b);
      for (std::size_t i = 0; i < e; ++i)
        for (std::size_t c = 0; c < d; ++c) (*ga)[i * d + c] += g[i] * bv[i * d + c];
    }
    if (Tensor* gb = t.grad_slot(b)) {
      const Tensor& av = t.value(a);
      for (std::size_t i = 0; i < e; ++i)
        for (std::size_t c = 0; c < d; ++c) (*gb)[i * d + c] += g[i] * av[i * d + c];
    }
  });
}

Var concat_cols(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "concat_cols");
  require_rank(bv, 2, "concat_cols");
  if (av.dim(0) != bv.dim(0)) throw ContractViolation("concat_cols: row counts differ");
  const std::size_t m = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Tensor out({m, ca + cb});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(av.ptr() + i * ca, ca, out.ptr() + i * (ca + cb));
    std::copy_n(bv.ptr() + i * cb, cb, out.ptr() + i * (ca + cb) + ca);
  }
  return tape.record(std::move(out), {a, b}, [a, b, m, ca, cb](Tape& t, const Tensor& g, const Tensor&) {
    Tensor* ga = t.grad_slot(a);
    Tensor* gb = t.grad_slot(b);
    for (std::size_t i = 0; i < m; ++i) {
      const Real* src = g.ptr() + i * (ca + cb);
      if (ga)
        for (std::size_t c = 0; c < ca; ++c) (*ga)[i * ca + c] += src[c];
      if (gb)
        for (std::size_t c = 0; c < cb; ++c) (*gb)[i * cb + c] += src[ca + c];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value();
  out.reshape(std::move(shape));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g, const Tensor&) {
    Tensor* ga = t.grad_slot(a);
    if (!ga) return;
    for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i];
  });
}

namespace {

struct ConvDims {
  std::size_t batch, cin, h, w, cout, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& in, const Tensor& f) {
  require_rank(in, 4, "conv2d input");
  require_rank(f, 4, "conv2d filters");
  ConvDims d{in.dim(0), in.dim(1), in.dim(2), in.dim(3), f.dim(0), f.dim(2), f.dim(3), 0, 0};
  if (f.dim(1) != d.cin) throw ContractViolation("conv2d: channel mismatch");
  if (d.kh > d.h || d.kw > d.w || d.kh == 0 || d.kw == 0) {
    throw ContractViolation("conv2d: kernel " + shape_str(f.shape()) + " larger than input " + shape_str(in.shape()));
  }
  d.oh = d.h - d.kh + 1;
  d.ow = d.w - d.kw + 1;
  return d;
}

Var conv2d_impl(Var input, Var filters, const Var* bias) {
  Tape& tape = tape_of(input, filters);
  const Tensor& in = input.value();
  const Tensor& f = filters.value();
  const ConvDims d = conv_dims(in, f);
  if (bias && bias->value().numel() != d.cout) throw ContractViolation("conv2d: bias needs one value per filter");
  Tensor out({d.batch, d.cout, d.oh, d.ow});
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t co = 0; co < d.cout; ++co) {
      Real* o = out.ptr() + ((b * d.cout + co) * d.oh) * d.ow;
      const Real init = bias ? bias->value()[co] : Real(0);
      std::fill_n(o, d.oh * d.ow, init);
      for (std::size_t ci = 0; ci < d.cin; ++ci) {
        const Real* x = in.ptr() + ((b * d.cin + ci) * d.h) * d.w;
        const Real* k = f.ptr() + ((co * d.cin + ci) * d.kh) * d.kw;
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const Real kv = k[ky * d.kw + kx];
            for (std::size_t oy = 0; oy < d.oh; ++oy) {
              const Real* xr = x + (oy + ky) * d.w + kx;
              Real* orow = o + oy * d.ow;
              for (std::size_t ox = 0; ox < d.ow; ++ox) orow[ox] += kv * xr[ox];
            }
          }
        }
      }
    }
  }
  auto backward = [input, filters, d](Tape& t, const Tensor& g, Tensor* gbias) {
    Tensor* gi = t.grad_slot(input);
    Tensor* gf = t.grad_slot(filters);
    const Tensor& in = t.value(input);
    const Tensor& f = t.value(filters);
    for (std::size_t b = 0; b < d.batch; ++b) {
      for (std::size_t co = 0; co < d.cout; ++co) {
        const Real* go = g.ptr() + ((b * d.cout + co) * d.oh) * d.ow;
        if (gbias) {
          Real acc = 0;
          for (std::size_t p = 0; p < d.oh * d.ow; ++p) acc += go[p];
          (*gbias)[co] += acc;
        }
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
          const std::size_t xoff = ((b * d.cin + ci) * d.h) * d.w;
          const std::size_t koff = ((co * d.cin + ci) * d.kh) * d.kw;
          for (std::size_t ky = 0; ky < d.kh; ++ky) {
            for (std::size_t kx = 0; kx < d.kw; ++kx) {
              const Real kv = f[koff + ky * d.kw + kx];
              Real kacc = 0;
              for (std::size_t oy = 0; oy < d.oh; ++oy) {
                const std::size_t xrow = xoff + (oy + ky) * d.w + kx;
                const Real* grow = go + oy * d.ow;
                if (gi) {
                  Real* gir = gi->ptr() + xrow;
                  for (std::size_t ox = 0; ox < d.ow; ++ox) gir[ox] += kv * grow[ox];
                }
                if (gf) {
                  const Real* xr = in.ptr() + xrow;
                  for (std::size_t ox = 0; ox < d.ow; ++ox) kacc += grow[ox] * xr[ox];
                }
              }
              if (gf) (*gf)[koff + ky * d.kw + kx] += kacc;
            }
          }
        }
      }
    }
  };
  if (bias) {
    const Var bv = *bias;
    Tape& bt = bias->tape();
    if (&bt != &tape) throw ContractViolation("operation mixes variables from different tapes");
    return tape.record(std::move(out), {input, filters, bv},
                       [backward, bv](Tape& t, const Tensor& g, const Tensor&) { backward(t, g, t.grad_slot(bv)); });
  }
  return tape.record(std::move(out), {input, filters},
                     [backward](Tape& t, const Tensor& g, const Tensor&) { backward(t, g, nullptr); });
}

}  // namespace

Var conv2d(Var input, Var filters) { return conv2d_impl(input, filters, nullptr); }
Var conv2d(Var input, Var filters, Var bias) { return conv2d_impl(input, filters, &bias); }

Var tanh(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = std::tanh(av[i]);
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g, const Tensor& y) {
    Tensor* ga = t.grad_slot(a);
    if (!ga) return;
    for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * (Real(1) - y[i] * y[i]);
  });
}

Var relu(Var a) {
  return unary(a, [](Real x) { return x > 0 ? x : Real(0); }, [](Real x) { return x > 0 ? Real(1) : Real(0); });
}

Var sigmoid(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = Real(1) / (Real(1) + std::exp(-av[i]));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g, const Tensor& y) {
    Tensor* ga = t.grad_slot(a);
    if (!ga) return;
    for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * y[i] * (Real(1) - y[i]);
  });
}

Var dropout(Var a, Real rate, DropoutKey key, bool training) {
  if (!(rate >= 0 && rate < 1)) throw ContractViolation("dropout rate must lie in [0, 1)");
  if (!training || rate == 0) return a;
  const Tensor& av = a.value();
  const Real keep_scale = Real(1) / (Real(1) - rate);
  Tensor mask(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) {
    mask[i] = uniform_at({key.seed, key.layer, key.step, i}) >= rate ? keep_scale : Real(0);
  }
  Tape& tape = a.tape();
  return ops::mul(a, tape.constant(std::move(mask)));
}

Var sum(Var a) {
  const Tensor& av = a.value();
  Real acc = 0;
  for (std::size_t i = 0; i < av.numel(); ++i) acc += av[i];
  return a.tape().record(Tensor::scalar(acc), {a}, [a](Tape& t, const Tensor& g, const Tensor&) {
    Tensor* ga = t.grad_slot(a);
    if (!ga) return;
    for (std::size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += g[0];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().numel();
  if (n == 0) throw ContractViolation("mean of an empty tensor");
  return scale(sum(a), Real(1) / static_cast<Real>(n));
}

Var bce_loss(Var probs, Var targets, Real clip) {
  Tape& tape = tape_of(probs, targets);
  const Tensor& o = probs.value();
  const Tensor& tv = targets.value();
  if (o.shape() != tv.shape()) {
    throw ContractViolation("bce_loss: shapes differ " + shape_str(o.shape()) + " vs " + shape_str(tv.shape()));
  }
  const std::size_t n = o.numel();
  if (n == 0) throw ContractViolation("bce_loss: empty input");
  auto clipped = [clip](Real p) { return std::clamp(p, clip, Real(1) - clip); };
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real p = clipped(o[i]);
    acc += tv[i] * std::log(p) + (Real(1) - tv[i]) * std::log(Real(1) - p);
  }
  const Real inv_n = Real(1) / static_cast<Real>(n);
  return tape.record(Tensor::scalar(-acc * inv_n), {probs, targets},
                     [probs, targets, clipped, inv_n](Tape& t, const Tensor& g, const Tensor&) {
                       const Tensor& o = t.value(probs);
                       const Tensor& tv = t.value(targets);
                       const Real gs = g[0] * inv_n;
                       if (Tensor* go = t.grad_slot(probs)) {
                         for (std::size_t i = 0; i < o.numel(); ++i) {
                           const Real p = clipped(o[i]);
                           (*go)[i] += -gs * (tv[i] / p - (Real(1) - tv[i]) / (Real(1) - p));
                         }
                       }
                       if (Tensor* gt = t.grad_slot(targets)) {
                         for (std::size_t i = 0; i < o.numel(); ++i) {
                           const Real p = clipped(o[i]);
                           (*gt)[i] += -gs * (std::log(p) - std::log(Real(1) - p));
                         }
                       }
                     });
}

}  // namespace ops
}  // namespace cpgnn
