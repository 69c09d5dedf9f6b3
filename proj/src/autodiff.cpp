#include "geoloc/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <memory>

#include "geoloc/error.hpp"
#include "geoloc/kernels/kernels.hpp"

namespace geoloc::ad {
namespace {

std::atomic<std::uint64_t> g_next_tape_id{1};

Tape& tape_of(Var v) {
  if (v.tape == nullptr) fail(ErrorCode::kTape, "variable is not attached to a tape");
  return *v.tape;
}

Tape& common_tape(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape != a.tape) fail(ErrorCode::kTape, "operands recorded on different tapes");
  t.check_owned(a);
  t.check_owned(b);
  return t;
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  fail(ErrorCode::kShape, std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                              to_string(b));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    fail(ErrorCode::kShape, std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + to_string(t.shape()));
  }
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (dst) kernels::active().axpy(src.size(), 1.0, src.data().data(), dst->data().data());
}

template <typename F, typename D>
Var unary(Var x, F forward, D derivative_from_output) {
  Tape& t = tape_of(x);
  t.check_owned(x);
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return t.record(std::move(out), {x},
                  [derivative_from_output](const Tensor& y, const Tensor& g,
                                           std::span<Tensor* const> gi) {
                    if (!gi[0]) return;
                    auto d = gi[0]->data();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      d[i] += g[i] * derivative_from_output(y[i]);
                    }
                  });
}

}  // namespace

const Tensor& Var::value() const { return tape_of(*this).value(*this); }

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

void Tape::check_owned(Var v) const {
  if (v.tape != this || v.index >= nodes_.size()) {
    fail(ErrorCode::kTape, "variable does not belong to this tape");
  }
}

Tape::Node& Tape::node(Var v) {
  check_owned(v);
  return nodes_[v.index];
}

const Tape::Node& Tape::node(Var v) const {
  check_owned(v);
  return nodes_[v.index];
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), true, false, {}, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), false, false, {}, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> operands, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : operands) {
    check_owned(v);
    n.requires_grad = n.requires_grad || nodes_[v.index].requires_grad;
    n.operands.push_back(v.index);
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.has_grad) {
    // Lazily materialised zero gradient so callers can always read one.
    auto& mut = const_cast<Node&>(n);
    mut.grad = Tensor(n.value.shape());
    mut.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) fail(ErrorCode::kTape, "loss was not recorded on this tape");
  Node& root = node(loss);
  if (root.value.size() != 1 || root.value.rank() != 0) {
    fail(ErrorCode::kRank, "backward needs a scalar loss, got shape " +
                               to_string(root.value.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  root.grad = Tensor::scalar(1.0);
  root.has_grad = true;

  std::vector<Tensor*> grad_in;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    grad_in.assign(n.operands.size(), nullptr);
    for (std::size_t k = 0; k < n.operands.size(); ++k) {
      Node& op = nodes_[n.operands[k]];
      if (!op.requires_grad) continue;
      if (!op.has_grad) {
        op.grad = Tensor(op.value.shape());
        op.has_grad = true;
      }
      grad_in[k] = &op.grad;
    }
    n.backward(n.value, n.grad, grad_in);
  }
}

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    shape_mismatch("matmul", av.shape(), bv.shape());
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  kernels::active().gemm(false, false, m, n, k, av.data().data(), bv.data().data(),
                         out.data().data());
  const Tensor* ap = &av;
  const Tensor* bp = &bv;
  return t.record(std::move(out), {a, b},
                  [ap, bp, m, n, k](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    const auto& kt = kernels::active();
                    if (gi[0]) kt.gemm(false, true, m, k, n, g.data().data(), bp->data().data(),
                                       gi[0]->data().data());
                    if (gi[1]) kt.gemm(true, false, k, n, m, ap->data().data(), g.data().data(),
                                       gi[1]->data().data());
                  });
}

Var conv2d(Var x, Var w, std::size_t stride, std::size_t padding) {
  Tape& t = common_tape(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("conv2d input", xv, 4);
  require_rank("conv2d weight", wv, 4);
  if (xv.dim(1) != wv.dim(1)) shape_mismatch("conv2d", xv.shape(), wv.shape());
  if (stride == 0) fail(ErrorCode::kShape, "conv2d: stride must be positive");
  kernels::Conv2dGeometry geo{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0),
                              wv.dim(2), wv.dim(3), stride,    padding};
  if (geo.in_height + 2 * padding < geo.kernel_h || geo.in_width + 2 * padding < geo.kernel_w) {
    shape_mismatch("conv2d (kernel larger than padded input)", xv.shape(), wv.shape());
  }
  Tensor out({geo.batch, geo.out_channels, geo.out_height(), geo.out_width()});
  kernels::active().conv2d_forward(geo, xv.data().data(), wv.data().data(), out.data().data());
  const Tensor* xp = &xv;
  const Tensor* wp = &wv;
  return t.record(std::move(out), {x, w},
                  [xp, wp, geo](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    const auto& kt = kernels::active();
                    if (gi[0]) kt.conv2d_backward_data(geo, g.data().data(), wp->data().data(),
                                                       gi[0]->data().data());
                    if (gi[1]) kt.conv2d_backward_filter(geo, g.data().data(), xp->data().data(),
                                                         gi[1]->data().data());
                  });
}

Var maxpool2d(Var x, std::size_t window, std::size_t stride) {
  Tape& t = tape_of(x);
  t.check_owned(x);
  const Tensor& xv = x.value();
  require_rank("maxpool2d", xv, 4);
  if (window == 0 || stride == 0 || xv.dim(2) < window || xv.dim(3) < window) {
    fail(ErrorCode::kShape, "maxpool2d: window " + std::to_string(window) + " does not fit " +
                                to_string(xv.shape()));
  }
  const std::size_t b = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t ho = (h - window) / stride + 1, wo = (w - window) / stride + 1;
  Tensor out({b, c, ho, wo});
  std::vector<std::size_t> argmax(out.size());
  std::size_t oi = 0;
  for (std::size_t plane = 0; plane < b * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++oi) {
        std::size_t best = base + oy * stride * w + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = base + (oy * stride + ky) * w + ox * stride + kx;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        argmax[oi] = best;
        out[oi] = xv[best];
      }
    }
  }
  return t.record(std::move(out), {x},
                  [argmax = std::move(argmax)](const Tensor&, const Tensor& g,
                                               std::span<Tensor* const> gi) {
                    if (!gi[0]) return;
                    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[argmax[i]] += g[i];
                  });
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch("add", av.shape(), bv.shape());
  Tensor out = av;
  kernels::active().axpy(out.size(), 1.0, bv.data().data(), out.data().data());
  return t.record(std::move(out), {a, b},
                  [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    accumulate(gi[0], g);
                    accumulate(gi[1], g);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch("sub", av.shape(), bv.shape());
  Tensor out = av;
  kernels::active().axpy(out.size(), -1.0, bv.data().data(), out.data().data());
  return t.record(std::move(out), {a, b},
                  [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    accumulate(gi[0], g);
                    if (gi[1]) kernels::active().axpy(g.size(), -1.0, g.data().data(),
                                                      gi[1]->data().data());
                  });
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch("mul", av.shape(), bv.shape());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const Tensor* ap = &av;
  const Tensor* bp = &bv;
  return t.record(std::move(out), {a, b},
                  [ap, bp](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      if (gi[0]) (*gi[0])[i] += g[i] * (*bp)[i];
                      if (gi[1]) (*gi[1])[i] += g[i] * (*ap)[i];
                    }
                  });
}

Var scale(Var x, double factor) {
  Tape& t = tape_of(x);
  t.check_owned(x);
  Tensor out(x.value().shape());
  kernels::active().axpy(out.size(), factor, x.value().data().data(), out.data().data());
  return t.record(std::move(out), {x},
                  [factor](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    if (gi[0]) kernels::active().axpy(g.size(), factor, g.data().data(),
                                                      gi[0]->data().data());
                  });
}

Var bias_add(Var x, Var b) {
  Tape& t = common_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (xv.rank() < 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    shape_mismatch("bias_add", xv.shape(), bv.shape());
  }
  const std::size_t outer = xv.dim(0), channels = xv.dim(1);
  const std::size_t inner = xv.size() / (outer * channels);
  Tensor out = xv;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* row = out.data().data() + (o * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) row[i] += bv[c];
    }
  }
  return t.record(std::move(out), {x, b},
                  [outer, channels, inner](const Tensor&, const Tensor& g,
                                           std::span<Tensor* const> gi) {
                    accumulate(gi[0], g);
                    if (!gi[1]) return;
                    for (std::size_t o = 0; o < outer; ++o) {
                      for (std::size_t c = 0; c < channels; ++c) {
                        const double* row = g.data().data() + (o * channels + c) * inner;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < inner; ++i) acc += row[i];
                        (*gi[1])[c] += acc;
                      }
                    }
                  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) fail(ErrorCode::kShape, "concat of zero tensors");
  Tape& t = tape_of(parts[0]);
  const Shape& first = parts[0].value().shape();
  if (axis >= first.size()) {
    fail(ErrorCode::kShape, "concat axis " + std::to_string(axis) + " out of range for " +
                                to_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    common_tape(parts[0], p);
    const Shape& s = p.value().shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) shape_mismatch("concat", first, s);
    out_shape[axis] += s[axis];
    widths.push_back(s[axis]);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t total = out_shape[axis];

  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data().data() + o * widths[k] * inner, widths[k] * inner,
                  out.data().data() + (o * total + offset) * inner);
    }
    offset += widths[k];
  }
  return t.record(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                  [widths, outer, inner, total](const Tensor&, const Tensor& g,
                                                std::span<Tensor* const> gi) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < widths.size(); ++k) {
                      if (gi[k]) {
                        for (std::size_t o = 0; o < outer; ++o) {
                          kernels::active().axpy(widths[k] * inner, 1.0,
                                                 g.data().data() + (o * total + off) * inner,
                                                 gi[k]->data().data() + o * widths[k] * inner);
                        }
                      }
                      off += widths[k];
                    }
                  });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(x);
  t.check_owned(x);
  const Tensor& xv = x.value();
  if (axis >= xv.rank() || begin >= end || end > xv.dim(axis)) {
    fail(ErrorCode::kShape, "slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") on axis " + std::to_string(axis) + " of " +
                                to_string(xv.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= xv.dim(d);
  for (std::size_t d = axis + 1; d < xv.rank(); ++d) inner *= xv.dim(d);
  const std::size_t full = xv.dim(axis), width = end - begin;
  Shape out_shape = xv.shape();
  out_shape[axis] = width;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.data().data() + (o * full + begin) * inner, width * inner,
                out.data().data() + o * width * inner);
  }
  return t.record(std::move(out), {x},
                  [outer, inner, full, width, begin](const Tensor&, const Tensor& g,
                                                     std::span<Tensor* const> gi) {
                    if (!gi[0]) return;
                    for (std::size_t o = 0; o < outer; ++o) {
                      kernels::active().axpy(width * inner, 1.0,
                                             g.data().data() + o * width * inner,
                                             gi[0]->data().data() + (o * full + begin) * inner);
                    }
                  });
}

Var reshape(Var x, Shape shape) {
  Tape& t = tape_of(x);
  t.check_owned(x);
  Tensor out = x.value().reshaped(std::move(shape));
  return t.record(std::move(out), {x},
                  [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    accumulate(gi[0], g);
                  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  t.check_owned(x);
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return t.record(Tensor::scalar(acc), {x},
                  [](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    if (!gi[0]) return;
                    for (double& v : gi[0]->data()) v += g[0];
                  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  Tape& t = tape_of(x);
  t.check_owned(x);
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return t.record(Tensor::scalar(acc / n), {x},
                  [n](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    if (!gi[0]) return;
                    for (double& v : gi[0]->data()) v += g[0] / n;
                  });
}

Var global_avg_pool(Var x) {
  Tape& t = tape_of(x);
  t.check_owned(x);
  const Tensor& xv = x.value();
  require_rank("global_avg_pool", xv, 4);
  const std::size_t planes = xv.dim(0) * xv.dim(1);
  const std::size_t area = xv.dim(2) * xv.dim(3);
  Tensor out({xv.dim(0), xv.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < area; ++i) acc += xv[p * area + i];
    out[p] = acc / static_cast<double>(area);
  }
  return t.record(std::move(out), {x},
                  [planes, area](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    if (!gi[0]) return;
                    for (std::size_t p = 0; p < planes; ++p) {
                      const double share = g[p] / static_cast<double>(area);
                      for (std::size_t i = 0; i < area; ++i) (*gi[0])[p * area + i] += share;
                    }
                  });
}

double smooth_l1(double r) {
  const double a = std::abs(r);
  return a < 1.0 ? 0.5 * r * r : a - 0.5;
}

double smooth_l1_slope(double r) {
  if (std::abs(r) < 1.0) return r;
  return r > 0.0 ? 1.0 : -1.0;
}

Var smooth_l1_loss(Var pred, Var target) {
  Tape& t = common_tape(pred, target);
  const Tensor& pv = pred.value();
  const Tensor& tv = target.value();
  if (pv.shape() != tv.shape()) shape_mismatch("smooth_l1_loss", pv.shape(), tv.shape());
  const double n = static_cast<double>(pv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) acc += smooth_l1(pv[i] - tv[i]);
  const Tensor* pp = &pv;
  const Tensor* tp = &tv;
  return t.record(Tensor::scalar(acc / n), {pred, target},
                  [pp, tp, n](const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                    for (std::size_t i = 0; i < pp->size(); ++i) {
                      const double d = g[0] * smooth_l1_slope((*pp)[i] - (*tp)[i]) / n;
                      if (gi[0]) (*gi[0])[i] += d;
                      if (gi[1]) (*gi[1])[i] -= d;
                    }
                  });
}

}  // namespace geoloc::ad
