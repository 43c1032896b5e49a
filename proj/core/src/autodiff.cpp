#include "signet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "signet/error.hpp"

namespace signet {

const Tensor& Var::value() const { return tape_->value(index_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::use(Parameter& p) {
  for (const auto& [param, index] : live_params_) {
    if (param == &p) return Var(this, index);
  }
  Tensor grad(p.value.shape());
  nodes_.push_back(Node{p.value, std::move(grad), nullptr});
  std::size_t index = nodes_.size() - 1;
  live_params_.emplace_back(&p, index);
  Parameter* target = &p;
  nodes_.back().backward = [index, target](Tape& t) {
    const Tensor& g = t.grad(index);
    for (std::size_t i = 0; i < g.numel(); ++i) target->grad[i] += g[i];
  };
  return Var(this, index);
}

Var Tape::record(Tensor value, BackwardFn backward) {
  Tensor grad(value.shape());
  nodes_.push_back(Node{std::move(value), std::move(grad), std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& loss, double seed) {
  if (loss.tape() != this) throw ContractError("backward: loss was recorded on another tape");
  if (loss.value().numel() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.value().shape()));
  }
  if (nodes_[loss.index()].grad.numel() == 0) return;  // constant loss, nothing reachable
  nodes_[loss.index()].grad[0] += seed;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this);
  }
}

void Tape::clear() {
  nodes_.clear();
  live_params_.clear();
}

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw ContractError("operands must live on one tape");
  }
  return *a.tape();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
  }
}

// c [m,n] += a [m,k] · b [k,n]
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double av = pa[i * k + l];
      if (av == 0.0) continue;
      const double* brow = pb + l * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c [m,n] += a [m,k] · b [n,k]ᵀ
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      pc[i * n + j] += acc;
    }
  }
}

// c [m,n] += a [k,m]ᵀ · b [k,n]
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t l = 0; l < k; ++l) {
    const double* arow = pa + l * m;
    const double* brow = pb + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

namespace {

// record() cannot hand a closure its own node index before insertion, so
// every op routes through this two-step helper.
Var record_op(Tape& t, Tensor value, std::function<void(Tape&, std::size_t)> backward) {
  struct Slot {
    std::function<void(Tape&, std::size_t)> fn;
    std::size_t self = 0;
  };
  auto slot = std::make_shared<Slot>();
  slot->fn = std::move(backward);
  Var v = t.record(std::move(value), [slot](Tape& tp) { slot->fn(tp, slot->self); });
  slot->self = v.index();
  return v;
}

Var matmul_impl(const Var& a, const Var& b, bool b_transposed) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const char* name = b_transposed ? "matmul_nt" : "matmul";
  if (av.rank() != 2 || bv.rank() != 2) {
    throw DimError(std::string(name) + ": operands must be rank-2, got " +
                   shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  const std::size_t inner_b = b_transposed ? bv.cols() : bv.rows();
  if (av.cols() != inner_b) {
    throw DimError(std::string(name) + ": shape " + shape_str(av.shape()) + " vs " +
                   shape_str(bv.shape()));
  }
  const std::size_t n = b_transposed ? bv.rows() : bv.cols();
  Tensor out({av.rows(), n});
  if (b_transposed) {
    gemm_nt_acc(av, bv, out);
  } else {
    gemm_acc(av, bv, out);
  }
  std::size_t ia = a.index(), ib = b.index();
  return record_op(t, std::move(out), [ia, ib, b_transposed](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av2 = tp.value(ia);
    const Tensor& bv2 = tp.value(ib);
    Tensor& ga = tp.grad(ia);
    Tensor& gb = tp.grad(ib);
    if (!b_transposed) {
      if (ga.numel()) gemm_nt_acc(g, bv2, ga);  // dA += G·Bᵀ
      if (gb.numel()) gemm_tn_acc(av2, g, gb);  // dB += Aᵀ·G
    } else {
      if (ga.numel()) gemm_acc(g, bv2, ga);     // dA += G·B
      if (gb.numel()) gemm_tn_acc(g, av2, gb);  // dB += Gᵀ·A
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  std::size_t ia = a.index(), ib = b.index();
  return record_op(t, std::move(out), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    Tensor& gb = tp.grad(ib);
    for (std::size_t i = 0; ga.numel() && i < g.numel(); ++i) ga[i] += g[i];
    for (std::size_t i = 0; gb.numel() && i < g.numel(); ++i) gb[i] += g[i];
  });
}

Var subtract(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a.value(), b.value(), "subtract");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  std::size_t ia = a.index(), ib = b.index();
  return record_op(t, std::move(out), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    Tensor& gb = tp.grad(ib);
    for (std::size_t i = 0; ga.numel() && i < g.numel(); ++i) ga[i] += g[i];
    for (std::size_t i = 0; gb.numel() && i < g.numel(); ++i) gb[i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  std::size_t ia = a.index(), ib = b.index();
  return record_op(t, std::move(out), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av = tp.value(ia);
    const Tensor& bv2 = tp.value(ib);
    Tensor& ga = tp.grad(ia);
    Tensor& gb = tp.grad(ib);
    for (std::size_t i = 0; ga.numel() && i < g.numel(); ++i) ga[i] += g[i] * bv2[i];
    for (std::size_t i = 0; gb.numel() && i < g.numel(); ++i) gb[i] += g[i] * av[i];
  });
}

Var scale(const Var& a, double c) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  std::size_t ia = a.index();
  return record_op(t, std::move(out), [ia, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; ga.numel() && i < g.numel(); ++i) ga[i] += c * g[i];
  });
}

Var add_bias(const Var& x, const Var& bias) {
  Tape& t = same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || bv.numel() != xv.cols()) {
    throw DimError("add_bias: shape " + shape_str(xv.shape()) + " vs " + shape_str(bv.shape()));
  }
  Tensor out = xv;
  const std::size_t m = xv.rows(), n = xv.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bv[j];
  }
  std::size_t ix = x.index(), ib = bias.index();
  return record_op(t, std::move(out), [ix, ib, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    Tensor& gb = tp.grad(ib);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gv = g.at(i, j);
        if (gx.numel()) gx.at(i, j) += gv;
        if (gb.numel()) gb[j] += gv;
      }
    }
  });
}

namespace {

// Elementwise op whose derivative is a function of the output value.
template <class Fwd, class DFromY>
Var unary_from_output(const Var& x, Fwd fwd, DFromY dy) {
  Tape& t = *x.tape();
  Tensor out = x.value();
  for (double& v : out.data()) v = fwd(v);
  std::size_t ix = x.index();
  return record_op(t, std::move(out), [ix, dy](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; gx.numel() && i < g.numel(); ++i) gx[i] += g[i] * dy(y[i]);
  });
}

}  // namespace

Var sigmoid(const Var& x) {
  return unary_from_output(
      x, [](double v) { return stable_sigmoid(v); }, [](double y) { return y * (1.0 - y); });
}

Var tanh_act(const Var& x) {
  return unary_from_output(
      x, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Var relu(const Var& x) {
  return unary_from_output(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Var softmax_rows(const Var& x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimError("softmax_rows: need rank-2, got " + shape_str(xv.shape()));
  Tensor out = xv;
  const std::size_t m = xv.rows(), n = xv.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, out.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(out.at(i, j) - mx);
      sum += out.at(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= sum;
  }
  std::size_t ix = x.index();
  return record_op(t, std::move(out), [ix, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad(ix);
    if (!gx.numel()) return;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < n; ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

Var transpose(const Var& x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimError("transpose: need rank-2, got " + shape_str(xv.shape()));
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = xv.at(i, j);
  }
  std::size_t ix = x.index();
  return record_op(t, std::move(out), [ix, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    if (!gx.numel()) return;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) gx.at(i, j) += g.at(j, i);
    }
  });
}

Var reshape(const Var& x, Shape to) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (shape_numel(to) != xv.numel()) {
    throw DimError("reshape: " + shape_str(xv.shape()) + " to " + shape_str(to));
  }
  Tensor out(std::move(to), xv.data());
  std::size_t ix = x.index();
  return record_op(t, std::move(out), [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; gx.numel() && i < g.numel(); ++i) gx[i] += g[i];
  });
}

Var concat(const Var& a, const Var& b, int axis) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || (axis != 0 && axis != 1)) {
    throw DimError("concat: need rank-2 operands and axis 0 or 1");
  }
  const std::size_t keep = axis == 0 ? 1 : 0;
  if (av.shape()[keep] != bv.shape()[keep]) {
    throw DimError("concat: shape " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  Tensor out;
  if (axis == 0) {
    out = Tensor({av.rows() + bv.rows(), av.cols()});
    std::copy(av.data().begin(), av.data().end(), out.data().begin());
    std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + av.numel());
  } else {
    out = Tensor({av.rows(), av.cols() + bv.cols()});
    for (std::size_t i = 0; i < av.rows(); ++i) {
      for (std::size_t j = 0; j < av.cols(); ++j) out.at(i, j) = av.at(i, j);
      for (std::size_t j = 0; j < bv.cols(); ++j) out.at(i, av.cols() + j) = bv.at(i, j);
    }
  }
  std::size_t ia = a.index(), ib = b.index();
  const std::size_t am = av.rows(), an = av.cols();
  return record_op(t, std::move(out), [ia, ib, axis, am, an](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    Tensor& gb = tp.grad(ib);
    if (axis == 0) {
      for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g[i];
      for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += g[am * an + i];
    } else {
      const std::size_t bn = g.cols() - an;
      for (std::size_t i = 0; i < am; ++i) {
        for (std::size_t j = 0; ga.numel() && j < an; ++j) ga.at(i, j) += g.at(i, j);
        for (std::size_t j = 0; gb.numel() && j < bn; ++j) gb.at(i, j) += g.at(i, an + j);
      }
    }
  });
}

Var slice(const Var& x, int axis, std::size_t begin, std::size_t end) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || (axis != 0 && axis != 1)) {
    throw DimError("slice: need rank-2 operand and axis 0 or 1");
  }
  const std::size_t limit = xv.shape()[static_cast<std::size_t>(axis)];
  if (begin >= end || end > limit) {
    throw DimError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                   ") out of " + shape_str(xv.shape()));
  }
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out;
  if (axis == 0) {
    out = Tensor({end - begin, n});
    std::copy(xv.data().begin() + begin * n, xv.data().begin() + end * n, out.data().begin());
  } else {
    out = Tensor({m, end - begin});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = begin; j < end; ++j) out.at(i, j - begin) = xv.at(i, j);
    }
  }
  std::size_t ix = x.index();
  return record_op(t, std::move(out), [ix, axis, begin, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    if (!gx.numel()) return;
    if (axis == 0) {
      for (std::size_t i = 0; i < g.numel(); ++i) gx[begin * n + i] += g[i];
    } else {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gx.at(i, begin + j) += g.at(i, j);
      }
    }
  });
}

Var reduce_sum(const Var& x) {
  Tape& t = *x.tape();
  double sum = 0.0;
  for (double v : x.value().data()) sum += v;
  std::size_t ix = x.index();
  return record_op(t, Tensor::scalar(sum), [ix](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;  // no-op when x is constant
  });
}

Var reduce_mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x.value().numel());
  return scale(reduce_sum(x), inv);
}

Var mean_rows(const Var& x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimError("mean_rows: need rank-2, got " + shape_str(xv.shape()));
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += xv.at(i, j);
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
  std::size_t ix = x.index();
  return record_op(t, std::move(out), [ix, m, n, inv](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    if (!gx.numel()) return;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) gx.at(i, j) += g[j] * inv;
    }
  });
}

Var dropout(const Var& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  if (rate == 0.0) return x;
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const double scale_up = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(xv.numel());
  Tensor out = xv;
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    const double keep = rng.next_unit() >= rate ? scale_up : 0.0;
    (*mask)[i] = keep;
    out[i] *= keep;
  }
  std::size_t ix = x.index();
  return record_op(t, std::move(out), [ix, mask](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; gx.numel() && i < g.numel(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  Tape& t = same_tape(x, gain);
  same_tape(gain, bias);
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || gv.numel() != xv.cols() || bv.numel() != xv.cols()) {
    throw DimError("layer_norm_rows: shape " + shape_str(xv.shape()) + " with gain " +
                   shape_str(gv.shape()));
  }
  const std::size_t m = xv.rows(), n = xv.cols();
  auto xhat = std::make_shared<Tensor>(Shape{m, n});
  auto inv_sd = std::make_shared<std::vector<double>>(m);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xv.at(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double isd = 1.0 / std::sqrt(var + eps);
    (*inv_sd)[i] = isd;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xv.at(i, j) - mean) * isd;
      xhat->at(i, j) = h;
      out.at(i, j) = h * gv[j] + bv[j];
    }
  }
  std::size_t ix = x.index(), ig = gain.index(), ib = bias.index();
  return record_op(t, std::move(out), [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& gv2 = tp.value(ig);
    Tensor& gx = tp.grad(ix);
    Tensor& gg = tp.grad(ig);
    Tensor& gb = tp.grad(ib);
    for (std::size_t i = 0; i < m; ++i) {
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double dh = g.at(i, j) * gv2[j];
        mean_dh += dh;
        mean_dh_h += dh * xhat->at(i, j);
        if (gg.numel()) gg[j] += g.at(i, j) * xhat->at(i, j);
        if (gb.numel()) gb[j] += g.at(i, j);
      }
      if (!gx.numel()) continue;
      mean_dh /= static_cast<double>(n);
      mean_dh_h /= static_cast<double>(n);
      const double isd = (*inv_sd)[i];
      for (std::size_t j = 0; j < n; ++j) {
        const double dh = g.at(i, j) * gv2[j];
        gx.at(i, j) += isd * (dh - mean_dh - xhat->at(i, j) * mean_dh_h);
      }
    }
  });
}

Var cross_entropy_logits(const Var& logits, const std::vector<int>& labels) {
  Tape& t = *logits.tape();
  const Tensor& lv = logits.value();
  if (lv.rank() != 2 || lv.rows() != labels.size()) {
    throw DimError("cross_entropy_logits: logits " + shape_str(lv.shape()) + " vs " +
                   std::to_string(labels.size()) + " labels");
  }
  const std::size_t m = lv.rows(), n = lv.cols();
  for (int lbl : labels) {
    if (lbl < 0 || static_cast<std::size_t>(lbl) >= n) {
      throw ContractError("cross_entropy_logits: label out of range");
    }
  }
  auto probs = std::make_shared<Tensor>(Shape{m, n});
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, lv.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(lv.at(i, j) - mx);
      probs->at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < n; ++j) probs->at(i, j) /= sum;
    loss -= std::log(probs->at(i, static_cast<std::size_t>(labels[i])));
  }
  loss /= static_cast<double>(m);
  std::size_t il = logits.index();
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return record_op(t, Tensor::scalar(loss), [=](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0] / static_cast<double>(m);
    Tensor& gl = tp.grad(il);
    if (!gl.numel()) return;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double onehot = static_cast<std::size_t>((*labels_copy)[i]) == j ? 1.0 : 0.0;
        gl.at(i, j) += g * (probs->at(i, j) - onehot);
      }
    }
  });
}

Var conv1d(const Var& x, const Var& weights, const Var& bias, std::size_t stride,
           std::size_t padding) {
  Tape& t = same_tape(x, weights);
  same_tape(weights, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || wv.rank() != 3) {
    throw DimError("conv1d: input " + shape_str(xv.shape()) + " with weights " +
                   shape_str(wv.shape()));
  }
  const std::size_t c_in = xv.rows(), len = xv.cols();
  const std::size_t c_out = wv.shape()[0], k = wv.shape()[2];
  if (wv.shape()[1] != c_in) {
    throw DimError("conv1d: weights expect " + std::to_string(wv.shape()[1]) + " channels, input has " +
                   std::to_string(c_in));
  }
  if (bv.numel() != c_out) {
    throw DimError("conv1d: bias " + shape_str(bv.shape()) + " vs " + std::to_string(c_out) +
                   " output channels");
  }
  if (stride == 0) throw ConfigError("conv1d: stride must be positive");
  if (len + 2 * padding < k) {
    throw ConfigError("conv1d: kernel " + std::to_string(k) + " longer than padded input " +
                      std::to_string(len + 2 * padding));
  }
  const std::size_t out_len = (len + 2 * padding - k) / stride + 1;
  Tensor out({c_out, out_len});
  const double* px = xv.data().data();
  const double* pw = wv.data().data();
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t j = 0; j < out_len; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < c_in; ++c) {
        const double* wrow = pw + (o * c_in + c) * k;
        const double* xrow = px + c * len;
        for (std::size_t a = 0; a < k; ++a) {
          const std::ptrdiff_t pos =
              static_cast<std::ptrdiff_t>(j * stride + a) - static_cast<std::ptrdiff_t>(padding);
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;  // zero padding
          acc += wrow[a] * xrow[pos];
        }
      }
      out.at(o, j) = acc + bv[o];
    }
  }
  std::size_t ix = x.index(), iw = weights.index(), ib = bias.index();
  return record_op(
      t, std::move(out),
      [ix, iw, ib, c_in, c_out, k, len, out_len, stride, padding](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xv2 = tp.value(ix);
        const Tensor& wv2 = tp.value(iw);
        Tensor& gx = tp.grad(ix);
        Tensor& gw = tp.grad(iw);
        Tensor& gb = tp.grad(ib);
        const bool want_x = gx.numel() != 0;
        const bool want_w = gw.numel() != 0;
        for (std::size_t o = 0; o < c_out; ++o) {
          for (std::size_t j = 0; j < out_len; ++j) {
            const double gv = g.at(o, j);
            if (gv == 0.0) continue;
            if (gb.numel()) gb[o] += gv;
            for (std::size_t c = 0; c < c_in; ++c) {
              for (std::size_t a = 0; a < k; ++a) {
                const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(j * stride + a) -
                                           static_cast<std::ptrdiff_t>(padding);
                if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
                if (want_w) gw.data()[(o * c_in + c) * k + a] += gv * xv2.at(c, static_cast<std::size_t>(pos));
                if (want_x) gx.at(c, static_cast<std::size_t>(pos)) += gv * wv2.data()[(o * c_in + c) * k + a];
              }
            }
          }
        }
      });
}

Var pool1d(const Var& x, std::size_t k, PoolMode mode) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimError("pool1d: need rank-2, got " + shape_str(xv.shape()));
  if (k == 0) throw ConfigError("pool1d: window must be positive");
  const std::size_t c = xv.rows(), len = xv.cols();
  if (len < k) {
    throw ConfigError("pool1d: window " + std::to_string(k) + " exceeds length " +
                      std::to_string(len));
  }
  const std::size_t out_len = len / k;
  Tensor out({c, out_len});
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  if (mode == PoolMode::kMax) argmax->resize(c * out_len);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t j = 0; j < out_len; ++j) {
      if (mode == PoolMode::kMax) {
        std::size_t best = j * k;
        double bv = xv.at(ch, best);
        for (std::size_t a = 1; a < k; ++a) {
          const double v = xv.at(ch, j * k + a);
          if (v > bv) {  // strict: ties keep the first index
            bv = v;
            best = j * k + a;
          }
        }
        out.at(ch, j) = bv;
        (*argmax)[ch * out_len + j] = best;
      } else {
        double sum = 0.0;
        for (std::size_t a = 0; a < k; ++a) sum += xv.at(ch, j * k + a);
        out.at(ch, j) = sum / static_cast<double>(k);
      }
    }
  }
  std::size_t ix = x.index();
  return record_op(t, std::move(out), [ix, k, c, out_len, mode, argmax](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    if (!gx.numel()) return;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t j = 0; j < out_len; ++j) {
        const double gv = g.at(ch, j);
        if (mode == PoolMode::kMax) {
          gx.at(ch, (*argmax)[ch * out_len + j]) += gv;
        } else {
          const double share = gv / static_cast<double>(k);
          for (std::size_t a = 0; a < k; ++a) gx.at(ch, j * k + a) += share;
        }
      }
    }
  });
}

Var matmul(const Var& a, const Var& b) { return matmul_impl(a, b, false); }
Var matmul_nt(const Var& a, const Var& b) { return matmul_impl(a, b, true); }

}  // namespace signet
