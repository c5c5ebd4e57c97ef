#include "acuity/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace acuity::ad {

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var constant(Tensor v) { return Var(std::move(v), false); }
Var parameter(Tensor v) { return Var(std::move(v), true); }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents.reserve(parents.size());
  for (auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.node());
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (root.value().size() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " + root.value().shape_str());

  // Iterative post-order DFS; each node enters `order` once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

namespace {

void accumulate(Node& parent, const Tensor& delta) {
  if (!parent.requires_grad) return;
  Tensor& g = parent.ensure_grad();
  const double* s = delta.data();
  double* d = g.data();
  for (std::size_t i = 0; i < delta.size(); ++i) d[i] += s[i];
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.value().shape_str() + " vs " + b.value().shape_str());
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  const double* bp = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += bp[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    accumulate(*n.parents[0], n.grad);
    accumulate(*n.parents[1], n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  const double* bp = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= bp[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) {
      Tensor& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        ga.data()[i] += n.grad.data()[i] * pb.value.data()[i];
    }
    if (pb.requires_grad) {
      Tensor& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        gb.data()[i] += n.grad.data()[i] * pa.value.data()[i];
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (p.value.data()[i] > 0.0) g.data()[i] += n.grad.data()[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return make_op(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      double s = n.value.data()[i];
      g.data()[i] += n.grad.data()[i] * s * (1.0 - s);
    }
  });
}

Var softmax(const Var& x) {
  const Tensor& in = x.value();
  std::size_t d = in.dim(in.rank() - 1);
  std::size_t rows = in.size() / d;
  Tensor out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = in.data() + r * d;
    double* dst = out.data() + r * d;
    double mx = src[0];
    for (std::size_t i = 1; i < d; ++i) mx = std::max(mx, src[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < d; ++i) sum += (dst[i] = std::exp(src[i] - mx));
    for (std::size_t i = 0; i < d; ++i) dst[i] /= sum;
  }
  return make_op(std::move(out), {x}, [d](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    std::size_t rows = n.value.size() / d;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* s = n.value.data() + r * d;
      const double* dy = n.grad.data() + r * d;
      double* dx = g.data() + r * d;
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += dy[i] * s[i];
      for (std::size_t i = 0; i < d; ++i) dx[i] += s[i] * (dy[i] - dot);
    }
  });
}

Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_op(Tensor::scalar(s), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    const double gv = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += gv;
  });
}

Var flatten(const Var& x) {
  const Tensor& in = x.value();
  if (in.rank() != 3) throw std::invalid_argument("flatten: expected rank-3 input");
  Tensor out = Tensor::from({in.dim(0), in.dim(1) * in.dim(2)}, in.values());
  return make_op(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g.data()[i] += n.grad.data()[i];
  });
}

Var concat(const Var& a, const Var& b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(0) != tb.dim(0))
    throw std::invalid_argument("concat: expects rank-2 inputs with equal batch");
  std::size_t B = ta.dim(0), fa = ta.dim(1), fb = tb.dim(1);
  Tensor out({B, fa + fb});
  for (std::size_t i = 0; i < B; ++i) {
    std::copy_n(ta.data() + i * fa, fa, out.data() + i * (fa + fb));
    std::copy_n(tb.data() + i * fb, fb, out.data() + i * (fa + fb) + fa);
  }
  return make_op(std::move(out), {a, b}, [B, fa, fb](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    for (std::size_t i = 0; i < B; ++i) {
      const double* g = n.grad.data() + i * (fa + fb);
      if (pa.requires_grad) {
        double* ga = pa.ensure_grad().data() + i * fa;
        for (std::size_t j = 0; j < fa; ++j) ga[j] += g[j];
      }
      if (pb.requires_grad) {
        double* gb = pb.ensure_grad().data() + i * fb;
        for (std::size_t j = 0; j < fb; ++j) gb[j] += g[fa + j];
      }
    }
  });
}

Var transpose12(const Var& x) {
  const Tensor& in = x.value();
  if (in.rank() != 3) throw std::invalid_argument("transpose12: expected rank-3 input");
  std::size_t B = in.dim(0), T = in.dim(1), D = in.dim(2);
  Tensor out({B, D, T});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t d = 0; d < D; ++d) out(b, d, t) = in(b, t, d);
  return make_op(std::move(out), {x}, [B, T, D](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < D; ++d) g(b, t, d) += n.grad(b, d, t);
  });
}

namespace {

std::size_t conv_out_len(std::size_t L, std::size_t K, int stride, int padding) {
  long out = (static_cast<long>(L) + 2L * padding - static_cast<long>(K)) / stride + 1;
  if (out < 1)
    throw std::invalid_argument("conv1d: output length < 1 (L=" + std::to_string(L) +
                                ", K=" + std::to_string(K) + ")");
  return static_cast<std::size_t>(out);
}

}  // namespace

Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
  const Tensor& in = x.value();
  const Tensor& ker = w.value();
  if (in.rank() != 3 || ker.rank() != 3)
    throw std::invalid_argument("conv1d: expected rank-3 input/kernels");
  if (in.dim(1) != ker.dim(1))
    throw std::invalid_argument("conv1d: channel mismatch " + in.shape_str() + " vs " +
                                ker.shape_str());
  if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
  const std::size_t B = in.dim(0), Cin = in.dim(1), L = in.dim(2);
  const std::size_t Cout = ker.dim(0), K = ker.dim(2);
  if (b.value().size() != Cout) throw std::invalid_argument("conv1d: bias size mismatch");
  const std::size_t Lout = conv_out_len(L, K, stride, padding);

  Tensor out({B, Cout, Lout});
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t co = 0; co < Cout; ++co) {
      double* orow = &out(bi, co, 0);
      const double bias = b.value()[co];
      for (std::size_t l = 0; l < Lout; ++l) orow[l] = bias;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const double* xrow = &in(bi, ci, 0);
        for (std::size_t k = 0; k < K; ++k) {
          const double wv = ker(co, ci, k);
          if (wv == 0.0) continue;
          for (std::size_t l = 0; l < Lout; ++l) {
            const long src = static_cast<long>(l) * stride + static_cast<long>(k) - padding;
            if (src >= 0 && src < static_cast<long>(L)) orow[l] += wv * xrow[src];
          }
        }
      }
    }
  }

  auto back = [B, Cin, Cout, L, K, Lout, stride, padding](Node& n) {
    Node& px = *n.parents[0];
    Node& pw = *n.parents[1];
    Node& pb = *n.parents[2];
    Tensor* gx = px.requires_grad ? &px.ensure_grad() : nullptr;
    Tensor* gw = pw.requires_grad ? &pw.ensure_grad() : nullptr;
    Tensor* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
    for (std::size_t bi = 0; bi < B; ++bi) {
      for (std::size_t co = 0; co < Cout; ++co) {
        const double* grow = &n.grad(bi, co, 0);
        if (gb) {
          double s = 0.0;
          for (std::size_t l = 0; l < Lout; ++l) s += grow[l];
          (*gb)[co] += s;
        }
        for (std::size_t ci = 0; ci < Cin; ++ci) {
          const double* xrow = &px.value(bi, ci, 0);
          double* gxrow = gx ? &(*gx)(bi, ci, 0) : nullptr;
          for (std::size_t k = 0; k < K; ++k) {
            const double wv = pw.value(co, ci, k);
            double dw = 0.0;
            for (std::size_t l = 0; l < Lout; ++l) {
              const long src = static_cast<long>(l) * stride + static_cast<long>(k) - padding;
              if (src < 0 || src >= static_cast<long>(L)) continue;
              if (gxrow) gxrow[src] += grow[l] * wv;
              dw += grow[l] * xrow[src];
            }
            if (gw) (*gw)(co, ci, k) += dw;
          }
        }
      }
    }
  };
  return make_op(std::move(out), {x, w, b}, std::move(back));
}

Var depthwise_conv1d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
  const Tensor& in = x.value();
  const Tensor& ker = w.value();
  if (in.rank() != 3 || ker.rank() != 2)
    throw std::invalid_argument("depthwise_conv1d: expected rank-3 input, rank-2 kernels");
  if (in.dim(1) != ker.dim(0))
    throw std::invalid_argument("depthwise_conv1d: channel mismatch");
  const std::size_t B = in.dim(0), C = in.dim(1), L = in.dim(2), K = ker.dim(1);
  if (b.value().size() != C) throw std::invalid_argument("depthwise_conv1d: bias size mismatch");
  const std::size_t Lout = conv_out_len(L, K, stride, padding);

  Tensor out({B, C, Lout});
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t c = 0; c < C; ++c) {
      double* orow = &out(bi, c, 0);
      const double* xrow = &in(bi, c, 0);
      const double bias = b.value()[c];
      for (std::size_t l = 0; l < Lout; ++l) {
        double s = bias;
        for (std::size_t k = 0; k < K; ++k) {
          const long src = static_cast<long>(l) * stride + static_cast<long>(k) - padding;
          if (src >= 0 && src < static_cast<long>(L)) s += ker(c, k) * xrow[src];
        }
        orow[l] = s;
      }
    }
  }

  auto back = [B, C, L, K, Lout, stride, padding](Node& n) {
    Node& px = *n.parents[0];
    Node& pw = *n.parents[1];
    Node& pb = *n.parents[2];
    Tensor* gx = px.requires_grad ? &px.ensure_grad() : nullptr;
    Tensor* gw = pw.requires_grad ? &pw.ensure_grad() : nullptr;
    Tensor* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
    for (std::size_t bi = 0; bi < B; ++bi) {
      for (std::size_t c = 0; c < C; ++c) {
        const double* grow = &n.grad(bi, c, 0);
        const double* xrow = &px.value(bi, c, 0);
        double* gxrow = gx ? &(*gx)(bi, c, 0) : nullptr;
        if (gb) {
          double s = 0.0;
          for (std::size_t l = 0; l < Lout; ++l) s += grow[l];
          (*gb)[c] += s;
        }
        for (std::size_t k = 0; k < K; ++k) {
          const double wv = pw.value(c, k);
          double dw = 0.0;
          for (std::size_t l = 0; l < Lout; ++l) {
            const long src = static_cast<long>(l) * stride + static_cast<long>(k) - padding;
            if (src < 0 || src >= static_cast<long>(L)) continue;
            if (gxrow) gxrow[src] += grow[l] * wv;
            dw += grow[l] * xrow[src];
          }
          if (gw) (*gw)(c, k) += dw;
        }
      }
    }
  };
  return make_op(std::move(out), {x, w, b}, std::move(back));
}

Var max_pool1d(const Var& x, int k, int stride) {
  const Tensor& in = x.value();
  if (in.rank() != 3) throw std::invalid_argument("max_pool1d: expected rank-3 input");
  if (k < 1 || stride < 1) throw std::invalid_argument("max_pool1d: bad k/stride");
  const std::size_t B = in.dim(0), C = in.dim(1), L = in.dim(2);
  if (L < static_cast<std::size_t>(k))
    throw std::invalid_argument("max_pool1d: window longer than input");
  const std::size_t Lout = (L - k) / stride + 1;

  Tensor out({B, C, Lout});
  auto argmax = std::make_shared<std::vector<std::size_t>>(B * C * Lout);
  std::size_t flat = 0;
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t c = 0; c < C; ++c) {
      const double* xrow = &in(bi, c, 0);
      for (std::size_t l = 0; l < Lout; ++l, ++flat) {
        std::size_t base = l * stride, best = base;
        double mv = xrow[base];
        for (int j = 1; j < k; ++j) {
          if (xrow[base + j] > mv) {
            mv = xrow[base + j];
            best = base + j;
          }
        }
        out(bi, c, l) = mv;
        (*argmax)[flat] = best;
      }
    }

  return make_op(std::move(out), {x}, [argmax, C, Lout](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    const std::size_t B = n.value.dim(0);
    std::size_t flat = 0;
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t c = 0; c < C; ++c) {
        double* grow = &g(bi, c, 0);
        for (std::size_t l = 0; l < Lout; ++l, ++flat)
          grow[(*argmax)[flat]] += n.grad(bi, c, l);
      }
  });
}

Var avg_pool1d(const Var& x, int k, int stride) {
  const Tensor& in = x.value();
  if (in.rank() != 3) throw std::invalid_argument("avg_pool1d: expected rank-3 input");
  if (k < 1 || stride < 1) throw std::invalid_argument("avg_pool1d: bad k/stride");
  const std::size_t B = in.dim(0), C = in.dim(1), L = in.dim(2);
  if (L < static_cast<std::size_t>(k))
    throw std::invalid_argument("avg_pool1d: window longer than input");
  const std::size_t Lout = (L - k) / stride + 1;

  Tensor out({B, C, Lout});
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t l = 0; l < Lout; ++l) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += in(bi, c, l * stride + j);
        out(bi, c, l) = s / k;
      }

  return make_op(std::move(out), {x}, [k, stride, C, Lout](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    const std::size_t B = n.value.dim(0);
    const double inv = 1.0 / k;
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t l = 0; l < Lout; ++l) {
          const double gv = n.grad(bi, c, l) * inv;
          for (int j = 0; j < k; ++j) g(bi, c, l * stride + j) += gv;
        }
  });
}

Var global_avg_pool1d(const Var& x) {
  const Tensor& in = x.value();
  if (in.rank() != 3) throw std::invalid_argument("global_avg_pool1d: expected rank-3 input");
  const std::size_t B = in.dim(0), C = in.dim(1), L = in.dim(2);
  Tensor out({B, C});
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      const double* xrow = &in(bi, c, 0);
      for (std::size_t l = 0; l < L; ++l) s += xrow[l];
      out(bi, c) = s / L;
    }
  return make_op(std::move(out), {x}, [B, C, L](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    const double inv = 1.0 / L;
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t c = 0; c < C; ++c) {
        const double gv = n.grad(bi, c) * inv;
        double* grow = &g(bi, c, 0);
        for (std::size_t l = 0; l < L; ++l) grow[l] += gv;
      }
  });
}

Var dense(const Var& x, const Var& w, const Var& b) {
  const Tensor& in = x.value();
  const Tensor& wt = w.value();
  if (wt.rank() != 2) throw std::invalid_argument("dense: weight must be rank-2");
  const std::size_t Fin = wt.dim(1), Fout = wt.dim(0);
  if (in.dim(in.rank() - 1) != Fin)
    throw std::invalid_argument("dense: input features " + in.shape_str() +
                                " do not match weight " + wt.shape_str());
  if (b.value().size() != Fout) throw std::invalid_argument("dense: bias size mismatch");
  const std::size_t rows = in.size() / Fin;

  std::vector<std::size_t> out_shape(in.shape());
  out_shape.back() = Fout;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * Fin;
    double* yr = out.data() + r * Fout;
    for (std::size_t o = 0; o < Fout; ++o) {
      const double* wr = wt.data() + o * Fin;
      double s = b.value()[o];
      for (std::size_t i = 0; i < Fin; ++i) s += wr[i] * xr[i];
      yr[o] = s;
    }
  }

  return make_op(std::move(out), {x, w, b}, [rows, Fin, Fout](Node& n) {
    Node& px = *n.parents[0];
    Node& pw = *n.parents[1];
    Node& pb = *n.parents[2];
    Tensor* gx = px.requires_grad ? &px.ensure_grad() : nullptr;
    Tensor* gw = pw.requires_grad ? &pw.ensure_grad() : nullptr;
    Tensor* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = px.value.data() + r * Fin;
      const double* gy = n.grad.data() + r * Fout;
      for (std::size_t o = 0; o < Fout; ++o) {
        const double gv = gy[o];
        if (gv == 0.0) continue;
        if (gb) (*gb)[o] += gv;
        const double* wr = pw.value.data() + o * Fin;
        double* gwr = gw ? gw->data() + o * Fin : nullptr;
        double* gxr = gx ? gx->data() + r * Fin : nullptr;
        for (std::size_t i = 0; i < Fin; ++i) {
          if (gxr) gxr[i] += gv * wr[i];
          if (gwr) gwr[i] += gv * xr[i];
        }
      }
    }
  });
}

Var channel_scale(const Var& x, const Var& g) {
  const Tensor& in = x.value();
  const Tensor& gate = g.value();
  if (in.rank() != 3 || gate.rank() != 2 || in.dim(0) != gate.dim(0) || in.dim(1) != gate.dim(1))
    throw std::invalid_argument("channel_scale: expected BxCxL and BxC");
  const std::size_t B = in.dim(0), C = in.dim(1), L = in.dim(2);
  Tensor out(in.shape());
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t c = 0; c < C; ++c) {
      const double gv = gate(bi, c);
      const double* xrow = &in(bi, c, 0);
      double* orow = &out(bi, c, 0);
      for (std::size_t l = 0; l < L; ++l) orow[l] = xrow[l] * gv;
    }
  return make_op(std::move(out), {x, g}, [B, C, L](Node& n) {
    Node& px = *n.parents[0];
    Node& pg = *n.parents[1];
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t c = 0; c < C; ++c) {
        const double* grow = &n.grad(bi, c, 0);
        const double* xrow = &px.value(bi, c, 0);
        if (px.requires_grad) {
          double* gx = &px.ensure_grad()(bi, c, 0);
          const double gv = pg.value(bi, c);
          for (std::size_t l = 0; l < L; ++l) gx[l] += grow[l] * gv;
        }
        if (pg.requires_grad) {
          double s = 0.0;
          for (std::size_t l = 0; l < L; ++l) s += grow[l] * xrow[l];
          pg.ensure_grad()(bi, c) += s;
        }
      }
  });
}

Var add_row_table(const Var& x, const Var& table) {
  const Tensor& in = x.value();
  const Tensor& tab = table.value();
  if (in.rank() != 3 || tab.rank() != 2 || in.dim(1) != tab.dim(0) || in.dim(2) != tab.dim(1))
    throw std::invalid_argument("add_row_table: expected BxTxD and TxD");
  const std::size_t B = in.dim(0), n_per = tab.size();
  Tensor out = in;
  for (std::size_t bi = 0; bi < B; ++bi) {
    double* dst = out.data() + bi * n_per;
    for (std::size_t i = 0; i < n_per; ++i) dst[i] += tab.data()[i];
  }
  return make_op(std::move(out), {x, table}, [B, n_per](Node& n) {
    Node& px = *n.parents[0];
    Node& pt = *n.parents[1];
    if (px.requires_grad) accumulate(px, n.grad);
    if (pt.requires_grad) {
      Tensor& gt = pt.ensure_grad();
      for (std::size_t bi = 0; bi < B; ++bi) {
        const double* g = n.grad.data() + bi * n_per;
        for (std::size_t i = 0; i < n_per; ++i) gt.data()[i] += g[i];
      }
    }
  });
}

Var scaled_dot_attention(const Var& q, const Var& k, const Var& v, std::size_t heads) {
  const Tensor& tq = q.value();
  check_same_shape(q, k, "attention");
  check_same_shape(q, v, "attention");
  if (tq.rank() != 3) throw std::invalid_argument("attention: expected rank-3 BxTxD inputs");
  const std::size_t B = tq.dim(0), T = tq.dim(1), D = tq.dim(2);
  if (heads == 0 || D % heads != 0)
    throw std::invalid_argument("attention: D=" + std::to_string(D) +
                                " not divisible by heads=" + std::to_string(heads));
  const std::size_t dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Attention weights are kept for the backward pass: B*H matrices of TxT.
  auto weights = std::make_shared<std::vector<double>>(B * heads * T * T);
  Tensor out({B, T, D});
  std::vector<double> scores(T);
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      double* A = weights->data() + (bi * heads + h) * T * T;
      for (std::size_t t = 0; t < T; ++t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t u = 0; u < T; ++u) {
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d)
            s += q.value()(bi, t, off + d) * k.value()(bi, u, off + d);
          scores[u] = s * scale;
          mx = std::max(mx, scores[u]);
        }
        double sum = 0.0;
        for (std::size_t u = 0; u < T; ++u) sum += (A[t * T + u] = std::exp(scores[u] - mx));
        for (std::size_t u = 0; u < T; ++u) A[t * T + u] /= sum;
        for (std::size_t d = 0; d < dh; ++d) {
          double s = 0.0;
          for (std::size_t u = 0; u < T; ++u) s += A[t * T + u] * v.value()(bi, u, off + d);
          out(bi, t, off + d) = s;
        }
      }
    }
  }

  auto back = [B, T, D, heads, dh, scale, weights](Node& n) {
    Node& pq = *n.parents[0];
    Node& pk = *n.parents[1];
    Node& pv = *n.parents[2];
    Tensor* gq = pq.requires_grad ? &pq.ensure_grad() : nullptr;
    Tensor* gk = pk.requires_grad ? &pk.ensure_grad() : nullptr;
    Tensor* gv = pv.requires_grad ? &pv.ensure_grad() : nullptr;
    std::vector<double> dA(T), dS(T);
    for (std::size_t bi = 0; bi < B; ++bi) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        const double* A = weights->data() + (bi * heads + h) * T * T;
        for (std::size_t t = 0; t < T; ++t) {
          const double* Arow = A + t * T;
          // dV and dA from dOut.
          double dot = 0.0;
          for (std::size_t u = 0; u < T; ++u) {
            double s = 0.0;
            for (std::size_t d = 0; d < dh; ++d)
              s += n.grad(bi, t, off + d) * pv.value(bi, u, off + d);
            dA[u] = s;
            dot += s * Arow[u];
          }
          if (gv) {
            for (std::size_t u = 0; u < T; ++u) {
              const double a = Arow[u];
              if (a == 0.0) continue;
              for (std::size_t d = 0; d < dh; ++d)
                (*gv)(bi, u, off + d) += a * n.grad(bi, t, off + d);
            }
          }
          // Softmax backward per row, then chain into Q and K.
          for (std::size_t u = 0; u < T; ++u) dS[u] = Arow[u] * (dA[u] - dot) * scale;
          for (std::size_t u = 0; u < T; ++u) {
            const double ds = dS[u];
            if (ds == 0.0) continue;
            for (std::size_t d = 0; d < dh; ++d) {
              if (gq) (*gq)(bi, t, off + d) += ds * pk.value(bi, u, off + d);
              if (gk) (*gk)(bi, u, off + d) += ds * pq.value(bi, t, off + d);
            }
          }
        }
      }
    }
  };
  return make_op(std::move(out), {q, k, v}, std::move(back));
}

Var attention(const Var& q, const Var& k, const Var& v, const Var& wo, const Var& bo,
              std::size_t heads) {
  return dense(scaled_dot_attention(q, k, v, heads), wo, bo);
}

Tensor positional_encoding(std::size_t T, std::size_t D) {
  if (T < 1 || D < 1) throw std::invalid_argument("positional_encoding: T, D must be >= 1");
  Tensor table({T, D});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) {
      const double exponent = static_cast<double>(2 * (d / 2)) / static_cast<double>(D);
      const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
      table(t, d) = (d % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return table;
}

Var bce_with_logits(const Var& logits, std::span<const double> labels) {
  const Tensor& z = logits.value();
  const std::size_t B = z.dim(0);
  if (z.size() != B)
    throw std::invalid_argument("bce_with_logits: logits must be B or Bx1");
  if (labels.size() != B)
    throw std::invalid_argument("bce_with_logits: label count mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double zi = z[i];
    if (!std::isfinite(zi)) throw std::invalid_argument("bce_with_logits: non-finite logit");
    loss += std::max(zi, 0.0) - zi * labels[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  loss /= static_cast<double>(B);

  std::vector<double> y(labels.begin(), labels.end());
  return make_op(Tensor::scalar(loss), {logits}, [y = std::move(y), B](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    const double gl = n.grad[0] / static_cast<double>(B);
    for (std::size_t i = 0; i < B; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-p.value[i]));
      g[i] += gl * (s - y[i]);
    }
  });
}

AdamW::AdamW(std::vector<Var> params, double lr, double weight_decay, double beta1,
             double beta2, double eps)
    : params_(std::move(params)),
      lr_(lr),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.value().shape());
    v_.emplace_back(p.value().shape());
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& theta = params_[pi].value();
    Tensor& g = params_[pi].grad();
    double* m = m_[pi].data();
    double* v = v_[pi].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      if (!std::isfinite(gi))
        throw TrainingDiverged("adamw_step: non-finite gradient in parameter " +
                               std::to_string(pi) + " at index " + std::to_string(i));
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * theta[i]);
    }
  }
}

}  // namespace acuity::ad
