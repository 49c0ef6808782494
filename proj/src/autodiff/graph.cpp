// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "autodiff/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

namespace wiper {

namespace {

using Index = std::ptrdiff_t;

std::string op_error(std::string_view op, const std::string& what) { return std::string(op) + ": " + what; }

}  // namespace

template <std::floating_point T>
Var Graph<T>::push(std::string_view op, Tensor<T> value, bool requires_grad, BackwardFn fn) {
  require(!backward_done_, ErrorCode::bad_state, "graph already differentiated; record a new forward pass");
  require(value.all_finite(), ErrorCode::non_finite, op_error(op, "non-finite value"));
  Node n;
  n.op = op;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward_fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <std::floating_point T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  require(v.valid() && v.id < nodes_.size(), ErrorCode::invalid_argument, "variable does not belong to this graph");
  return nodes_[v.id];
}

template <std::floating_point T>
const Tensor<T>& Graph<T>::value(Var v) const {
  const Node& n = node(v);
  return n.owned ? *n.owned : *n.borrowed;
}

template <std::floating_point T>
std::span<const T> Graph<T>::grad(Var v) const {
  return node(v).grad;
}

template <std::floating_point T>
bool Graph<T>::requires_grad(Var v) const {
  return node(v).requires_grad;
}

template <std::floating_point T>
std::vector<T>& Graph<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(Var{id}).size(), T{0});
  return n.grad;
}

template <std::floating_point T>
Var Graph<T>::constant(Tensor<T> value) {
  return push("constant", std::move(value), false, {});
}

template <std::floating_point T>
Var Graph<T>::constant_ref(const Tensor<T>& value) {
  require(!backward_done_, ErrorCode::bad_state, "graph already differentiated; record a new forward pass");
  require(value.all_finite(), ErrorCode::non_finite, "constant: non-finite value");
  Node n;
  n.op = "constant";
  n.borrowed = &value;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <std::floating_point T>
Var Graph<T>::parameter(Tensor<T>& param) {
  require(!backward_done_, ErrorCode::bad_state, "graph already differentiated; record a new forward pass");
  require(param.all_finite(), ErrorCode::non_finite, "parameter: non-finite value");
  Node n;
  n.op = "parameter";
  n.borrowed = &param;
  n.leaf = &param;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <std::floating_point T>
Var Graph<T>::linear(Var x, Var w, Var b) {
  const Tensor<T>& X = value(x);
  const Tensor<T>& W = value(w);
  require(X.rank() == 2 && W.rank() == 2 && X.extent(1) == W.extent(1), ErrorCode::shape_mismatch,
          op_error("linear", "input " + shape_string(X.shape()) + " vs weight " + shape_string(W.shape())));
  const std::size_t batch = X.extent(0), in = X.extent(1), out = W.extent(0);
  const Tensor<T>* bias = nullptr;
  if (b.valid()) {
    bias = &value(b);
    require(bias->rank() == 1 && bias->extent(0) == out, ErrorCode::shape_mismatch,
            op_error("linear", "bias " + shape_string(bias->shape())));
  }

  Tensor<T> y({batch, out});
  const T* xd = X.data().data();
  const T* wd = W.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out; ++o) {
      T acc = bias ? (*bias)[o] : T{0};
      const T* xr = xd + n * in;
      const T* wr = wd + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      y[n * out + o] = acc;
    }
  }

  const bool rg = needs(x) || needs(w) || needs(b);
  return push("linear", std::move(y), rg, [x, w, b, batch, in, out](Graph& g, std::size_t self) {
    auto G = g.self_grad(self);
    if (g.needs(x)) {
      auto& gx = g.grad_buffer(x.id);
      const T* wd = g.value(w).data().data();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t o = 0; o < out; ++o) {
          const T go = G[n * out + o];
          if (go == T{0}) continue;
          const T* wr = wd + o * in;
          T* gr = gx.data() + n * in;
          for (std::size_t i = 0; i < in; ++i) gr[i] += go * wr[i];
        }
      }
    }
    if (g.needs(w)) {
      auto& gw = g.grad_buffer(w.id);
      const T* xd = g.value(x).data().data();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t o = 0; o < out; ++o) {
          const T go = G[n * out + o];
          if (go == T{0}) continue;
          const T* xr = xd + n * in;
          T* gr = gw.data() + o * in;
          for (std::size_t i = 0; i < in; ++i) gr[i] += go * xr[i];
        }
      }
    }
    if (g.needs(b)) {
      auto& gb = g.grad_buffer(b.id);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < out; ++o) gb[o] += G[n * out + o];
    }
  });
}

template <std::floating_point T>
Var Graph<T>::conv2d(Var x, Var w, Var b, std::size_t padding) {
  const Tensor<T>& X = value(x);
  const Tensor<T>& W = value(w);
  require(X.rank() == 4 && W.rank() == 4 && X.extent(1) == W.extent(1), ErrorCode::shape_mismatch,
          op_error("conv2d", "input " + shape_string(X.shape()) + " vs weight " + shape_string(W.shape())));
  const Index batch = static_cast<Index>(X.extent(0));
  const Index channels = static_cast<Index>(X.extent(1));
  const Index height = static_cast<Index>(X.extent(2));
  const Index width = static_cast<Index>(X.extent(3));
  const Index kernels = static_cast<Index>(W.extent(0));
  const Index kh = static_cast<Index>(W.extent(2));
  const Index kw = static_cast<Index>(W.extent(3));
  const Index pad = static_cast<Index>(padding);
  const Index out_h = height + 2 * pad - kh + 1;
  const Index out_w = width + 2 * pad - kw + 1;
  require(out_h > 0 && out_w > 0, ErrorCode::shape_mismatch, op_error("conv2d", "kernel larger than padded input"));
  const Tensor<T>* bias = nullptr;
  if (b.valid()) {
    bias = &value(b);
    require(bias->rank() == 1 && static_cast<Index>(bias->extent(0)) == kernels, ErrorCode::shape_mismatch,
            op_error("conv2d", "bias " + shape_string(bias->shape())));
  }

  struct Geometry {
    Index batch, channels, height, width, kernels, kh, kw, pad, out_h, out_w;
  };
  const Geometry geo{batch, channels, height, width, kernels, kh, kw, pad, out_h, out_w};

  // Visits every (output pixel, input pixel, weight) triple in a fixed order.
  // `fn(out_offset, in_offset, weight_offset, count)` handles one contiguous row run.
  auto for_each_run = [](const Geometry& gm, auto&& fn) {
    for (Index n = 0; n < gm.batch; ++n) {
      for (Index k = 0; k < gm.kernels; ++k) {
        const Index out_base = (n * gm.kernels + k) * gm.out_h * gm.out_w;
        for (Index c = 0; c < gm.channels; ++c) {
          const Index in_base = (n * gm.channels + c) * gm.height * gm.width;
          for (Index ky = 0; ky < gm.kh; ++ky) {
            const Index oy_lo = std::max<Index>(0, gm.pad - ky);
            const Index oy_hi = std::min<Index>(gm.out_h, gm.height + gm.pad - ky);
            for (Index kx = 0; kx < gm.kw; ++kx) {
              const Index ox_lo = std::max<Index>(0, gm.pad - kx);
              const Index ox_hi = std::min<Index>(gm.out_w, gm.width + gm.pad - kx);
              if (ox_hi <= ox_lo) continue;
              const Index w_off = ((k * gm.channels + c) * gm.kh + ky) * gm.kw + kx;
              for (Index oy = oy_lo; oy < oy_hi; ++oy) {
                const Index iy = oy + ky - gm.pad;
                fn(out_base + oy * gm.out_w + ox_lo, in_base + iy * gm.width + ox_lo + kx - gm.pad, w_off,
                   ox_hi - ox_lo);
              }
            }
          }
        }
      }
    }
  };

  Tensor<T> y({static_cast<std::size_t>(batch), static_cast<std::size_t>(kernels), static_cast<std::size_t>(out_h),
               static_cast<std::size_t>(out_w)});
  T* yd = y.data().data();
  if (bias) {
    for (Index n = 0; n < batch; ++n)
      for (Index k = 0; k < kernels; ++k)
        std::fill_n(yd + (n * kernels + k) * out_h * out_w, out_h * out_w, (*bias)[static_cast<std::size_t>(k)]);
  }
  const T* xd = X.data().data();
  const T* wd = W.data().data();
  for_each_run(geo, [&](Index o, Index i, Index wo, Index count) {
    const T wv = wd[wo];
    T* out = yd + o;
    const T* in = xd + i;
    for (Index t = 0; t < count; ++t) out[t] += wv * in[t];
  });

  const bool rg = needs(x) || needs(w) || needs(b);
  return push("conv2d", std::move(y), rg, [x, w, b, geo, for_each_run](Graph& g, std::size_t self) {
    auto G = g.self_grad(self);
    const T* gd = G.data();
    if (g.needs(x)) {
      auto& gx = g.grad_buffer(x.id);
      const T* wd = g.value(w).data().data();
      for_each_run(geo, [&](Index o, Index i, Index wo, Index count) {
        const T wv = wd[wo];
        T* dst = gx.data() + i;
        const T* src = gd + o;
        for (Index t = 0; t < count; ++t) dst[t] += wv * src[t];
      });
    }
    if (g.needs(w)) {
      auto& gw = g.grad_buffer(w.id);
      const T* xd = g.value(x).data().data();
      for_each_run(geo, [&](Index o, Index i, Index wo, Index count) {
        const T* src = gd + o;
        const T* in = xd + i;
        T acc{0};
        for (Index t = 0; t < count; ++t) acc += src[t] * in[t];
        gw[static_cast<std::size_t>(wo)] += acc;
      });
    }
    if (g.needs(b)) {
      auto& gb = g.grad_buffer(b.id);
      const Index plane = geo.out_h * geo.out_w;
      for (Index n = 0; n < geo.batch; ++n)
        for (Index k = 0; k < geo.kernels; ++k) {
          const T* src = gd + (n * geo.kernels + k) * plane;
          T acc{0};
          for (Index t = 0; t < plane; ++t) acc += src[t];
          gb[static_cast<std::size_t>(k)] += acc;
        }
    }
  });
}

template <std::floating_point T>
Var Graph<T>::relu(Var x) {
  const Tensor<T>& X = value(x);
  Tensor<T> y(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) y[i] = X[i] > T{0} ? X[i] : T{0};
  return push("relu", std::move(y), needs(x), [x](Graph& g, std::size_t self) {
    auto G = g.self_grad(self);
    auto& gx = g.grad_buffer(x.id);
    const auto xd = g.value(x).data();
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xd[i] > T{0}) gx[i] += G[i];
  });
}

template <std::floating_point T>
Var Graph<T>::max_pool2(Var x) {
  const Tensor<T>& X = value(x);
  require(X.rank() == 4, ErrorCode::shape_mismatch, op_error("max_pool2", "expects [B,C,H,W]"));
  const std::size_t planes = X.extent(0) * X.extent(1);
  const std::size_t h = X.extent(2), w = X.extent(3);
  const std::size_t oh = h / 2, ow = w / 2;
  require(oh > 0 && ow > 0, ErrorCode::shape_mismatch, op_error("max_pool2", "input smaller than window"));
  Tensor<T> y({X.extent(0), X.extent(1), oh, ow});
  std::vector<std::size_t> argmax(y.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t in_base = p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = in_base + (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in_base + (2 * oy + dy) * w + 2 * ox + dx;
            if (X[idx] > X[best]) best = idx;
          }
        const std::size_t out = (p * oh + oy) * ow + ox;
        y[out] = X[best];
        argmax[out] = best;
      }
    }
  }
  return push("max_pool2", std::move(y), needs(x), [x, argmax = std::move(argmax)](Graph& g, std::size_t self) {
    auto G = g.self_grad(self);
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += G[i];
  });
}

template <std::floating_point T>
Var Graph<T>::flatten(Var x) {
  const Tensor<T>& X = value(x);
  require(X.rank() >= 1, ErrorCode::shape_mismatch, op_error("flatten", "needs a batch axis"));
  const std::size_t batch = X.extent(0);
  const std::size_t features = batch == 0 ? 0 : X.size() / batch;
  Tensor<T> y({batch, features}, std::vector<T>(X.data().begin(), X.data().end()));
  return push("flatten", std::move(y), needs(x), [x](Graph& g, std::size_t self) {
    auto G = g.self_grad(self);
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += G[i];
  });
}

template <std::floating_point T>
Var Graph<T>::add(Var a, Var b) {
  const Tensor<T>& A = value(a);
  const Tensor<T>& B = value(b);
  require(A.shape() == B.shape(), ErrorCode::shape_mismatch,
          op_error("add", shape_string(A.shape()) + " vs " + shape_string(B.shape())));
  Tensor<T> y(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) y[i] = A[i] + B[i];
  return push("add", std::move(y), needs(a) || needs(b), [a, b](Graph& g, std::size_t self) {
    auto G = g.self_grad(self);
    for (Var v : {a, b}) {
      if (!g.needs(v)) continue;
      auto& gv = g.grad_buffer(v.id);
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += G[i];
    }
  });
}

template <std::floating_point T>
Var Graph<T>::scale(Var a, T factor) {
  const Tensor<T>& A = value(a);
  Tensor<T> y(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) y[i] = A[i] * factor;
  return push("scale", std::move(y), needs(a), [a, factor](Graph& g, std::size_t self) {
    auto G = g.self_grad(self);
    auto& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += G[i] * factor;
  });
}

template <std::floating_point T>
Var Graph<T>::sum(Var x) {
  const Tensor<T>& X = value(x);
  T acc{0};
  for (T v : X.data()) acc += v;
  return push("sum", Tensor<T>::scalar(acc), needs(x), [x](Graph& g, std::size_t self) {
    const T go = g.self_grad(self)[0];
    auto& gx = g.grad_buffer(x.id);
    for (auto& v : gx) v += go;
  });
}

template <std::floating_point T>
Var Graph<T>::weighted_sum(Var x, const Tensor<T>& coeffs) {
  const Tensor<T>& X = value(x);
  require(coeffs.shape() == X.shape(), ErrorCode::shape_mismatch,
          op_error("weighted_sum", shape_string(coeffs.shape()) + " vs " + shape_string(X.shape())));
  T acc{0};
  for (std::size_t i = 0; i < X.size(); ++i) acc += coeffs[i] * X[i];
  std::vector<T> k(coeffs.data().begin(), coeffs.data().end());
  return push("weighted_sum", Tensor<T>::scalar(acc), needs(x), [x, k = std::move(k)](Graph& g, std::size_t self) {
    const T go = g.self_grad(self)[0];
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go * k[i];
  });
}

template <std::floating_point T>
Var Graph<T>::cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor<T>& Z = value(logits);
  require(Z.rank() == 2, ErrorCode::shape_mismatch, op_error("cross_entropy", "logits must be [B,C]"));
  const std::size_t batch = Z.extent(0), classes = Z.extent(1);
  require(batch > 0, ErrorCode::invalid_argument, op_error("cross_entropy", "empty batch"));
  require(labels.size() == batch, ErrorCode::shape_mismatch, op_error("cross_entropy", "label count != batch"));
  std::vector<T> probs(Z.size());
  T total{0};
  for (std::size_t n = 0; n < batch; ++n) {
    require(labels[n] < classes, ErrorCode::invalid_argument,
            op_error("cross_entropy", "label " + std::to_string(labels[n]) + " out of range"));
    const T* z = Z.data().data() + n * classes;
    const T m = *std::max_element(z, z + classes);
    T denom{0};
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] - m);
    const T lse = m + std::log(denom);
    for (std::size_t c = 0; c < classes; ++c) probs[n * classes + c] = std::exp(z[c] - lse);
    total += lse - z[labels[n]];
  }
  const T mean = total / static_cast<T>(batch);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return push("cross_entropy", Tensor<T>::scalar(mean), needs(logits),
              [logits, batch, classes, probs = std::move(probs), lab = std::move(lab)](Graph& g, std::size_t self) {
                const T scale = g.self_grad(self)[0] / static_cast<T>(batch);
                auto& gz = g.grad_buffer(logits.id);
                for (std::size_t n = 0; n < batch; ++n)
                  for (std::size_t c = 0; c < classes; ++c) {
                    const T target = c == lab[n] ? T{1} : T{0};
                    gz[n * classes + c] += scale * (probs[n * classes + c] - target);
                  }
              });
}

template <std::floating_point T>
Var Graph<T>::soft_kl(Var student_logits, const Tensor<T>& teacher_logits, T temperature) {
  const Tensor<T>& S = value(student_logits);
  require(temperature > T{0}, ErrorCode::invalid_argument, op_error("soft_kl", "temperature must be positive"));
  require(S.rank() == 2 && S.shape() == teacher_logits.shape(), ErrorCode::shape_mismatch,
          op_error("soft_kl", shape_string(S.shape()) + " vs " + shape_string(teacher_logits.shape())));
  const std::size_t batch = S.extent(0), classes = S.extent(1);
  require(batch > 0, ErrorCode::invalid_argument, op_error("soft_kl", "empty batch"));

  auto log_softmax = [&](const T* z, T* out) {
    T m = z[0] / temperature;
    for (std::size_t c = 1; c < classes; ++c) m = std::max(m, z[c] / temperature);
    T denom{0};
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] / temperature - m);
    const T lse = m + std::log(denom);
    for (std::size_t c = 0; c < classes; ++c) out[c] = z[c] / temperature - lse;
  };

  std::vector<T> p(S.size()), q(S.size());
  std::vector<T> log_p(classes), log_q(classes);
  T total{0};
  for (std::size_t n = 0; n < batch; ++n) {
    log_softmax(teacher_logits.data().data() + n * classes, log_p.data());
    log_softmax(S.data().data() + n * classes, log_q.data());
    for (std::size_t c = 0; c < classes; ++c) {
      const T pc = std::exp(log_p[c]);
      p[n * classes + c] = pc;
      q[n * classes + c] = std::exp(log_q[c]);
      if (pc > T{0}) total += pc * (log_p[c] - log_q[c]);
    }
  }
  const T mean = total / static_cast<T>(batch);
  return push("soft_kl", Tensor<T>::scalar(mean), needs(student_logits),
              [student_logits, batch, temperature, p = std::move(p), q = std::move(q)](Graph& g, std::size_t self) {
                const T scale = g.self_grad(self)[0] / (static_cast<T>(batch) * temperature);
                auto& gs = g.grad_buffer(student_logits.id);
                for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += scale * (q[i] - p[i]);
              });
}

template <std::floating_point T>
Var Graph<T>::column_penalty(Var w, std::span<const std::size_t> columns, const EntryPenalty<T>& penalty, T alpha) {
  const Tensor<T>& W = value(w);
  require(W.rank() == 2, ErrorCode::shape_mismatch, op_error("column_penalty", "weight must be [out,in]"));
  const std::size_t rows = W.extent(0), cols = W.extent(1);
  T total{0};
  for (std::size_t j : columns) {
    require(j < cols, ErrorCode::invalid_argument,
            op_error("column_penalty", "column " + std::to_string(j) + " out of range"));
    for (std::size_t c = 0; c < rows; ++c) total += penalty.value(W[c * cols + j]);
  }
  std::vector<std::size_t> picked(columns.begin(), columns.end());
  return push("column_penalty", Tensor<T>::scalar(alpha * total), needs(w),
              [w, rows, cols, alpha, picked = std::move(picked), deriv = penalty.derivative](Graph& g,
                                                                                              std::size_t self) {
                const T go = g.self_grad(self)[0] * alpha;
                auto& gw = g.grad_buffer(w.id);
                const auto wd = g.value(w).data();
                for (std::size_t j : picked)
                  for (std::size_t c = 0; c < rows; ++c) gw[c * cols + j] += go * deriv(wd[c * cols + j]);
              });
}

template <std::floating_point T>
void Graph<T>::backward(Var loss) {
  require(!backward_done_, ErrorCode::bad_state, "backward called twice; record a new forward pass first");
  const Node& root = node(loss);
  require(value(loss).size() == 1, ErrorCode::shape_mismatch, "backward: loss must be a scalar");
  require(root.requires_grad, ErrorCode::bad_state, "backward: loss is detached from every parameter");
  backward_done_ = true;

  grad_buffer(loss.id)[0] = T{1};
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward_fn) continue;
    n.backward_fn(*this, id);
  }
  for (const Node& n : nodes_) {
    if (n.grad.empty()) continue;
    for (T v : n.grad)
      require(std::isfinite(v), ErrorCode::non_finite, op_error(n.op, "non-finite gradient"));
  }
  for (Node& n : nodes_) {
    if (!n.leaf) continue;
    n.leaf->ensure_grad();
    if (n.grad.empty()) continue;
    auto dst = n.leaf->grad();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace wiper
