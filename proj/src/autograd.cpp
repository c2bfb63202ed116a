#include "tbscreen/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "kernels.hpp"
#include "tbscreen/error.hpp"

namespace tbscreen {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::conv2d: return "conv2d";
    case OpKind::matmul: return "matmul";
    case OpKind::relu: return "relu";
    case OpKind::softmax: return "softmax";
    case OpKind::squash: return "squash";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::reduce_sum: return "reduce-sum";
    case OpKind::norm: return "norm";
    case OpKind::margin_loss: return "margin-loss";
    case OpKind::cross_entropy: return "cross-entropy";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::downsample: return "downsample";
    case OpKind::pad2d: return "pad2d";
    case OpKind::bias_add: return "bias-add";
    case OpKind::reshape: return "reshape";
    case OpKind::to_capsules: return "to-capsules";
    case OpKind::capsule_predict: return "capsule-predict";
    case OpKind::route_sum: return "route-sum";
    case OpKind::agreement: return "agreement";
    case OpKind::threshold: return "threshold";
  }
  return "unknown";
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->value.clear_grad();
  return Var(std::move(node));
}

namespace {

Var make_op(OpKind kind, Tensor value, std::vector<NodePtr> inputs,
            std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->value = std::move(value);
  node->requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                    [](const NodePtr& n) { return n->requires_grad; });
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backward = std::move(bw);
  }
  return Var(std::move(node));
}

// Gradient buffer of an input, or an empty span when it needs none.
std::span<double> grad_of(const NodePtr& n) {
  if (!n->requires_grad) return {};
  return n->value.ensure_grad();
}

void require_rank(const Var& x, std::size_t rank, std::string_view op) {
  if (x.value().rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(x.shape()));
}

void require_same_shape(const Var& a, const Var& b, std::string_view op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

std::size_t last_dim(const Var& x) { return x.shape().back(); }

}  // namespace

void backward(const Var& root) {
  if (root.value().size() != 1)
    throw DimensionError("backward without a seed needs a one-element root, got " +
                         shape_string(root.shape()));
  backward(root, Tensor(root.shape(), 1.0));
}

void backward(const Var& root, const Tensor& seed) {
  if (!root.requires_grad()) throw StateError("backward: root does not depend on any parameter");
  if (seed.shape() != root.shape())
    throw DimensionError("backward: seed shape " + shape_string(seed.shape()) +
                         " does not match root " + shape_string(root.shape()));

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto root_grad = root.node()->value.ensure_grad();
  for (std::size_t i = 0; i < root_grad.size(); ++i) root_grad[i] += seed[i];

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->kind == OpKind::leaf || !node->value.has_grad()) continue;
    if (!node->backward)
      throw UnsupportedError(std::string("op '") + std::string(op_name(node->kind)) +
                             "' has no backward");
    node->backward(*node);
  }
}

// ---------------------------------------------------------------------------

Var conv2d(const Var& input, const Var& kernels, std::size_t stride) {
  if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
  require_rank(input, 3, "conv2d");
  require_rank(kernels, 4, "conv2d");
  const auto& is = input.shape();
  const auto& ks = kernels.shape();
  if (ks[1] != is[0])
    throw DimensionError("conv2d: kernel expects " + std::to_string(ks[1]) +
                         " input channels, input has " + std::to_string(is[0]));
  if (ks[2] != ks[3]) throw DimensionError("conv2d: kernels must be square");
  const std::size_t k = ks[2];
  if (k > is[1] || k > is[2])
    throw DimensionError("conv2d: kernel " + std::to_string(k) + " larger than input " +
                         shape_string(is));
  kernels::ConvGeometry g{is[0], is[1], is[2], k, stride, (is[1] - k) / stride + 1,
                          (is[2] - k) / stride + 1};
  const std::size_t out_ch = ks[0];
  const std::size_t plen = g.patch_len(), npos = g.positions();

  auto cols = std::make_shared<std::vector<double>>(plen * npos);
  kernels::im2col(g, input.value().data().data(), cols->data());
  Tensor out({out_ch, g.out_h, g.out_w});
  kernels::gemm_nn(out_ch, plen, npos, kernels.value().data().data(), cols->data(),
                   out.data().data());

  return make_op(OpKind::conv2d, std::move(out), {input.node(), kernels.node()},
                 [g, cols, out_ch](Node& self) {
                   const std::size_t plen = g.patch_len(), npos = g.positions();
                   const double* gout = self.value.grad().data();
                   const auto& in = self.inputs[0];
                   const auto& ker = self.inputs[1];
                   if (auto gk = grad_of(ker); !gk.empty())
                     kernels::gemm_nt(out_ch, npos, plen, gout, cols->data(), gk.data());
                   if (auto gi = grad_of(in); !gi.empty()) {
                     std::vector<double> gcols(plen * npos, 0.0);
                     kernels::gemm_tn(plen, out_ch, npos, ker->value.data().data(), gout,
                                      gcols.data());
                     kernels::col2im(g, gcols.data(), gi.data());
                   }
                 });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  Tensor out({m, n});
  kernels::gemm_nn(m, k, n, a.value().data().data(), b.value().data().data(), out.data().data());
  return make_op(OpKind::matmul, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    const double* g = self.value.grad().data();
    const auto& a = self.inputs[0];
    const auto& b = self.inputs[1];
    if (auto ga = grad_of(a); !ga.empty())
      kernels::gemm_nt(m, n, k, g, b->value.data().data(), ga.data());
    if (auto gb = grad_of(b); !gb.empty())
      kernels::gemm_tn(k, m, n, a->value.data().data(), g, gb.data());
  });
}

Var relu(const Var& x) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  return make_op(OpKind::relu, std::move(out), {x.node()}, [](Node& self) {
    auto gx = grad_of(self.inputs[0]);
    const auto in = self.inputs[0]->value.data();
    const auto g = self.value.grad();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (in[i] > 0.0) gx[i] += g[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double z = in[i];
    out[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return make_op(OpKind::sigmoid, std::move(out), {x.node()}, [](Node& self) {
    auto gx = grad_of(self.inputs[0]);
    const auto y = self.value.data();
    const auto g = self.value.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax(const Var& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis out of range for " + shape_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];

  Tensor out(s);
  const auto in = x.value().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < inner; ++r) {
      const std::size_t base = o * n * inner + r;
      double mx = in[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(in[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  return make_op(OpKind::softmax, std::move(out), {x.node()}, [outer, inner, n](Node& self) {
    auto gx = grad_of(self.inputs[0]);
    const auto y = self.value.data();
    const auto g = self.value.grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t r = 0; r < inner; ++r) {
        const std::size_t base = o * n * inner + r;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += y[base + j * inner] * g[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
  });
}

namespace {
constexpr double kSquashEpsilon = 1e-9;
}

Var squash(const Var& s) {
  const std::size_t d = last_dim(s);
  const std::size_t rows = s.value().size() / d;
  Tensor out(s.shape());
  const auto in = s.value().data();
  // Per-row f(q) and f'(q) with q = |s|^2, v = f(q) s.
  auto coeffs = std::make_shared<std::vector<double>>(2 * rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double q = 0.0;
    for (std::size_t i = 0; i < d; ++i) q += row[i] * row[i];
    const double a = 1.0 / (1.0 + q);
    const double b = 1.0 / std::sqrt(q + kSquashEpsilon);
    const double f = q * a * b;
    const double df = a * b * (1.0 - q * a - 0.5 * q / (q + kSquashEpsilon));
    (*coeffs)[2 * r] = f;
    (*coeffs)[2 * r + 1] = df;
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = f * row[i];
  }
  return make_op(OpKind::squash, std::move(out), {s.node()}, [coeffs, rows, d](Node& self) {
    auto gx = grad_of(self.inputs[0]);
    const auto in = self.inputs[0]->value.data();
    const auto g = self.value.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double f = (*coeffs)[2 * r], df = (*coeffs)[2 * r + 1];
      const double* srow = in.data() + r * d;
      const double* grow = g.data() + r * d;
      double sg = 0.0;
      for (std::size_t i = 0; i < d; ++i) sg += srow[i] * grow[i];
      for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += f * grow[i] + 2.0 * df * sg * srow[i];
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  const auto x = a.value().data(), y = b.value().data();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_op(OpKind::add, std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto g = self.value.grad();
    for (const auto& in : self.inputs) {
      auto gi = grad_of(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const auto x = a.value().data(), y = b.value().data();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_op(OpKind::mul, std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto g = self.value.grad();
    const auto x = self.inputs[0]->value.data(), y = self.inputs[1]->value.data();
    if (auto ga = grad_of(self.inputs[0]); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i];
    if (auto gb = grad_of(self.inputs[1]); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * x[i];
  });
}

Var scale(const Var& x, double factor) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * factor;
  return make_op(OpKind::scale, std::move(out), {x.node()}, [factor](Node& self) {
    auto gx = grad_of(self.inputs[0]);
    const auto g = self.value.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
  });
}

Var reduce_sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return make_op(OpKind::reduce_sum, Tensor::scalar(total), {x.node()}, [](Node& self) {
    auto gx = grad_of(self.inputs[0]);
    const double g = self.value.grad()[0];
    for (auto& v : gx) v += g;
  });
}

Var norm(const Var& x) {
  const std::size_t d = last_dim(x);
  const std::size_t rows = x.value().size() / d;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  const auto in = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double q = 0.0;
    for (std::size_t i = 0; i < d; ++i) q += in[r * d + i] * in[r * d + i];
    out[r] = std::sqrt(q);
  }
  return make_op(OpKind::norm, std::move(out), {x.node()}, [rows, d](Node& self) {
    auto gx = grad_of(self.inputs[0]);
    const auto in = self.inputs[0]->value.data();
    const auto y = self.value.data();
    const auto g = self.value.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      if (y[r] == 0.0) continue;
      const double k = g[r] / y[r];
      for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += k * in[r * d + i];
    }
  });
}

Var margin_loss(const Var& class_lengths, const Tensor& target, const MarginLossParams& p) {
  const auto len = class_lengths.value().data();
  if (target.size() != len.size())
    throw ValidationError("margin_loss: target has " + std::to_string(target.size()) +
                          " entries, expected " + std::to_string(len.size()));
  std::size_t ones = 0;
  for (double t : target.data()) {
    if (t == 1.0) ++ones;
    else if (t != 0.0) throw ValidationError("margin_loss: target must be one-hot");
  }
  if (ones != 1) throw ValidationError("margin_loss: target must be one-hot");

  double loss = 0.0;
  for (std::size_t k = 0; k < len.size(); ++k) {
    const double present = std::max(0.0, p.m_plus - len[k]);
    const double absent = std::max(0.0, len[k] - p.m_minus);
    loss += target[k] * present * present + p.lambda * (1.0 - target[k]) * absent * absent;
  }
  return make_op(OpKind::margin_loss, Tensor::scalar(loss), {class_lengths.node()},
                 [target, p](Node& self) {
                   auto gx = grad_of(self.inputs[0]);
                   const auto len = self.inputs[0]->value.data();
                   const double g = self.value.grad()[0];
                   for (std::size_t k = 0; k < gx.size(); ++k) {
                     const double present = std::max(0.0, p.m_plus - len[k]);
                     const double absent = std::max(0.0, len[k] - p.m_minus);
                     gx[k] += g * (-2.0 * target[k] * present +
                                   2.0 * p.lambda * (1.0 - target[k]) * absent);
                   }
                 });
}

Var cross_entropy(const Var& logits, std::size_t target) {
  const auto z = logits.value().data();
  if (target >= z.size())
    throw ValidationError("cross_entropy: target class " + std::to_string(target) +
                          " out of range");
  const double mx = *std::max_element(z.begin(), z.end());
  auto probs = std::make_shared<std::vector<double>>(z.size());
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) total += ((*probs)[k] = std::exp(z[k] - mx));
  for (auto& v : *probs) v /= total;
  const double loss = std::log(total) + mx - z[target];
  return make_op(OpKind::cross_entropy, Tensor::scalar(loss), {logits.node()},
                 [probs, target](Node& self) {
                   auto gx = grad_of(self.inputs[0]);
                   const double g = self.value.grad()[0];
                   for (std::size_t k = 0; k < gx.size(); ++k)
                     gx[k] += g * ((*probs)[k] - (k == target ? 1.0 : 0.0));
                 });
}

Var downsample(const Var& x, std::size_t factor) {
  require_rank(x, 3, "downsample");
  if (factor < 1) throw ParameterError("downsample: factor must be >= 1");
  const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t oh = h / factor, ow = w / factor;
  if (oh == 0 || ow == 0)
    throw DimensionError("downsample: factor " + std::to_string(factor) + " exceeds input " +
                         shape_string(x.shape()));
  const double inv = 1.0 / static_cast<double>(factor * factor);
  Tensor out({c, oh, ow});
  const auto in = x.value().data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double total = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx)
            total += in[(ch * h + y * factor + dy) * w + xo * factor + dx];
        out[(ch * oh + y) * ow + xo] = total * inv;
      }
  return make_op(OpKind::downsample, std::move(out), {x.node()},
                 [c, h, w, oh, ow, factor, inv](Node& self) {
                   auto gx = grad_of(self.inputs[0]);
                   const auto g = self.value.grad();
                   for (std::size_t ch = 0; ch < c; ++ch)
                     for (std::size_t y = 0; y < oh; ++y)
                       for (std::size_t xo = 0; xo < ow; ++xo) {
                         const double v = g[(ch * oh + y) * ow + xo] * inv;
                         for (std::size_t dy = 0; dy < factor; ++dy)
                           for (std::size_t dx = 0; dx < factor; ++dx)
                             gx[(ch * h + y * factor + dy) * w + xo * factor + dx] += v;
                       }
                 });
}

Var pad2d(const Var& x, std::size_t pad) {
  require_rank(x, 3, "pad2d");
  const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t ph = h + 2 * pad, pw = w + 2 * pad;
  Tensor out({c, ph, pw});
  const auto in = x.value().data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(in.data() + (ch * h + y) * w, w, out.data().data() + (ch * ph + y + pad) * pw + pad);
  return make_op(OpKind::pad2d, std::move(out), {x.node()}, [c, h, w, ph, pw, pad](Node& self) {
    auto gx = grad_of(self.inputs[0]);
    const auto g = self.value.grad();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xi = 0; xi < w; ++xi)
          gx[(ch * h + y) * w + xi] += g[(ch * ph + y + pad) * pw + xi + pad];
  });
}

Var bias_add(const Var& x, const Var& bias) {
  const std::size_t c = x.shape()[0];
  if (bias.value().size() != c)
    throw DimensionError("bias_add: bias has " + std::to_string(bias.value().size()) +
                         " entries, input has " + std::to_string(c) + " channels");
  const std::size_t inner = x.value().size() / c;
  Tensor out(x.shape());
  const auto in = x.value().data();
  const auto b = bias.value().data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < inner; ++i) out[ch * inner + i] = in[ch * inner + i] + b[ch];
  return make_op(OpKind::bias_add, std::move(out), {x.node(), bias.node()}, [c, inner](Node& self) {
    const auto g = self.value.grad();
    if (auto gx = grad_of(self.inputs[0]); !gx.empty())
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    if (auto gb = grad_of(self.inputs[1]); !gb.empty())
      for (std::size_t ch = 0; ch < c; ++ch) {
        double total = 0.0;
        for (std::size_t i = 0; i < inner; ++i) total += g[ch * inner + i];
        gb[ch] += total;
      }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_op(OpKind::reshape, std::move(out), {x.node()}, [](Node& self) {
    auto gx = grad_of(self.inputs[0]);
    const auto g = self.value.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

Var to_capsules(const Var& x, std::size_t dim) {
  require_rank(x, 3, "to_capsules");
  const std::size_t cd = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  if (dim == 0 || cd % dim != 0)
    throw DimensionError("to_capsules: " + std::to_string(cd) + " channels not divisible by " +
                         std::to_string(dim));
  const std::size_t groups = cd / dim, hw = h * w;
  Tensor out({groups * hw, dim});
  const auto in = x.value().data();
  for (std::size_t c = 0; c < groups; ++c)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t d = 0; d < dim; ++d) out[(c * hw + p) * dim + d] = in[(c * dim + d) * hw + p];
  return make_op(OpKind::to_capsules, std::move(out), {x.node()}, [groups, hw, dim](Node& self) {
    auto gx = grad_of(self.inputs[0]);
    const auto g = self.value.grad();
    for (std::size_t c = 0; c < groups; ++c)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t d = 0; d < dim; ++d) gx[(c * dim + d) * hw + p] += g[(c * hw + p) * dim + d];
  });
}

Var capsule_predict(const Var& u, const Var& weights) {
  require_rank(u, 2, "capsule_predict");
  require_rank(weights, 4, "capsule_predict");
  const std::size_t n = u.shape()[0], din = u.shape()[1];
  const auto& ws = weights.shape();
  if (ws[0] != n || ws[3] != din)
    throw DimensionError("capsule_predict: weights " + shape_string(ws) + " incompatible with u " +
                         shape_string(u.shape()));
  const std::size_t j = ws[1], dout = ws[2];
  Tensor out({n, j, dout});
  const auto uv = u.value().data(), wv = weights.value().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < j * dout; ++r) {
      const double* wrow = wv.data() + (i * j * dout + r) * din;
      const double* urow = uv.data() + i * din;
      double total = 0.0;
      for (std::size_t d = 0; d < din; ++d) total += wrow[d] * urow[d];
      out[i * j * dout + r] = total;
    }
  return make_op(OpKind::capsule_predict, std::move(out), {u.node(), weights.node()},
                 [n, j, dout, din](Node& self) {
                   const auto g = self.value.grad();
                   const auto uv = self.inputs[0]->value.data();
                   const auto wv = self.inputs[1]->value.data();
                   auto gu = grad_of(self.inputs[0]);
                   auto gw = grad_of(self.inputs[1]);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t r = 0; r < j * dout; ++r) {
                       const double gr = g[i * j * dout + r];
                       const std::size_t wbase = (i * j * dout + r) * din;
                       if (!gw.empty())
                         for (std::size_t d = 0; d < din; ++d) gw[wbase + d] += gr * uv[i * din + d];
                       if (!gu.empty())
                         for (std::size_t d = 0; d < din; ++d) gu[i * din + d] += gr * wv[wbase + d];
                     }
                 });
}

Var route_sum(const Var& coupling, const Var& u_hat) {
  require_rank(coupling, 2, "route_sum");
  require_rank(u_hat, 3, "route_sum");
  const std::size_t n = u_hat.shape()[0], j = u_hat.shape()[1], d = u_hat.shape()[2];
  if (coupling.shape()[0] != n || coupling.shape()[1] != j)
    throw DimensionError("route_sum: coupling " + shape_string(coupling.shape()) +
                         " incompatible with predictions " + shape_string(u_hat.shape()));
  Tensor out({j, d});
  const auto c = coupling.value().data(), uh = u_hat.value().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < j; ++k) {
      const double w = c[i * j + k];
      for (std::size_t e = 0; e < d; ++e) out[k * d + e] += w * uh[(i * j + k) * d + e];
    }
  return make_op(OpKind::route_sum, std::move(out), {coupling.node(), u_hat.node()},
                 [n, j, d](Node& self) {
                   const auto g = self.value.grad();
                   const auto c = self.inputs[0]->value.data();
                   const auto uh = self.inputs[1]->value.data();
                   auto gc = grad_of(self.inputs[0]);
                   auto gu = grad_of(self.inputs[1]);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t k = 0; k < j; ++k) {
                       const std::size_t base = (i * j + k) * d;
                       if (!gc.empty()) {
                         double total = 0.0;
                         for (std::size_t e = 0; e < d; ++e) total += g[k * d + e] * uh[base + e];
                         gc[i * j + k] += total;
                       }
                       if (!gu.empty()) {
                         const double w = c[i * j + k];
                         for (std::size_t e = 0; e < d; ++e) gu[base + e] += w * g[k * d + e];
                       }
                     }
                 });
}

Var agreement(const Var& u_hat, const Var& v) {
  require_rank(u_hat, 3, "agreement");
  require_rank(v, 2, "agreement");
  const std::size_t n = u_hat.shape()[0], j = u_hat.shape()[1], d = u_hat.shape()[2];
  if (v.shape()[0] != j || v.shape()[1] != d)
    throw DimensionError("agreement: v " + shape_string(v.shape()) +
                         " incompatible with predictions " + shape_string(u_hat.shape()));
  Tensor out({n, j});
  const auto uh = u_hat.value().data(), vv = v.value().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < j; ++k) {
      double total = 0.0;
      for (std::size_t e = 0; e < d; ++e) total += uh[(i * j + k) * d + e] * vv[k * d + e];
      out[i * j + k] = total;
    }
  return make_op(OpKind::agreement, std::move(out), {u_hat.node(), v.node()}, [n, j, d](Node& self) {
    const auto g = self.value.grad();
    const auto uh = self.inputs[0]->value.data();
    const auto vv = self.inputs[1]->value.data();
    auto gu = grad_of(self.inputs[0]);
    auto gv = grad_of(self.inputs[1]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < j; ++k) {
        const double gr = g[i * j + k];
        const std::size_t base = (i * j + k) * d;
        if (!gu.empty())
          for (std::size_t e = 0; e < d; ++e) gu[base + e] += gr * vv[k * d + e];
        if (!gv.empty())
          for (std::size_t e = 0; e < d; ++e) gv[k * d + e] += gr * uh[base + e];
      }
  });
}

Var threshold(const Var& x, double t) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] >= t ? 1.0 : 0.0;
  return make_op(OpKind::threshold, std::move(out), {x.node()}, nullptr);
}

}  // namespace tbscreen
