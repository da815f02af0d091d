#include "oneshot/nn.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "blas.h"
#include "oneshot/error.h"

namespace oneshot::nn {

namespace {

thread_local bool g_grad_enabled = true;

void check_finite(const Tensor &t, const char *op) {
  for (double v : t.data())
    if (!std::isfinite(v))
      throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                         shape_string(t.shape()));
}

// Wraps a freshly computed value; records the graph edge only when some
// input needs a gradient and recording is on.
Var make_result(Tensor value, const char *op, std::vector<Var> parents,
                std::function<void(Node &)> backward_fn) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->name = op;
  bool needs = false;
  for (const auto &p : parents) needs = needs || p->requires_grad;
  if (needs && g_grad_enabled) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return node;
}

void require_rank(const Var &v, std::size_t rank, const char *op, const char *what) {
  if (v->value.rank() != rank)
    throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                     std::to_string(rank) + ", got " + shape_string(v->value.shape()));
}

}  // namespace

std::size_t numel(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape &shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel(shape_))
    throw ShapeError("Tensor: " + std::to_string(data_.size()) +
                     " values do not fill shape " + shape_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size())
    throw ShapeError("Tensor::reshaped: cannot view " + shape_string(shape_) +
                     " as " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

Tensor &Node::grad_slot() {
  if (grad.size() != value.size()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

void Node::accumulate(std::span<const double> g) {
  auto &slot = grad_slot().data();
  for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->name = "constant";
  return node;
}

Var parameter(Tensor value, std::string name) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = std::move(name);
  return node;
}

void backward(const Var &root) {
  if (root->value.size() != 1)
    throw ShapeError("backward: root must be a scalar, got " +
                     shape_string(root->value.shape()));

  // Iterative post-order DFS gives a topological order.
  std::vector<Node *> order;
  std::unordered_set<Node *> seen;
  std::vector<std::pair<Node *, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      Node *parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_slot().data()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node *node = *it;
    if (node->backward && node->grad.size() == node->value.size())
      node->backward(*node);
  }
}

void zero_grad(std::span<const Var> params) {
  for (const auto &p : params)
    if (p->grad.size()) std::fill(p->grad.data().begin(), p->grad.data().end(), 0.0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- conv1d ------------------------------------------------------------

namespace {

// cols[(c*K + k), l] = x[c, l*stride + k]
void im2col(const double *x, std::size_t channels, std::size_t length,
            std::size_t kernel, std::size_t stride, std::size_t out_len,
            double *cols) {
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t k = 0; k < kernel; ++k) {
      double *dst = cols + (c * kernel + k) * out_len;
      const double *src = x + c * length + k;
      for (std::size_t l = 0; l < out_len; ++l) dst[l] = src[l * stride];
    }
}

void col2im_add(const double *cols, std::size_t channels, std::size_t length,
                std::size_t kernel, std::size_t stride, std::size_t out_len,
                double *x) {
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t k = 0; k < kernel; ++k) {
      const double *src = cols + (c * kernel + k) * out_len;
      double *dst = x + c * length + k;
      for (std::size_t l = 0; l < out_len; ++l) dst[l * stride] += src[l];
    }
}

}  // namespace

Var conv1d(const Var &x, const Var &w, const Var &b, std::size_t stride) {
  require_rank(x, 3, "conv1d", "input");
  require_rank(w, 3, "conv1d", "kernel");
  require_rank(b, 1, "conv1d", "bias");
  if (stride == 0) throw UsageError("conv1d: stride must be >= 1");
  const std::size_t batch = x->value.dim(0), channels = x->value.dim(1),
                    length = x->value.dim(2);
  const std::size_t filters = w->value.dim(0), kernel = w->value.dim(2);
  if (w->value.dim(1) != channels)
    throw ShapeError("conv1d: kernel expects " + std::to_string(w->value.dim(1)) +
                     " input channels, input has " + std::to_string(channels));
  if (b->value.dim(0) != filters)
    throw ShapeError("conv1d: bias length " + std::to_string(b->value.dim(0)) +
                     " != filter count " + std::to_string(filters));
  if (length < kernel)
    throw ShapeError("conv1d: input length " + std::to_string(length) +
                     " shorter than kernel " + std::to_string(kernel));

  const std::size_t out_len = (length - kernel) / stride + 1;
  const std::size_t ck = channels * kernel;
  Tensor out({batch, filters, out_len});
  std::vector<double> cols(ck * out_len);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(x->value.data().data() + n * channels * length, channels, length,
           kernel, stride, out_len, cols.data());
    double *y = out.data().data() + n * filters * out_len;
    for (std::size_t f = 0; f < filters; ++f)
      std::fill_n(y + f * out_len, out_len, b->value[f]);
    detail::gemm(false, false, filters, out_len, ck, 1.0, w->value.data().data(),
                 ck, cols.data(), out_len, 1.0, y, out_len);
  }

  return make_result(std::move(out), "conv1d", {x, w, b},
                     [x, w, b, stride, batch, channels, length, filters, kernel,
                      out_len, ck](Node &self) {
    const double *dy_all = self.grad.data().data();
    std::vector<double> cols(ck * out_len);
    for (std::size_t n = 0; n < batch; ++n) {
      const double *dy = dy_all + n * filters * out_len;
      if (w->requires_grad) {
        im2col(x->value.data().data() + n * channels * length, channels, length,
               kernel, stride, out_len, cols.data());
        detail::gemm(false, true, filters, ck, out_len, 1.0, dy, out_len,
                     cols.data(), out_len, 1.0, w->grad_slot().data().data(), ck);
      }
      if (b->requires_grad) {
        auto &db = b->grad_slot().data();
        for (std::size_t f = 0; f < filters; ++f)
          for (std::size_t l = 0; l < out_len; ++l) db[f] += dy[f * out_len + l];
      }
      if (x->requires_grad) {
        detail::gemm(true, false, ck, out_len, filters, 1.0, w->value.data().data(),
                     ck, dy, out_len, 0.0, cols.data(), out_len);
        col2im_add(cols.data(), channels, length, kernel, stride, out_len,
                   x->grad_slot().data().data() + n * channels * length);
      }
    }
  });
}

// ---- dense -------------------------------------------------------------

Var dense(const Var &x, const Var &w, const Var &b) {
  require_rank(x, 2, "dense", "input");
  require_rank(w, 2, "dense", "weight");
  require_rank(b, 1, "dense", "bias");
  const std::size_t batch = x->value.dim(0), in = x->value.dim(1);
  const std::size_t out_dim = w->value.dim(0);
  if (w->value.dim(1) != in)
    throw ShapeError("dense: weight " + shape_string(w->value.shape()) +
                     " does not accept input width " + std::to_string(in));
  if (b->value.dim(0) != out_dim)
    throw ShapeError("dense: bias length " + std::to_string(b->value.dim(0)) +
                     " != output width " + std::to_string(out_dim));

  Tensor out({batch, out_dim});
  for (std::size_t n = 0; n < batch; ++n)
    std::copy(b->value.data().begin(), b->value.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(n * out_dim));
  detail::gemm(false, true, batch, out_dim, in, 1.0, x->value.data().data(), in,
               w->value.data().data(), in, 1.0, out.data().data(), out_dim);

  return make_result(std::move(out), "dense", {x, w, b},
                     [x, w, b, batch, in, out_dim](Node &self) {
    const double *dy = self.grad.data().data();
    if (x->requires_grad)
      detail::gemm(false, false, batch, in, out_dim, 1.0, dy, out_dim,
                   w->value.data().data(), in, 1.0, x->grad_slot().data().data(), in);
    if (w->requires_grad)
      detail::gemm(true, false, out_dim, in, batch, 1.0, dy, out_dim,
                   x->value.data().data(), in, 1.0, w->grad_slot().data().data(), in);
    if (b->requires_grad) {
      auto &db = b->grad_slot().data();
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t j = 0; j < out_dim; ++j) db[j] += dy[n * out_dim + j];
    }
  });
}

// ---- elementwise -------------------------------------------------------

namespace {

// Builds an elementwise op whose derivative is expressed through the input
// value and the output value.
template <typename Fwd, typename Deriv>
Var elementwise(const Var &x, const char *op, Fwd fwd, Deriv deriv) {
  Tensor out(x->value.shape());
  const auto &in = x->value.data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(std::move(out), op, {x}, [x, deriv](Node &self) {
    auto &dx = x->grad_slot().data();
    const auto &in = x->value.data();
    const auto &y = self.value.data();
    const auto &dy = self.grad.data();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * deriv(in[i], y[i]);
  });
}

}  // namespace

Var relu(const Var &x) {
  return elementwise(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var &x) {
  return elementwise(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var &x) {
  return elementwise(
      x, "sigmoid",
      [](double v) {
        // Split by sign so exp never overflows.
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var dropout(const Var &x, double rate, Rng &rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;

  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x->value.size());
  for (double &m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = x->value[i] * mask[i];
  return make_result(std::move(out), "dropout", {x},
                     [x, mask = std::move(mask)](Node &self) {
    auto &dx = x->grad_slot().data();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * mask[i];
  });
}

Var flatten(const Var &x) {
  if (x->value.rank() < 1) throw ShapeError("flatten: scalar input");
  const std::size_t batch = x->value.dim(0);
  const std::size_t rest = batch ? x->value.size() / batch : 0;
  return make_result(x->value.reshaped({batch, rest}), "flatten", {x},
                     [x](Node &self) { x->accumulate(self.grad.data()); });
}

Var concat(const std::vector<Var> &xs) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const std::size_t batch = xs.front()->value.dim(0);
  std::vector<std::size_t> widths;
  for (const auto &v : xs) {
    require_rank(v, 2, "concat", "every input");
    if (v->value.dim(0) != batch) throw ShapeError("concat: batch sizes differ");
    widths.push_back(v->value.dim(1));
  }
  const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  Tensor out({batch, total});
  for (std::size_t n = 0; n < batch; ++n) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double *src = xs[i]->value.data().data() + n * widths[i];
      std::copy_n(src, widths[i], out.data().data() + n * total + offset);
      offset += widths[i];
    }
  }
  return make_result(std::move(out), "concat", xs, [xs, widths, batch, total](Node &self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i]->requires_grad) {
        auto &dx = xs[i]->grad_slot().data();
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t j = 0; j < widths[i]; ++j)
            dx[n * widths[i] + j] += self.grad[n * total + offset + j];
      }
      offset += widths[i];
    }
  });
}

Var euclidean_distance(const Var &a, const Var &b) {
  require_rank(a, 2, "euclidean_distance", "left");
  require_rank(b, 2, "euclidean_distance", "right");
  if (a->value.shape() != b->value.shape())
    throw ShapeError("euclidean_distance: shapes " + shape_string(a->value.shape()) +
                     " and " + shape_string(b->value.shape()) + " differ");
  const std::size_t batch = a->value.dim(0), width = a->value.dim(1);
  Tensor out({batch, 1});
  for (std::size_t n = 0; n < batch; ++n) {
    double acc = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      const double d = a->value[n * width + j] - b->value[n * width + j];
      acc += d * d;
    }
    out[n] = std::sqrt(acc);
  }
  return make_result(std::move(out), "euclidean_distance", {a, b},
                     [a, b, batch, width](Node &self) {
    for (std::size_t n = 0; n < batch; ++n) {
      const double dist = self.value[n];
      if (dist == 0.0) continue;
      const double scale = self.grad[n] / dist;
      for (std::size_t j = 0; j < width; ++j) {
        const double g = scale * (a->value[n * width + j] - b->value[n * width + j]);
        if (a->requires_grad) a->grad_slot()[n * width + j] += g;
        if (b->requires_grad) b->grad_slot()[n * width + j] -= g;
      }
    }
  });
}

Var rmse_loss(const Var &pred, const Tensor &target) {
  if (pred->value.shape() != target.shape())
    throw ShapeError("rmse_loss: prediction " + shape_string(pred->value.shape()) +
                     " vs target " + shape_string(target.shape()));
  const std::size_t count = pred->value.size();
  if (count == 0) throw ShapeError("rmse_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = pred->value[i] - target[i];
    acc += d * d;
  }
  Tensor out({1}, std::sqrt(acc / static_cast<double>(count)));
  return make_result(std::move(out), "rmse_loss", {pred}, [pred, target, count](Node &self) {
    const double loss = self.value[0];
    if (loss == 0.0) return;
    const double scale = self.grad[0] / (static_cast<double>(count) * loss);
    auto &dp = pred->grad_slot().data();
    for (std::size_t i = 0; i < count; ++i) dp[i] += scale * (pred->value[i] - target[i]);
  });
}

// ---- layers ------------------------------------------------------------

namespace {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng &rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (double &v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

Conv1d Conv1d::create(std::size_t in_channels, std::size_t filters, std::size_t kernel,
                      std::size_t stride, Rng &rng, const std::string &name) {
  return {parameter(glorot_uniform({filters, in_channels, kernel}, in_channels * kernel,
                                   filters * kernel, rng),
                    name + ".weight"),
          parameter(Tensor({filters}, 0.0), name + ".bias"), stride};
}

std::size_t Conv1d::output_length(std::size_t length) const {
  const std::size_t kernel = weight->value.dim(2);
  if (length < kernel) throw ShapeError("Conv1d: input shorter than kernel");
  return (length - kernel) / stride + 1;
}

Dense Dense::create(std::size_t in, std::size_t out, Rng &rng, const std::string &name) {
  return {parameter(glorot_uniform({out, in}, in, out, rng), name + ".weight"),
          parameter(Tensor({out}, 0.0), name + ".bias")};
}

// ---- optimizer ---------------------------------------------------------

void rmsprop_update(std::span<double> param, std::span<const double> grad,
                    std::span<double> cache, double lr, double rho, double epsilon) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    cache[i] = rho * cache[i] + (1.0 - rho) * grad[i] * grad[i];
    param[i] -= lr * grad[i] / (std::sqrt(cache[i]) + epsilon);
  }
}

Rmsprop::Rmsprop(std::vector<Var> params, RmspropConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0))
    throw UsageError("Rmsprop: learning rate must be positive");
  cache_.reserve(params_.size());
  for (const auto &p : params_) cache_.emplace_back(p->value.shape(), 0.0);
}

double Rmsprop::current_learning_rate() const {
  return config_.learning_rate / (1.0 + config_.decay * static_cast<double>(steps_));
}

void Rmsprop::step() {
  const double lr = current_learning_rate();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto &p = *params_[i];
    if (p.grad.size() != p.value.size()) continue;
    rmsprop_update(p.value.data(), p.grad.data(), cache_[i].data(), lr, config_.rho,
                   config_.epsilon);
  }
  ++steps_;
}

}  // namespace oneshot::nn
