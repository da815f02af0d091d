#ifndef ONESHOT_NN_H_
#define ONESHOT_NN_H_

// A small tape-free reverse-mode differentiation engine. Every operation
// returns a graph node holding its value and, when gradients are enabled,
// links to its inputs plus a closure that pushes the output gradient back
// into them. Leading dimension of every activation is the batch.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oneshot/rng.h"

namespace oneshot::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape &shape);
std::string shape_string(const Shape &shape);

/// Dense row-major n-dimensional array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape &shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::vector<double> &data() { return data_; }
  const std::vector<double> &data() const { return data_; }
  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor &) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::string name;
  std::vector<Var> parents;
  std::function<void(Node &)> backward;

  // Adds `g` into grad, allocating a zero slot first if needed.
  void accumulate(std::span<const double> g);
  Tensor &grad_slot();
};

/// Leaf without gradient.
Var constant(Tensor value);
/// Trainable leaf; gradients accumulate across backward() calls until
/// zero_grad().
Var parameter(Tensor value, std::string name = {});

/// Seeds d(root)/d(root) = 1 (root must hold one element) and propagates in
/// reverse topological order.
void backward(const Var &root);
void zero_grad(std::span<const Var> params);

// Disables graph recording in its scope; ops then only compute values.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// ---- operations --------------------------------------------------------

/// Valid cross-correlation. x: [B, C, L], w: [F, C, K], b: [F]
/// -> [B, F, (L-K)/stride + 1].
Var conv1d(const Var &x, const Var &w, const Var &b, std::size_t stride = 1);
/// y = x W^T + b. x: [B, n], W: [m, n], b: [m] -> [B, m].
Var dense(const Var &x, const Var &w, const Var &b);
Var relu(const Var &x);
Var tanh(const Var &x);
Var sigmoid(const Var &x);
/// Inverted dropout; identity when !training or rate == 0.
Var dropout(const Var &x, double rate, Rng &rng, bool training);
/// [B, ...] -> [B, prod(...)].
Var flatten(const Var &x);
/// Concatenates [B, n_i] inputs along the feature axis.
Var concat(const std::vector<Var> &xs);
/// Row-wise Euclidean distance. a, b: [B, n] -> [B, 1]. The gradient is
/// taken as zero where the distance is exactly zero.
Var euclidean_distance(const Var &a, const Var &b);
/// sqrt(mean((pred - target)^2)) over all elements -> [1]. Gradient is
/// zero at zero loss.
Var rmse_loss(const Var &pred, const Tensor &target);

// ---- layers ------------------------------------------------------------

/// Glorot-uniform weights, zero bias.
struct Conv1d {
  Var weight;  // [filters, channels, kernel]
  Var bias;    // [filters]
  std::size_t stride = 1;

  static Conv1d create(std::size_t in_channels, std::size_t filters,
                       std::size_t kernel, std::size_t stride, Rng &rng,
                       const std::string &name);
  Var operator()(const Var &x) const { return conv1d(x, weight, bias, stride); }
  std::size_t output_length(std::size_t length) const;
};

struct Dense {
  Var weight;  // [out, in]
  Var bias;    // [out]

  static Dense create(std::size_t in, std::size_t out, Rng &rng,
                      const std::string &name);
  Var operator()(const Var &x) const { return dense(x, weight, bias); }
};

// ---- optimizer ---------------------------------------------------------

struct RmspropConfig {
  double learning_rate = 1e-5;
  double decay = 1e-6;  // inverse-time: lr_t = lr / (1 + decay * t)
  double rho = 0.9;
  double epsilon = 1e-8;
};

/// cache <- rho*cache + (1-rho)*g^2; param <- param - lr*g/(sqrt(cache)+eps).
void rmsprop_update(std::span<double> param, std::span<const double> grad,
                    std::span<double> cache, double lr, double rho, double epsilon);

class Rmsprop {
 public:
  Rmsprop(std::vector<Var> params, RmspropConfig config);

  // Applies one update from the parameters' accumulated gradients. Params
  // without a gradient slot are left untouched.
  void step();
  // Learning rate the next step() will use.
  double current_learning_rate() const;

  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t steps) { steps_ = steps; }
  const RmspropConfig &config() const { return config_; }
  std::vector<Tensor> &cache() { return cache_; }
  const std::vector<Tensor> &cache() const { return cache_; }
  const std::vector<Var> &params() const { return params_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> cache_;
  RmspropConfig config_;
  std::size_t steps_ = 0;
};

}  // namespace oneshot::nn

#endif  // ONESHOT_NN_H_
