#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "surgirl/rng.hpp"

namespace surgirl {

// Flat parameter storage. Layout per layer: weights row-major (out x in),
// then biases (out). 64-bit reals throughout.
using ParamVector = std::vector<double>;

enum class Activation { ReLU, Tanh };

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int output_dim = 0;
  Activation activation = Activation::ReLU;

  // Sizes of every layer boundary: [input, hidden..., output].
  std::vector<int> layer_dims() const;
  std::size_t param_count() const;
  bool operator==(const MlpSpec&) const = default;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-layer activations kept for the backward pass.
struct MlpCache {
  std::vector<std::vector<double>> post;  // post[0] = input, post[L] = output
  std::vector<std::vector<double>> pre;   // pre-activation per layer
};

ParamVector init_params(const MlpSpec& spec, Rng& rng);

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::span<const double> x,
                                MlpCache* cache = nullptr);

// Reverse-mode gradients of the forward map. param_grads is accumulated into
// (caller zeroes it when starting a fresh batch); input_grad, if non-null, is
// overwritten with dL/dx.
void mlp_backward(const MlpSpec& spec, const ParamVector& params,
                  const MlpCache& cache, std::span<const double> upstream_grad,
                  ParamVector& param_grads,
                  std::vector<double>* input_grad = nullptr);

// Max over parameters of |analytic - central difference| / max(1, |analytic|).
double finite_diff_check(const std::function<double(const ParamVector&)>& fn,
                         const ParamVector& params,
                         const ParamVector& analytic_grads, double eps);

struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<double> m, v;

  explicit AdamState(double learning_rate = 3e-4) : lr(learning_rate) {}
};

void adam_step(AdamState& state, ParamVector& params, const ParamVector& grads);

}  // namespace surgirl
