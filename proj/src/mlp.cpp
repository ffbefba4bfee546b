#include "surgirl/mlp.hpp"

#include <cmath>

namespace surgirl {

std::vector<int> MlpSpec::layer_dims() const {
  std::vector<int> dims;
  dims.push_back(input_dim);
  for (int h : hidden_dims) dims.push_back(h);
  dims.push_back(output_dim);
  return dims;
}

std::size_t MlpSpec::param_count() const {
  auto dims = layer_dims();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    n += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
  }
  return n;
}

ParamVector init_params(const MlpSpec& spec, Rng& rng) {
  auto dims = spec.layer_dims();
  ParamVector p;
  p.reserve(spec.param_count());
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    std::size_t count = static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
    for (std::size_t i = 0; i < count; ++i) p.push_back(rng.uniform(-bound, bound));
  }
  return p;
}

static double activate(double x, Activation a) {
  return a == Activation::ReLU ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

static double activate_grad(double pre, double post, Activation a) {
  return a == Activation::ReLU ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - post * post;
}

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::span<const double> x, MlpCache* cache) {
  if (static_cast<int>(x.size()) != spec.input_dim) {
    throw ShapeError("mlp_forward: input length " + std::to_string(x.size()) +
                     " != input_dim " + std::to_string(spec.input_dim));
  }
  if (params.size() != spec.param_count()) {
    throw ShapeError("mlp_forward: params length " + std::to_string(params.size()) +
                     " != expected " + std::to_string(spec.param_count()));
  }
  auto dims = spec.layer_dims();
  std::size_t layers = dims.size() - 1;
  std::vector<double> cur(x.begin(), x.end());
  if (cache) {
    cache->post.assign(1, cur);
    cache->pre.clear();
  }
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    int in = dims[l], out = dims[l + 1];
    std::vector<double> z(out);
    for (int o = 0; o < out; ++o) {
      const double* w = &params[off + static_cast<std::size_t>(o) * in];
      double acc = params[off + static_cast<std::size_t>(out) * in + o];
      for (int i = 0; i < in; ++i) acc += w[i] * cur[i];
      z[o] = acc;
    }
    off += static_cast<std::size_t>(out) * in + out;
    bool last = (l + 1 == layers);  // linear output layer
    std::vector<double> h(out);
    for (int o = 0; o < out; ++o) {
      h[o] = last ? z[o] : activate(z[o], spec.activation);
      if (!std::isfinite(h[o])) {
        throw NumericError("mlp_forward: non-finite value at layer " + std::to_string(l));
      }
    }
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->post.push_back(h);
    }
    cur = std::move(h);
  }
  return cur;
}

void mlp_backward(const MlpSpec& spec, const ParamVector& params,
                  const MlpCache& cache, std::span<const double> upstream_grad,
                  ParamVector& param_grads, std::vector<double>* input_grad) {
  if (static_cast<int>(upstream_grad.size()) != spec.output_dim) {
    throw ShapeError("mlp_backward: upstream length != output_dim");
  }
  if (param_grads.size() != params.size()) {
    param_grads.assign(params.size(), 0.0);
  }
  auto dims = spec.layer_dims();
  std::size_t layers = dims.size() - 1;

  // Parameter offsets per layer.
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
  }

  std::vector<double> delta(upstream_grad.begin(), upstream_grad.end());
  for (std::size_t l = layers; l-- > 0;) {
    int in = dims[l], out = dims[l + 1];
    bool last = (l + 1 == layers);
    if (!last) {
      for (int o = 0; o < out; ++o) {
        delta[o] *= activate_grad(cache.pre[l][o], cache.post[l + 1][o], spec.activation);
      }
    }
    const std::vector<double>& x = cache.post[l];
    std::size_t base = offsets[l];
    for (int o = 0; o < out; ++o) {
      double d = delta[o];
      if (!std::isfinite(d)) {
        throw NumericError("mlp_backward: non-finite gradient at layer " + std::to_string(l));
      }
      double* gw = &param_grads[base + static_cast<std::size_t>(o) * in];
      for (int i = 0; i < in; ++i) gw[i] += d * x[i];
      param_grads[base + static_cast<std::size_t>(out) * in + o] += d;
    }
    if (l > 0 || input_grad) {
      std::vector<double> prev(in, 0.0);
      for (int o = 0; o < out; ++o) {
        double d = delta[o];
        const double* w = &params[base + static_cast<std::size_t>(o) * in];
        for (int i = 0; i < in; ++i) prev[i] += d * w[i];
      }
      if (l == 0 && input_grad) *input_grad = prev;
      delta = std::move(prev);
    }
  }
}

double finite_diff_check(const std::function<double(const ParamVector&)>& fn,
                         const ParamVector& params,
                         const ParamVector& analytic_grads, double eps) {
  ParamVector p = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double orig = p[i];
    p[i] = orig + eps;
    double hi = fn(p);
    p[i] = orig - eps;
    double lo = fn(p);
    p[i] = orig;
    double numeric = (hi - lo) / (2.0 * eps);
    double a = analytic_grads[i];
    double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    if (err > worst) worst = err;
  }
  return worst;
}

void adam_step(AdamState& state, ParamVector& params, const ParamVector& grads) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace surgirl
