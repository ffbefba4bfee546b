#include "surgirl/policy.hpp"

#include <algorithm>
#include <cmath>

namespace surgirl {

double BetaSchedule::at(long t) const {
  return std::exp(-d_e * static_cast<double>(t)) + c_e;
}

MixtureWeights attention_weights(std::span<const double> u,
                                 const std::vector<std::span<const double>>& keys) {
  if (keys.empty()) throw ConfigError("attention_weights: empty key list");
  std::size_t d_k = u.size();
  double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
  MixtureWeights mw;
  mw.raw_scores.resize(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    if (keys[j].size() != d_k) throw ShapeError("attention_weights: key length != d_k");
    double dot = 0.0;
    for (std::size_t i = 0; i < d_k; ++i) dot += u[i] * keys[j][i];
    mw.raw_scores[j] = dot * scale;
  }
  double mx = *std::max_element(mw.raw_scores.begin(), mw.raw_scores.end());
  double sum = 0.0;
  mw.w.resize(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    mw.w[j] = std::exp(mw.raw_scores[j] - mx);
    sum += mw.w[j];
  }
  for (double& v : mw.w) v /= sum;
  return mw;
}

std::vector<double> gumbel_softmax_soft(std::span<const double> w, double temperature,
                                        std::span<const double> gumbels) {
  std::vector<double> eta(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    eta[j] = (std::log(w[j]) + gumbels[j]) / temperature;
  }
  double mx = *std::max_element(eta.begin(), eta.end());
  double sum = 0.0;
  for (double& e : eta) {
    e = std::exp(e - mx);
    sum += e;
  }
  for (double& e : eta) e /= sum;
  return eta;
}

int knowledge_sample(const MixtureWeights& w, double temperature, Rng& rng) {
  if (temperature <= 0.0) throw ConfigError("knowledge_sample: temperature must be > 0");
  for (std::size_t j = 0; j < w.w.size(); ++j) {
    if (w.w[j] == 1.0) return static_cast<int>(j);
  }
  std::vector<double> gumbels(w.w.size());
  for (double& g : gumbels) g = rng.gumbel();
  auto y = gumbel_softmax_soft(w.w, temperature, gumbels);
  return static_cast<int>(std::max_element(y.begin(), y.end()) - y.begin());
}

double categorical_entropy(std::span<const double> w) {
  double h = 0.0;
  for (double v : w) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::vector<std::span<const double>> KianPolicy::key_views() const {
  std::vector<std::span<const double>> keys;
  keys.reserve(components());
  keys.emplace_back(inner_key);
  for (const auto& k : knowledge.keys) keys.emplace_back(k.embedding);
  return keys;
}

MlpSpec default_actor_spec(int obs_dim, int action_dim, int hidden) {
  return {obs_dim, {hidden, hidden, hidden}, 2 * action_dim, Activation::ReLU};
}

MlpSpec default_query_spec(int obs_dim, int d_k, int hidden) {
  return {obs_dim, {hidden, hidden, hidden}, d_k, Activation::ReLU};
}

KianPolicy make_kian_policy(const TaskSpec& task, KnowledgeSet knowledge,
                            Rng& init_rng, int actor_hidden, int query_hidden,
                            int d_k) {
  KianPolicy p;
  p.task = task;
  p.cfg.d_k = d_k;
  p.actor_spec = default_actor_spec(task.obs_dim, task.action_dim, actor_hidden);
  p.query_spec = default_query_spec(task.obs_dim, d_k, query_hidden);
  p.actor_params = init_params(p.actor_spec, init_rng);
  p.query_params = init_params(p.query_spec, init_rng);
  double bound = 1.0 / std::sqrt(static_cast<double>(d_k));
  p.inner_key.resize(d_k);
  for (double& v : p.inner_key) v = init_rng.uniform(-bound, bound);
  p.knowledge = std::move(knowledge);
  return p;
}

std::vector<ActDist> component_dists(const KianPolicy& p,
                                     std::span<const double> obs) {
  std::vector<ActDist> dists;
  dists.reserve(p.components());
  auto head = mlp_forward(p.actor_spec, p.actor_params, obs);
  ActDist inner;
  int d = p.task.action_dim;
  inner.mean.assign(head.begin(), head.begin() + d);
  inner.std.resize(d);
  for (int i = 0; i < d; ++i) inner.std[i] = std::exp(clamp_log_std(head[d + i]));
  dists.push_back(std::move(inner));
  for (const auto& g : p.knowledge.policies) {
    dists.push_back(g.act_dist(obs, p.task));
  }
  return dists;
}

MixtureWeights policy_weights(const KianPolicy& p, std::span<const double> obs) {
  auto u = mlp_forward(p.query_spec, p.query_params, obs);
  return attention_weights(u, p.key_views());
}

double mixture_log_prob_given(const MixtureWeights& w,
                              const std::vector<ActDist>& dists,
                              std::span<const double> action) {
  std::vector<double> l(dists.size());
  for (std::size_t j = 0; j < dists.size(); ++j) {
    std::vector<double> log_std(dists[j].std.size());
    for (std::size_t i = 0; i < log_std.size(); ++i) log_std[i] = std::log(dists[j].std[i]);
    l[j] = std::log(w.w[j]) + squashed_log_prob(dists[j].mean, log_std, action);
  }
  double mx = *std::max_element(l.begin(), l.end());
  double sum = 0.0;
  for (double v : l) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

double mixture_log_prob_sampled(const MixtureWeights& w,
                                const std::vector<ActDist>& dists,
                                std::span<const double> action, int selected,
                                std::span<const double> noise) {
  std::vector<double> l(dists.size());
  for (std::size_t j = 0; j < dists.size(); ++j) {
    std::vector<double> log_std(dists[j].std.size());
    for (std::size_t i = 0; i < log_std.size(); ++i) log_std[i] = std::log(dists[j].std[i]);
    double comp = (static_cast<int>(j) == selected)
                      ? sampled_log_prob(log_std, noise, action)
                      : squashed_log_prob(dists[j].mean, log_std, action);
    l[j] = std::log(w.w[j]) + comp;
  }
  double mx = *std::max_element(l.begin(), l.end());
  double sum = 0.0;
  for (double v : l) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

double mixture_log_prob(const KianPolicy& p, std::span<const double> obs,
                        std::span<const double> action) {
  auto w = policy_weights(p, obs);
  auto dists = component_dists(p, obs);
  return mixture_log_prob_given(w, dists, action);
}

std::vector<double> act(const KianPolicy& p, std::span<const double> obs, Rng& rng,
                        ActionDiagnostics* diag) {
  auto w = policy_weights(p, obs);
  auto dists = component_dists(p, obs);
  int idx = knowledge_sample(w, p.cfg.temperature, rng);
  const ActDist& dist = dists[idx];
  int d = p.task.action_dim;
  std::vector<double> noise(d);
  for (double& v : noise) v = rng.normal();
  std::vector<double> action(d);
  for (int i = 0; i < d; ++i) {
    action[i] = squash_action(dist.mean[i] + dist.std[i] * noise[i]);
  }
  if (diag) {
    diag->selected_index = idx;
    diag->component_mean = dist.mean;
    diag->component_std = dist.std;
    diag->log_prob = mixture_log_prob_sampled(w, dists, action, idx, noise);
    diag->weights = std::move(w);
  }
  return action;
}

std::vector<double> greedy_act(const KianPolicy& p, std::span<const double> obs,
                               int* selected) {
  auto w = policy_weights(p, obs);
  int idx = static_cast<int>(std::max_element(w.w.begin(), w.w.end()) - w.w.begin());
  if (selected) *selected = idx;
  if (idx == 0) {
    auto head = mlp_forward(p.actor_spec, p.actor_params, obs);
    std::vector<double> a(p.task.action_dim);
    for (int i = 0; i < p.task.action_dim; ++i) a[i] = std::tanh(head[i]);
    return a;
  }
  return p.knowledge.policies[idx - 1].greedy_action(obs, p.task);
}

}  // namespace surgirl
