#include "surgirl/learner.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace surgirl {

void ReplayBuffer::add(Transition t) {
  for (double a : t.action) {
    if (!(a >= -1.0 && a <= 1.0)) throw NumericError("Transition action out of bounds");
  }
  if (!std::isfinite(t.reward)) throw NumericError("Transition reward not finite");
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (data_.empty()) throw ConfigError("ReplayBuffer: sampling from empty buffer");
  std::vector<std::size_t> idx(batch);
  for (std::size_t& i : idx) i = rng.uniform_index(data_.size());
  return idx;
}

void ReplayBuffer::clear() {
  data_.clear();
  cursor_ = 0;
}

void ReplayBuffer::restore(std::vector<Transition> data, std::size_t cursor) {
  data_ = std::move(data);
  cursor_ = cursor;
}

CriticPair make_critics(int obs_dim, int action_dim, int hidden, double lr,
                        double gamma, double tau, Rng& rng) {
  CriticPair c;
  c.spec = {obs_dim + action_dim, {hidden, hidden}, 1, Activation::ReLU};
  c.q1 = init_params(c.spec, rng);
  c.q2 = init_params(c.spec, rng);
  c.target1 = c.q1;
  c.target2 = c.q2;
  c.opt1 = AdamState(lr);
  c.opt2 = AdamState(lr);
  c.gamma = gamma;
  c.tau = tau;
  return c;
}

void target_sync(CriticPair& critics, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("target_sync: tau must be in (0,1]");
  for (std::size_t i = 0; i < critics.q1.size(); ++i) {
    critics.target1[i] = tau * critics.q1[i] + (1.0 - tau) * critics.target1[i];
    critics.target2[i] = tau * critics.q2[i] + (1.0 - tau) * critics.target2[i];
  }
}

double EntropyCoefficients::alpha() const {
  return auto_tune ? std::exp(log_alpha) : fixed_alpha;
}

ActorNoise draw_actor_noise(const KianPolicy& p, Rng& rng) {
  ActorNoise nz;
  int C = p.components();
  int d = p.task.action_dim;
  if (C > 1) {
    nz.gumbels.resize(C);
    for (double& g : nz.gumbels) g = rng.gumbel();
  }
  nz.comp_noise.resize(C);
  for (auto& v : nz.comp_noise) {
    v.resize(d);
    for (double& x : v) x = rng.normal();
  }
  return nz;
}

ParamVector flatten_trainable(const KianPolicy& p) {
  ParamVector flat;
  flat.insert(flat.end(), p.query_params.begin(), p.query_params.end());
  flat.insert(flat.end(), p.actor_params.begin(), p.actor_params.end());
  flat.insert(flat.end(), p.inner_key.begin(), p.inner_key.end());
  for (const auto& k : p.knowledge.keys) {
    flat.insert(flat.end(), k.embedding.begin(), k.embedding.end());
  }
  return flat;
}

void set_trainable(KianPolicy& p, std::span<const double> flat) {
  std::size_t off = 0;
  std::copy_n(flat.begin(), p.query_params.size(), p.query_params.begin());
  off += p.query_params.size();
  std::copy_n(flat.begin() + off, p.actor_params.size(), p.actor_params.begin());
  off += p.actor_params.size();
  std::copy_n(flat.begin() + off, p.inner_key.size(), p.inner_key.begin());
  off += p.inner_key.size();
  for (auto& k : p.knowledge.keys) {
    std::copy_n(flat.begin() + off, k.embedding.size(), k.embedding.begin());
    off += k.embedding.size();
  }
}

namespace {

// dOut_j = s_j * (dIn_j - sum_k dIn_k * s_k), the softmax Jacobian product.
void softmax_backward(std::span<const double> s, std::span<const double> d_in,
                      std::span<double> d_out) {
  double dot = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) dot += d_in[k] * s[k];
  for (std::size_t j = 0; j < s.size(); ++j) d_out[j] = s[j] * (d_in[j] - dot);
}

}  // namespace

ActorEval actor_loss(const KianPolicy& p, const CriticPair& critics,
                     const std::vector<std::span<const double>>& states,
                     double alpha, double beta,
                     const std::vector<ActorNoise>& noise, bool hard,
                     ActorGrads* grads) {
  const int C = p.components();
  const int d = p.task.action_dim;
  const int d_k = p.cfg.d_k;
  const double tau_gs = p.cfg.temperature;
  const std::size_t B = states.size();
  if (B == 0) throw ConfigError("actor_loss: empty batch");
  const double inv_B = 1.0 / static_cast<double>(B);

  if (grads) {
    grads->query.assign(p.query_params.size(), 0.0);
    grads->actor.assign(p.actor_params.size(), 0.0);
    grads->keys.assign(static_cast<std::size_t>(C) * d_k, 0.0);
  }

  ActorEval ev;
  ev.mean_weights.assign(C, 0.0);
  auto keys = p.key_views();
  ParamVector critic_scratch(critics.q1.size());

  for (std::size_t b = 0; b < B; ++b) {
    std::span<const double> s = states[b];
    const ActorNoise& nz = noise[b];

    MlpCache qcache;
    auto u = mlp_forward(p.query_spec, p.query_params, s, grads ? &qcache : nullptr);
    MixtureWeights mw = attention_weights(u, keys);

    MlpCache acache;
    auto head = mlp_forward(p.actor_spec, p.actor_params, s, grads ? &acache : nullptr);

    // Component distributions, index 0 = inner.
    std::vector<std::vector<double>> mu(C), log_std(C), sigma(C);
    mu[0].assign(head.begin(), head.begin() + d);
    log_std[0].resize(d);
    sigma[0].resize(d);
    for (int i = 0; i < d; ++i) {
      log_std[0][i] = clamp_log_std(head[d + i]);
      sigma[0][i] = std::exp(log_std[0][i]);
    }
    for (int j = 1; j < C; ++j) {
      ActDist dist = p.knowledge.policies[j - 1].act_dist(s, p.task);
      mu[j] = std::move(dist.mean);
      sigma[j] = std::move(dist.std);
      log_std[j].resize(d);
      for (int i = 0; i < d; ++i) log_std[j][i] = std::log(sigma[j][i]);
    }

    // Knowledge sampling (straight-through or fully soft).
    std::vector<double> y;
    int sel = 0;
    std::vector<double> m(C, 1.0);
    if (C > 1) {
      y = gumbel_softmax_soft(mw.w, tau_gs, nz.gumbels);
      sel = static_cast<int>(std::max_element(y.begin(), y.end()) - y.begin());
      for (int j = 0; j < C; ++j) m[j] = hard ? (j == sel ? 1.0 : 0.0) : y[j];
    }

    // Component samples and the mixed action.
    std::vector<std::vector<double>> comp_a(C);
    std::vector<double> action(d, 0.0);
    for (int j = 0; j < C; ++j) {
      comp_a[j].resize(d);
      for (int i = 0; i < d; ++i) {
        comp_a[j][i] = squash_action(mu[j][i] + sigma[j][i] * nz.comp_noise[j][i]);
      }
    }
    if (C == 1) {
      action = comp_a[0];
    } else {
      for (int j = 0; j < C; ++j) {
        if (m[j] == 0.0) continue;
        for (int i = 0; i < d; ++i) action[i] += m[j] * comp_a[j][i];
      }
    }

    // Mixture log-prob and per-component posteriors. On the hard path the
    // action is exactly the selected component's sample, so that component's
    // density comes from its noise (bounded even when tanh saturates); the
    // soft path blends actions and keeps the generic squashed density.
    std::vector<double> l(C);
    for (int j = 0; j < C; ++j) {
      double comp = (hard && j == sel)
                        ? sampled_log_prob(log_std[j], nz.comp_noise[j], action)
                        : squashed_log_prob(mu[j], log_std[j], action);
      l[j] = std::log(mw.w[j]) + comp;
    }
    double mx = *std::max_element(l.begin(), l.end());
    double sum = 0.0;
    for (double v : l) sum += std::exp(v - mx);
    double lp = mx + std::log(sum);
    std::vector<double> post(C);
    for (int j = 0; j < C; ++j) post[j] = std::exp(l[j] - lp);

    // Critic value of the sampled action.
    std::vector<double> x(s.begin(), s.end());
    x.insert(x.end(), action.begin(), action.end());
    MlpCache c1cache, c2cache;
    double q1v = mlp_forward(critics.spec, critics.q1, x, grads ? &c1cache : nullptr)[0];
    double q2v = mlp_forward(critics.spec, critics.q2, x, grads ? &c2cache : nullptr)[0];
    bool use1 = q1v <= q2v;
    double qmin = use1 ? q1v : q2v;

    double hw = categorical_entropy(mw.w);
    ev.loss += inv_B * (alpha * lp - qmin - beta * hw);
    ev.mean_log_prob += inv_B * lp;
    ev.mean_entropy += inv_B * hw;
    for (int j = 0; j < C; ++j) ev.mean_weights[j] += inv_B * mw.w[j];

    if (!grads) continue;

    // ---- Backward ----
    std::vector<double> da(d, 0.0);
    std::vector<double> d_mu0(d, 0.0), d_ls0(d, 0.0);
    std::vector<double> dummy_mu(d), dummy_ls(d);

    // Mixture log-prob: direct dependence on component densities and action.
    // The selected component's sampled-form density has no explicit mean
    // dependence (the noise is fixed); its log_std partial is -1 per
    // dimension and the squash correction flows through the action.
    for (int j = 0; j < C; ++j) {
      double up = alpha * inv_B * post[j];
      if (hard && j == sel) {
        for (int i = 0; i < d; ++i) {
          if (j == 0) d_ls0[i] += -up;
          double a = action[i];
          da[i] += up * (2.0 * a / (1.0 - a * a + kSquashEps));
        }
      } else if (j == 0) {
        squashed_log_prob_grad(mu[0], log_std[0], action, up, d_mu0, d_ls0, da);
      } else {
        std::fill(dummy_mu.begin(), dummy_mu.end(), 0.0);
        std::fill(dummy_ls.begin(), dummy_ls.end(), 0.0);
        squashed_log_prob_grad(mu[j], log_std[j], action, up, dummy_mu, dummy_ls, da);
      }
    }

    // -min(Q1,Q2): action gradient through the smaller critic.
    {
      std::fill(critic_scratch.begin(), critic_scratch.end(), 0.0);
      std::vector<double> xin_grad;
      double up = -inv_B;
      mlp_backward(critics.spec, use1 ? critics.q1 : critics.q2,
                   use1 ? c1cache : c2cache, std::span<const double>(&up, 1),
                   critic_scratch, &xin_grad);
      for (int i = 0; i < d; ++i) da[i] += xin_grad[s.size() + i];
    }

    // Through the mixed action into component samples (hard weights) and the
    // relaxation weights y (soft path of the straight-through estimator).
    std::vector<double> dy(C, 0.0);
    for (int j = 0; j < C; ++j) {
      double wj = (C == 1) ? 1.0 : m[j];
      if (j == 0 && wj != 0.0) {
        for (int i = 0; i < d; ++i) {
          double dz = wj * da[i] * (1.0 - comp_a[0][i] * comp_a[0][i]);
          d_mu0[i] += dz;
          d_ls0[i] += dz * sigma[0][i] * nz.comp_noise[0][i];
        }
      }
      if (C > 1) {
        double acc = 0.0;
        for (int i = 0; i < d; ++i) acc += da[i] * comp_a[j][i];
        dy[j] = acc;
      }
    }

    // Weight gradient: mixture log-prob, entropy bonus, Gumbel relaxation.
    // A weight that underflowed to exactly 0 contributes nothing to the
    // score gradient (dscores_j carries a factor w_j), so its terms are
    // skipped instead of evaluating 0/0 and log(0).
    std::vector<double> dw(C, 0.0);
    for (int j = 0; j < C; ++j) {
      if (mw.w[j] == 0.0) continue;
      dw[j] += alpha * inv_B * post[j] / mw.w[j];
      if (beta != 0.0) dw[j] += inv_B * beta * (std::log(mw.w[j]) + 1.0);
    }
    if (C > 1) {
      std::vector<double> deta(C);
      softmax_backward(y, dy, deta);
      for (int j = 0; j < C; ++j) {
        if (mw.w[j] == 0.0) continue;
        dw[j] += deta[j] / (tau_gs * mw.w[j]);
      }
    }

    // Softmax over attention scores, then into query output and keys.
    std::vector<double> dscores(C);
    softmax_backward(mw.w, dw, dscores);
    double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    std::vector<double> du(d_k, 0.0);
    for (int j = 0; j < C; ++j) {
      for (int i = 0; i < d_k; ++i) {
        du[i] += dscores[j] * keys[j][i] * scale;
        grads->keys[static_cast<std::size_t>(j) * d_k + i] += dscores[j] * u[i] * scale;
      }
    }

    // Inner actor head: clamp zeroes the log_std gradient at the bounds.
    std::vector<double> head_grad(2 * d);
    for (int i = 0; i < d; ++i) {
      head_grad[i] = d_mu0[i];
      double raw = head[d + i];
      head_grad[d + i] = (raw > kLogStdMin && raw < kLogStdMax) ? d_ls0[i] : 0.0;
    }
    mlp_backward(p.actor_spec, p.actor_params, acache, head_grad, grads->actor);
    mlp_backward(p.query_spec, p.query_params, qcache, du, grads->query);
  }
  return ev;
}

EvalResult evaluate(const KianPolicy& p, const TaskSpec& task, int episodes,
                    std::uint64_t seed) {
  if (episodes <= 0) throw ConfigError("evaluate: episodes must be positive");
  if (task.obs_dim != p.task.obs_dim || task.action_dim != p.task.action_dim) {
    throw ConfigError("evaluate: checkpoint/task dimensions incompatible");
  }
  EvalResult res;
  for (int e = 0; e < episodes; ++e) {
    Env env(task, Rng::mix(seed, "eval-episode-" + std::to_string(e)));
    auto obs = env.reset();
    double ret = 0.0;
    bool success = false;
    while (true) {
      auto a = greedy_act(p, obs);
      auto r = env.step(a);
      ret += r.reward;
      success = success || r.info.success;
      obs = std::move(r.next_obs);
      if (r.done) break;
    }
    res.episode_success.push_back(success);
    res.episode_return.push_back(ret);
    res.success_rate += success ? 1.0 : 0.0;
    res.mean_return += ret;
  }
  res.success_rate /= episodes;
  res.mean_return /= episodes;
  return res;
}

Learner::Learner(KianPolicy policy, const LearnerConfig& cfg, std::uint64_t seed)
    : policy_(std::move(policy)),
      cfg_(cfg),
      critics_(),
      buffer_(cfg.buffer_capacity),
      query_opt_(cfg.actor_lr),
      actor_opt_(cfg.actor_lr),
      keys_opt_(cfg.actor_lr),
      policy_rng_(Rng::substream(seed, "policy")),
      learner_rng_(Rng::substream(seed, "learner")),
      seed_(seed) {
  Rng critic_rng = Rng::substream(seed, "critic-init");
  critics_ = make_critics(policy_.task.obs_dim, policy_.task.action_dim,
                          cfg.critic_hidden, cfg.critic_lr, cfg.gamma, cfg.tau,
                          critic_rng);
  coeffs_.auto_tune = cfg.alpha_auto;
  coeffs_.fixed_alpha = cfg.alpha_value;
  coeffs_.log_alpha = cfg.alpha_auto ? std::log(0.1) : std::log(cfg.alpha_value);
  coeffs_.target_entropy = -static_cast<double>(policy_.task.action_dim);
  coeffs_.opt = AdamState(cfg.alpha_lr);
  coeffs_.beta = cfg.beta;
}

double Learner::critic_update(const std::vector<std::size_t>& batch_idx) {
  if (batch_idx.empty()) throw ConfigError("critic_update: empty batch");
  const std::size_t B = batch_idx.size();
  const double inv_B = 1.0 / static_cast<double>(B);
  double alpha = coeffs_.alpha();

  std::vector<double> targets(B);
  for (std::size_t b = 0; b < B; ++b) {
    const Transition& tr = buffer_.at(batch_idx[b]);
    double y = tr.reward;
    if (!tr.done) {
      ActionDiagnostics diag;
      auto a2 = act(policy_, tr.next_state, learner_rng_, &diag);
      std::vector<double> x(tr.next_state);
      x.insert(x.end(), a2.begin(), a2.end());
      double t1 = mlp_forward(critics_.spec, critics_.target1, x)[0];
      double t2 = mlp_forward(critics_.spec, critics_.target2, x)[0];
      y += critics_.gamma * (std::min(t1, t2) - alpha * diag.log_prob);
    }
    if (!std::isfinite(y)) {
      throw NumericError("critic_update: non-finite target at batch index " +
                         std::to_string(b));
    }
    targets[b] = y;
  }

  ParamVector g1(critics_.q1.size(), 0.0), g2(critics_.q2.size(), 0.0);
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const Transition& tr = buffer_.at(batch_idx[b]);
    std::vector<double> x(tr.state);
    x.insert(x.end(), tr.action.begin(), tr.action.end());
    MlpCache c1, c2;
    double p1 = mlp_forward(critics_.spec, critics_.q1, x, &c1)[0];
    double p2 = mlp_forward(critics_.spec, critics_.q2, x, &c2)[0];
    loss += inv_B * 0.5 * ((p1 - targets[b]) * (p1 - targets[b]) +
                           (p2 - targets[b]) * (p2 - targets[b]));
    double u1 = inv_B * (p1 - targets[b]);
    double u2 = inv_B * (p2 - targets[b]);
    mlp_backward(critics_.spec, critics_.q1, c1, std::span<const double>(&u1, 1), g1);
    mlp_backward(critics_.spec, critics_.q2, c2, std::span<const double>(&u2, 1), g2);
  }
  adam_step(critics_.opt1, critics_.q1, g1);
  adam_step(critics_.opt2, critics_.q2, g2);
  last_critic_loss_ = loss;
  return loss;
}

double Learner::actor_update(const std::vector<std::size_t>& batch_idx, long t,
                             ActorEval* eval_out) {
  if (batch_idx.empty()) throw ConfigError("actor_update: empty batch");
  std::vector<std::span<const double>> states;
  states.reserve(batch_idx.size());
  for (std::size_t i : batch_idx) states.emplace_back(buffer_.at(i).state);
  std::vector<ActorNoise> noise;
  noise.reserve(batch_idx.size());
  for (std::size_t b = 0; b < batch_idx.size(); ++b) {
    noise.push_back(draw_actor_noise(policy_, learner_rng_));
  }
  double beta = coeffs_.beta.at(t);
  ActorGrads g;
  ActorEval ev = actor_loss(policy_, critics_, states, coeffs_.alpha(), beta,
                            noise, /*hard=*/true, &g);
  adam_step(query_opt_, policy_.query_params, g.query);
  adam_step(actor_opt_, policy_.actor_params, g.actor);
  // Keys update over the flattened [inner | externals] block.
  std::vector<double> keys_flat = [&] {
    std::vector<double> f(policy_.inner_key);
    for (const auto& k : policy_.knowledge.keys) {
      f.insert(f.end(), k.embedding.begin(), k.embedding.end());
    }
    return f;
  }();
  adam_step(keys_opt_, keys_flat, g.keys);
  std::copy_n(keys_flat.begin(), policy_.inner_key.size(), policy_.inner_key.begin());
  std::size_t off = policy_.inner_key.size();
  for (auto& k : policy_.knowledge.keys) {
    std::copy_n(keys_flat.begin() + off, k.embedding.size(), k.embedding.begin());
    off += k.embedding.size();
  }
  last_actor_loss_ = ev.loss;
  last_actor_eval_ = ev;
  if (eval_out) *eval_out = ev;
  return ev.loss;
}

double Learner::alpha_update(double mean_log_prob) {
  if (!coeffs_.auto_tune) return coeffs_.alpha();
  double grad = -(mean_log_prob + coeffs_.target_entropy);
  ParamVector param = {coeffs_.log_alpha};
  ParamVector g = {grad};
  adam_step(coeffs_.opt, param, g);
  // Tight scripted components can hold the mixture log-prob above the target
  // entropy indefinitely; without a bound log-alpha integrates upward until
  // the critic targets overflow.
  coeffs_.log_alpha = std::clamp(param[0], kLogAlphaMin, kLogAlphaMax);
  return coeffs_.alpha();
}

TrainResult Learner::train(Env& env, long steps, MetricsSink sink,
                           double stop_at_success, const StepSink& step_sink) {
  TrainResult result;
  auto obs = env.observe();
  int d = policy_.task.action_dim;

  for (long s = 0; s < steps; ++s) {
    ++global_step_;
    std::vector<double> action(d);
    if (global_step_ <= cfg_.start_steps) {
      for (double& a : action) a = policy_rng_.uniform(-1.0, 1.0);
    } else {
      action = act(policy_, obs, policy_rng_);
    }
    auto res = env.step(action);
    ep_return_ += res.reward;
    if (step_sink) step_sink(global_step_, obs, action, res.reward);
    buffer_.add({obs, action, res.reward, res.next_obs, res.done});
    obs = std::move(res.next_obs);
    if (res.done) {
      last_ep_return_ = ep_return_;
      ep_return_ = 0.0;
      obs = env.reset();
    }

    if (global_step_ > cfg_.start_steps &&
        buffer_.size() >= static_cast<std::size_t>(cfg_.batch)) {
      for (int u = 0; u < cfg_.updates_per_step; ++u) {
        auto idx = buffer_.sample_indices(cfg_.batch, learner_rng_);
        critic_update(idx);
        ActorEval ev;
        actor_update(idx, global_step_, &ev);
        alpha_update(ev.mean_log_prob);
        target_sync(critics_, critics_.tau);
      }
    }

    if (cfg_.eval_interval > 0 && global_step_ % cfg_.eval_interval == 0) {
      auto er = evaluate(policy_, policy_.task, cfg_.eval_episodes,
                         Rng::mix(seed_, "eval-" + std::to_string(eval_count_++)));
      MetricsRow row;
      row.step = global_step_;
      row.episode_return = last_ep_return_;
      row.success_rate = er.success_rate;
      row.actor_loss = last_actor_loss_;
      row.critic_loss = last_critic_loss_;
      row.alpha = coeffs_.alpha();
      row.beta = coeffs_.beta.at(global_step_);
      row.mean_Hw = last_actor_eval_.mean_entropy;
      row.mean_w = last_actor_eval_.mean_weights;
      if (row.mean_w.empty()) row.mean_w.assign(policy_.components(), 0.0);
      result.metrics.push_back(row);
      if (sink) sink(row);
      if (stop_at_success >= 0.0 && er.success_rate >= stop_at_success &&
          result.steps_to_threshold < 0) {
        result.steps_to_threshold = global_step_;
        result.steps_run = s + 1;
        return result;
      }
    }
  }
  result.steps_run = steps;
  return result;
}

}  // namespace surgirl
