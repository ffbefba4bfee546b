#pragma once

#include <functional>
#include <span>
#include <vector>

#include "surgirl/envs.hpp"
#include "surgirl/mlp.hpp"
#include "surgirl/policy.hpp"

namespace surgirl {

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void add(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;
  void clear();

  const std::vector<Transition>& raw() const { return data_; }
  std::size_t cursor() const { return cursor_; }
  void restore(std::vector<Transition> data, std::size_t cursor);

 private:
  std::vector<Transition> data_;
  std::size_t capacity_;
  std::size_t cursor_ = 0;
};

// Twin Q-networks with Polyak-averaged targets.
struct CriticPair {
  MlpSpec spec;  // input obs_dim + action_dim, output 1
  ParamVector q1, q2, target1, target2;
  AdamState opt1, opt2;
  double gamma = 0.98;
  double tau = 0.005;
};

CriticPair make_critics(int obs_dim, int action_dim, int hidden, double lr,
                        double gamma, double tau, Rng& rng);

// target <- tau * online + (1 - tau) * target
void target_sync(CriticPair& critics, double tau);

// Auto-tuned log-alpha is kept in a generous but finite range; see
// Learner::alpha_update.
inline constexpr double kLogAlphaMin = -20.0;
inline constexpr double kLogAlphaMax = 5.0;

struct EntropyCoefficients {
  bool auto_tune = true;
  double log_alpha = 0.0;
  double fixed_alpha = 1e-3;
  double target_entropy = 0.0;
  AdamState opt;
  BetaSchedule beta;

  double alpha() const;
};

// Per-sample frozen randomness for one actor evaluation: Gumbel noise for
// knowledge sampling plus a standard-normal draw per mixture component.
struct ActorNoise {
  std::vector<double> gumbels;                   // components() entries (unused when n=0)
  std::vector<std::vector<double>> comp_noise;   // components() x action_dim
};

ActorNoise draw_actor_noise(const KianPolicy& p, Rng& rng);

// Gradients for the trainable components: query, inner actor, and the key
// block [inner | g_1 | ... | g_n] flattened.
struct ActorGrads {
  ParamVector query, actor, keys;
};

struct ActorEval {
  double loss = 0.0;
  double mean_log_prob = 0.0;
  double mean_entropy = 0.0;              // mean H(w)
  std::vector<double> mean_weights;       // mean w over the batch
};

// Mean over the batch of alpha * log pi(a|s) - min(Q1,Q2)(s,a) - beta * H(w),
// with a drawn via straight-through Gumbel knowledge sampling (hard=true) or
// the fully soft relaxation (hard=false; exact gradients, used by the
// finite-difference checks). Knowledge-policy parameters receive no gradient.
ActorEval actor_loss(const KianPolicy& p, const CriticPair& critics,
                     const std::vector<std::span<const double>>& states,
                     double alpha, double beta,
                     const std::vector<ActorNoise>& noise, bool hard,
                     ActorGrads* grads);

// Concatenated trainable parameters (query, actor, inner key, external keys).
ParamVector flatten_trainable(const KianPolicy& p);
void set_trainable(KianPolicy& p, std::span<const double> flat);

struct MetricsRow {
  long step = 0;
  double episode_return = 0.0;
  double success_rate = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double mean_Hw = 0.0;
  std::vector<double> mean_w;  // [w_in, w_g1..w_gn]
};

using MetricsSink = std::function<void(const MetricsRow&)>;
using StepSink = std::function<void(long step, const std::vector<double>& state,
                                    const std::vector<double>& action,
                                    double reward)>;

struct LearnerConfig {
  double gamma = 0.98;
  double tau = 0.005;
  int batch = 256;
  std::size_t buffer_capacity = 100000;
  int start_steps = 1000;
  int eval_interval = 2000;
  int eval_episodes = 20;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double alpha_lr = 3e-4;
  bool alpha_auto = true;
  double alpha_value = 1e-3;  // used when alpha_auto is false
  BetaSchedule beta;
  int critic_hidden = 256;
  int updates_per_step = 1;
  long total_steps = 30000;
};

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
  std::vector<bool> episode_success;
  std::vector<double> episode_return;
};

EvalResult evaluate(const KianPolicy& p, const TaskSpec& task, int episodes,
                    std::uint64_t seed);

struct TrainResult {
  std::vector<MetricsRow> metrics;
  long steps_to_threshold = -1;  // first step whose eval met stop_at_success
  long steps_run = 0;
};

// Single-writer training loop: owns policy, critics, coefficients, buffer.
class Learner {
 public:
  Learner(KianPolicy policy, const LearnerConfig& cfg, std::uint64_t seed);

  // Interleaves env steps and gradient updates. Stops early once an
  // evaluation reaches stop_at_success (if >= 0).
  TrainResult train(Env& env, long steps, MetricsSink sink = {},
                    double stop_at_success = -1.0, const StepSink& step_sink = {});

  double critic_update(const std::vector<std::size_t>& batch_idx);
  double actor_update(const std::vector<std::size_t>& batch_idx, long t,
                      ActorEval* eval_out = nullptr);
  double alpha_update(double mean_log_prob);

  KianPolicy& policy() { return policy_; }
  const KianPolicy& policy() const { return policy_; }
  CriticPair& critics() { return critics_; }
  EntropyCoefficients& coeffs() { return coeffs_; }
  ReplayBuffer& buffer() { return buffer_; }
  const LearnerConfig& config() const { return cfg_; }
  long global_step() const { return global_step_; }
  void set_global_step(long t) { global_step_ = t; }

  Rng& policy_rng() { return policy_rng_; }
  Rng& learner_rng() { return learner_rng_; }
  AdamState& query_opt() { return query_opt_; }
  AdamState& actor_opt() { return actor_opt_; }
  AdamState& keys_opt() { return keys_opt_; }
  int eval_count() const { return eval_count_; }
  void set_eval_count(int c) { eval_count_ = c; }
  double episode_return() const { return ep_return_; }
  void set_episode_return(double r) { ep_return_ = r; }
  double last_episode_return() const { return last_ep_return_; }
  void set_last_episode_return(double r) { last_ep_return_ = r; }

 private:
  KianPolicy policy_;
  LearnerConfig cfg_;
  CriticPair critics_;
  EntropyCoefficients coeffs_;
  ReplayBuffer buffer_;
  AdamState query_opt_, actor_opt_, keys_opt_;
  Rng policy_rng_, learner_rng_;
  long global_step_ = 0;
  std::uint64_t seed_ = 0;
  double last_actor_loss_ = 0.0, last_critic_loss_ = 0.0;
  ActorEval last_actor_eval_;
  int eval_count_ = 0;
  double ep_return_ = 0.0, last_ep_return_ = 0.0;
};

}  // namespace surgirl
