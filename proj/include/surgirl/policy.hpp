#pragma once

#include <span>
#include <vector>

#include "surgirl/envs.hpp"
#include "surgirl/gaussian.hpp"
#include "surgirl/knowledge.hpp"
#include "surgirl/mlp.hpp"

namespace surgirl {

// Probability vector over [inner, g_1..g_n] with its pre-softmax scores.
struct MixtureWeights {
  std::vector<double> w;
  std::vector<double> raw_scores;
};

// beta_t = exp(-d_e * t) + c_e
struct BetaSchedule {
  double d_e = 0.0;
  double c_e = 0.0;

  double at(long t) const;
};

struct ActionDiagnostics {
  MixtureWeights weights;
  int selected_index = 0;
  std::vector<double> component_mean;
  std::vector<double> component_std;
  double log_prob = 0.0;  // mixture log-prob of the emitted action
};

// Scaled dot-product attention: score_j = (u . k_j) / sqrt(d_k), softmax'd.
MixtureWeights attention_weights(std::span<const double> u,
                                 const std::vector<std::span<const double>>& keys);

// Soft Gumbel-softmax relaxation given pre-drawn Gumbel noise.
std::vector<double> gumbel_softmax_soft(std::span<const double> w, double temperature,
                                        std::span<const double> gumbels);

// Hard straight-through selection. A degenerate w (an entry exactly 1)
// returns that index without consuming randomness.
int knowledge_sample(const MixtureWeights& w, double temperature, Rng& rng);

// H(w) = -sum w_j log w_j, with 0 log 0 := 0.
double categorical_entropy(std::span<const double> w);

struct KianConfig {
  int d_k = kDefaultKeyDim;
  double temperature = 1.0;
};

// The KIAN-ACE mixture policy: query network, learnable keys, inner actor,
// and the (frozen) external knowledge set.
struct KianPolicy {
  TaskSpec task;
  MlpSpec query_spec;
  MlpSpec actor_spec;  // outputs [mean, log_std_raw], 2 * action_dim
  ParamVector query_params;
  ParamVector actor_params;
  std::vector<double> inner_key;
  KnowledgeSet knowledge;
  KianConfig cfg;

  int n_external() const { return knowledge.size(); }
  int components() const { return knowledge.size() + 1; }

  std::vector<std::span<const double>> key_views() const;
};

MlpSpec default_actor_spec(int obs_dim, int action_dim, int hidden = 512);
MlpSpec default_query_spec(int obs_dim, int d_k, int hidden = 64);

KianPolicy make_kian_policy(const TaskSpec& task, KnowledgeSet knowledge,
                            Rng& init_rng, int actor_hidden = 512,
                            int query_hidden = 64, int d_k = kDefaultKeyDim);

// Component distributions in pre-squash normalized units, index 0 = inner.
std::vector<ActDist> component_dists(const KianPolicy& p,
                                     std::span<const double> obs);

MixtureWeights policy_weights(const KianPolicy& p, std::span<const double> obs);

// Sample an action: query -> attention -> knowledge sampling -> component
// sample. The diagnostics log_prob is the mixture log-prob.
std::vector<double> act(const KianPolicy& p, std::span<const double> obs, Rng& rng,
                        ActionDiagnostics* diag = nullptr);

// log sum_j w_j p_j(action | obs), in log-sum-exp form.
double mixture_log_prob(const KianPolicy& p, std::span<const double> obs,
                        std::span<const double> action);
double mixture_log_prob_given(const MixtureWeights& w,
                              const std::vector<ActDist>& dists,
                              std::span<const double> action);

// Mixture log-prob of a freshly sampled action: the selected component's
// density is evaluated from its standard-normal noise (see sampled_log_prob),
// so it stays bounded when the pre-squash value saturates tanh; the other
// components go through the generic squashed density.
double mixture_log_prob_sampled(const MixtureWeights& w,
                                const std::vector<ActDist>& dists,
                                std::span<const double> action, int selected,
                                std::span<const double> noise);

// Deterministic deployment: argmax-weight component, component mean action.
std::vector<double> greedy_act(const KianPolicy& p, std::span<const double> obs,
                               int* selected = nullptr);

}  // namespace surgirl
