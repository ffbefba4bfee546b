#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surgirl/envs.hpp"
#include "surgirl/mlp.hpp"

namespace surgirl {

// Proportional gain of the scripted control laws.
inline constexpr double kKnowGain = 5.0;
// Discrete control interval of the scripted laws. One env step integrates
// gain * dt * error; gain * dt must stay below 1 or the update overshoots
// and oscillates around the target instead of converging.
inline constexpr double kKnowDt = 0.1;
// Std of the scripted policies' Gaussian wrappers, normalized action units.
inline constexpr double kSigmaKnow = 0.05;
// Knowledge key dimension (overridable via config).
inline constexpr int kDefaultKeyDim = 4;

struct ActDist {
  std::vector<double> mean;  // action_dim
  std::vector<double> std;   // strictly positive
};

// Scripted control laws. Means are in physical units, per-axis clamped to
// +/- a_scale; stds are kSigmaKnow in normalized units. Fields a task lacks
// contribute zeros.
ActDist approach_policy(std::span<const double> obs, const TaskSpec& spec);
ActDist transport_policy(std::span<const double> obs, const TaskSpec& spec);
ActDist handover_policy(std::span<const double> obs, const TaskSpec& spec);

enum class PolicyKind {
  ScriptedApproach,
  ScriptedTransport,
  ScriptedHandover,
  LearnedInnerActor,
};

const char* policy_kind_name(PolicyKind k);
PolicyKind policy_kind_from_name(const std::string& name);

// Any state -> action-distribution mapping usable as external knowledge.
// Scripted kinds carry no parameters; LearnedInnerActor wraps a frozen actor
// network from a previous task.
struct KnowledgePolicy {
  std::string id;
  PolicyKind kind = PolicyKind::ScriptedApproach;
  MlpSpec actor_spec;        // LearnedInnerActor only
  ParamVector actor_params;  // LearnedInnerActor only
  int action_dim = 0;        // LearnedInnerActor only

  // Normalized pre-squash component distribution for the mixture.
  ActDist act_dist(std::span<const double> obs, const TaskSpec& spec) const;
  // Deterministic normalized action for greedy evaluation.
  std::vector<double> greedy_action(std::span<const double> obs,
                                    const TaskSpec& spec) const;
};

struct KnowledgeKey {
  std::vector<double> embedding;  // length d_k
  std::string owner_policy_id;
};

struct RegistrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Immutable after construction; add_knowledge returns a new value.
struct KnowledgeSet {
  std::vector<KnowledgePolicy> policies;
  std::vector<KnowledgeKey> keys;

  int size() const { return static_cast<int>(policies.size()); }
  int index_of(const std::string& id) const;  // -1 if absent
};

KnowledgeSet add_knowledge(const KnowledgeSet& set, KnowledgePolicy policy,
                           Rng& rng, int d_k = kDefaultKeyDim,
                           const std::optional<KnowledgeKey>& key = std::nullopt);

// The initial three scripted policies.
KnowledgeSet default_knowledge_set(Rng& rng, int d_k = kDefaultKeyDim);

}  // namespace surgirl
