#include "surgirl/knowledge.hpp"

#include <algorithm>
#include <cmath>

#include "surgirl/gaussian.hpp"

namespace surgirl {

namespace {

bool read3(std::span<const double> obs, int off, std::array<double, 3>& out) {
  if (off < 0) return false;
  for (int i = 0; i < 3; ++i) out[i] = obs[off + i];
  return true;
}

// Proportional step toward target, per-axis clamped to +/- a_scale.
void proportional(const std::array<double, 3>& from, const std::array<double, 3>& to,
                  double a_scale, double* out) {
  for (int i = 0; i < 3; ++i) {
    out[i] = std::clamp(kKnowGain * kKnowDt * (to[i] - from[i]), -a_scale, a_scale);
  }
}

ActDist zeros(const TaskSpec& spec) {
  ActDist d;
  d.mean.assign(spec.action_dim, 0.0);
  d.std.assign(spec.action_dim, kSigmaKnow);
  return d;
}

}  // namespace

ActDist approach_policy(std::span<const double> obs, const TaskSpec& spec) {
  ActDist d = zeros(spec);
  const ObsLayout& L = spec.layout;
  std::array<double, 3> ee, obj, goal;
  if (!read3(obs, L.ee[0], ee)) return d;
  bool grasped = L.grasp[0] >= 0 && obs[L.grasp[0]] > 0.5;
  std::array<double, 3> target;
  if (read3(obs, L.obj, obj) && !grasped) {
    target = obj;
  } else if (read3(obs, L.goal, goal)) {
    target = goal;
  } else {
    return d;
  }
  proportional(ee, target, spec.a_scale, d.mean.data());
  return d;
}

ActDist transport_policy(std::span<const double> obs, const TaskSpec& spec) {
  ActDist d = zeros(spec);
  const ObsLayout& L = spec.layout;
  std::array<double, 3> ee, goal;
  if (!read3(obs, L.goal, goal)) return d;
  for (int arm = 0; arm < spec.arms; ++arm) {
    if (L.grasp[arm] >= 0 && obs[L.grasp[arm]] > 0.5 && read3(obs, L.ee[arm], ee) &&
        arm * 3 + 3 <= spec.action_dim) {
      proportional(ee, goal, spec.a_scale, d.mean.data() + arm * 3);
    }
  }
  return d;
}

ActDist handover_policy(std::span<const double> obs, const TaskSpec& spec) {
  ActDist d = zeros(spec);
  const ObsLayout& L = spec.layout;
  std::array<double, 3> ee0, ee1, obj;
  if (spec.arms < 2 || !read3(obs, L.ee[0], ee0) || !read3(obs, L.ee[1], ee1) ||
      spec.action_dim < 6) {
    return d;  // single-arm tasks get zeros for the missing arm block
  }
  std::array<double, 3> mid;
  for (int i = 0; i < 3; ++i) mid[i] = 0.5 * (ee0[i] + ee1[i]);
  bool have_obj = read3(obs, L.obj, obj);
  bool held0 = L.grasp[0] >= 0 && obs[L.grasp[0]] > 0.5;
  bool held1 = L.grasp[1] >= 0 && obs[L.grasp[1]] > 0.5;
  // The receiving arm heads for the held object, the holder for the midpoint.
  const std::array<double, 3>& t0 = (held1 && have_obj) ? obj : mid;
  const std::array<double, 3>& t1 = (held0 && have_obj) ? obj : mid;
  proportional(ee0, t0, spec.a_scale, d.mean.data());
  proportional(ee1, t1, spec.a_scale, d.mean.data() + 3);
  return d;
}

const char* policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::ScriptedApproach: return "ScriptedApproach";
    case PolicyKind::ScriptedTransport: return "ScriptedTransport";
    case PolicyKind::ScriptedHandover: return "ScriptedHandover";
    case PolicyKind::LearnedInnerActor: return "LearnedInnerActor";
  }
  return "?";
}

PolicyKind policy_kind_from_name(const std::string& name) {
  for (int i = 0; i <= static_cast<int>(PolicyKind::LearnedInnerActor); ++i) {
    PolicyKind k = static_cast<PolicyKind>(i);
    if (name == policy_kind_name(k)) return k;
  }
  throw ConfigError("unknown policy kind: " + name);
}

ActDist KnowledgePolicy::act_dist(std::span<const double> obs,
                                  const TaskSpec& spec) const {
  if (kind == PolicyKind::LearnedInnerActor) {
    ActDist d;
    d.mean.assign(spec.action_dim, 0.0);
    d.std.assign(spec.action_dim, kSigmaKnow);
    if (static_cast<int>(obs.size()) == actor_spec.input_dim &&
        action_dim == spec.action_dim) {
      auto out = mlp_forward(actor_spec, actor_params, obs);
      for (int i = 0; i < spec.action_dim; ++i) {
        d.mean[i] = out[i];
        d.std[i] = std::exp(clamp_log_std(out[spec.action_dim + i]));
      }
    }
    return d;
  }
  ActDist phys;
  switch (kind) {
    case PolicyKind::ScriptedApproach: phys = approach_policy(obs, spec); break;
    case PolicyKind::ScriptedTransport: phys = transport_policy(obs, spec); break;
    default: phys = handover_policy(obs, spec); break;
  }
  // Scripted means are physical; the mixture works in normalized units.
  for (double& m : phys.mean) m /= spec.a_scale;
  return phys;
}

std::vector<double> KnowledgePolicy::greedy_action(std::span<const double> obs,
                                                   const TaskSpec& spec) const {
  ActDist d = act_dist(obs, spec);
  if (kind == PolicyKind::LearnedInnerActor) {
    for (double& m : d.mean) m = std::tanh(m);
  }
  for (double& m : d.mean) m = std::clamp(m, -1.0, 1.0);
  return d.mean;
}

int KnowledgeSet::index_of(const std::string& id) const {
  for (int i = 0; i < size(); ++i) {
    if (policies[i].id == id) return i;
  }
  return -1;
}

KnowledgeSet add_knowledge(const KnowledgeSet& set, KnowledgePolicy policy,
                           Rng& rng, int d_k,
                           const std::optional<KnowledgeKey>& key) {
  if (set.index_of(policy.id) >= 0) {
    throw RegistrationError("duplicate knowledge policy id: " + policy.id);
  }
  KnowledgeSet out = set;
  KnowledgeKey k;
  if (key) {
    k = *key;
  } else {
    // Same init law as network parameters: uniform +/- 1/sqrt(d_k).
    double bound = 1.0 / std::sqrt(static_cast<double>(d_k));
    k.embedding.resize(d_k);
    for (double& v : k.embedding) v = rng.uniform(-bound, bound);
  }
  k.owner_policy_id = policy.id;
  out.policies.push_back(std::move(policy));
  out.keys.push_back(std::move(k));
  return out;
}

KnowledgeSet default_knowledge_set(Rng& rng, int d_k) {
  KnowledgeSet set;
  set = add_knowledge(set, {.id = "approach", .kind = PolicyKind::ScriptedApproach},
                      rng, d_k);
  set = add_knowledge(set, {.id = "transport", .kind = PolicyKind::ScriptedTransport},
                      rng, d_k);
  set = add_knowledge(set, {.id = "handover", .kind = PolicyKind::ScriptedHandover},
                      rng, d_k);
  return set;
}

}  // namespace surgirl
