#include "surgirl/incremental.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "surgirl/metrics.hpp"

namespace surgirl {

using nlohmann::json;

const char* pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::KeysOnly: return "KeysOnly";
    case Pipeline::KeysAndQuery: return "KeysAndQuery";
    case Pipeline::All: return "All";
  }
  return "?";
}

Pipeline pipeline_from_name(const std::string& name) {
  if (name == "KeysOnly") return Pipeline::KeysOnly;
  if (name == "KeysAndQuery") return Pipeline::KeysAndQuery;
  if (name == "All") return Pipeline::All;
  throw ConfigError("unknown pipeline: " + name);
}

KnowledgeSet expand_knowledge(const KnowledgeSet& set, const Checkpoint& source,
                              int target_action_dim, const std::string& id) {
  if (source.policy.task.action_dim != target_action_dim) {
    throw ExpansionError("expand_knowledge: source action_dim " +
                         std::to_string(source.policy.task.action_dim) +
                         " != target action_dim " +
                         std::to_string(target_action_dim));
  }
  KnowledgePolicy kp;
  kp.id = id.empty() ? std::string("learned_") + task_name(source.policy.task.id) : id;
  kp.kind = PolicyKind::LearnedInnerActor;
  kp.actor_spec = source.policy.actor_spec;
  kp.actor_params = source.policy.actor_params;
  kp.action_dim = source.policy.task.action_dim;
  if (set.index_of(kp.id) >= 0) {
    throw RegistrationError("duplicate knowledge policy id: " + kp.id);
  }
  KnowledgeSet out = set;
  KnowledgeKey key;
  key.embedding = source.policy.inner_key;  // trained key travels with the skill
  key.owner_policy_id = kp.id;
  out.policies.push_back(std::move(kp));
  out.keys.push_back(std::move(key));
  return out;
}

KianPolicy transfer(const Checkpoint& source, const TaskSpec& target,
                    const TransferPlan& plan, const NetworkSizes& nets,
                    Rng& init_rng) {
  if (plan.key_selection.empty()) {
    throw TransferError("transfer: key_selection must not be empty");
  }
  const KianPolicy& src = source.policy;
  bool reuse_query = plan.pipeline != Pipeline::KeysOnly;
  bool reuse_actor = plan.pipeline == Pipeline::All;
  if (reuse_query && src.task.obs_dim != target.obs_dim) {
    throw TransferError("transfer: query requires equal obs_dim (source " +
                        std::to_string(src.task.obs_dim) + ", target " +
                        std::to_string(target.obs_dim) + ")");
  }
  if (reuse_actor && src.task.action_dim != target.action_dim) {
    throw TransferError("transfer: inner_actor requires equal action_dim (source " +
                        std::to_string(src.task.action_dim) + ", target " +
                        std::to_string(target.action_dim) + ")");
  }

  KnowledgeSet know = default_knowledge_set(init_rng, nets.d_k);
  // Previously accumulated skills travel along when compatible.
  for (std::size_t i = 0; i < src.knowledge.policies.size(); ++i) {
    const KnowledgePolicy& kp = src.knowledge.policies[i];
    if (kp.kind == PolicyKind::LearnedInnerActor &&
        kp.action_dim == target.action_dim) {
      know = add_knowledge(know, kp, init_rng, nets.d_k, src.knowledge.keys[i]);
    }
  }

  KianPolicy p = make_kian_policy(target, std::move(know), init_rng,
                                  nets.actor_hidden, nets.query_hidden, nets.d_k);
  if (reuse_query) {
    p.query_spec = src.query_spec;
    p.query_params = src.query_params;
  }
  if (reuse_actor) {
    p.actor_spec = src.actor_spec;
    p.actor_params = src.actor_params;
  }

  for (const std::string& id : plan.key_selection) {
    const std::vector<double>* src_key = nullptr;
    if (id == "inner") {
      src_key = &src.inner_key;
    } else {
      int si = src.knowledge.index_of(id);
      if (si >= 0) src_key = &src.knowledge.keys[si].embedding;
    }
    if (!src_key) throw TransferError("transfer: key '" + id + "' not in source");
    if (id == "inner") {
      p.inner_key = *src_key;
    } else {
      int ti = p.knowledge.index_of(id);
      if (ti < 0) throw TransferError("transfer: key '" + id + "' not in target set");
      p.knowledge.keys[ti].embedding = *src_key;
    }
  }

  if (plan.expand_with_inner) {
    p.knowledge = expand_knowledge(p.knowledge, source, target.action_dim);
  }
  return p;
}

void save_lineage(const LineageRecord& rec, const std::string& path) {
  json j = json::array();
  for (const auto& e : rec.entries) {
    j.push_back({{"task", e.task},
                 {"checkpoint", e.checkpoint_path},
                 {"hash", e.checkpoint_hash},
                 {"plan", e.plan}});
  }
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
}

namespace {

std::string hash_hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

LineageRecord run_group(const GroupConfig& cfg, std::vector<TrainResult>* results) {
  if (cfg.stages.empty()) throw ConfigError("run_group: no stages");
  std::filesystem::create_directories(cfg.out_dir);
  LineageRecord lineage;
  Checkpoint prev;
  bool have_prev = false;

  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const GroupStage& stage = cfg.stages[i];
    std::uint64_t stage_seed = Rng::mix(cfg.seed, "stage-" + std::to_string(i));
    Rng init_rng = Rng::substream(stage_seed, "init");

    KianPolicy policy;
    std::string plan_desc = "scratch";
    if (!have_prev) {
      policy = make_kian_policy(stage.task, default_knowledge_set(init_rng, cfg.nets.d_k),
                                init_rng, cfg.nets.actor_hidden, cfg.nets.query_hidden,
                                cfg.nets.d_k);
    } else {
      policy = transfer(prev, stage.task, stage.plan, cfg.nets, init_rng);
      plan_desc = pipeline_name(stage.plan.pipeline);
    }

    Learner learner(std::move(policy), cfg.learner, stage_seed);
    Env env(stage.task, stage_seed);
    std::string base = cfg.out_dir + "/" + std::to_string(i) + "_" +
                       task_name(stage.task.id);
    MetricsCsvWriter csv(base + "_metrics.csv", learner.policy().n_external());

    TrainResult tr;
    try {
      tr = learner.train(env, cfg.learner.total_steps,
                         [&csv](const MetricsRow& r) { csv.write(r); },
                         cfg.stop_at_success);
    } catch (const std::exception& e) {
      save_lineage(lineage, cfg.out_dir + "/lineage.json");
      throw TransferError("stage " + std::to_string(i) + " (" +
                          task_name(stage.task.id) + "): " + e.what());
    } catch (...) {
      save_lineage(lineage, cfg.out_dir + "/lineage.json");
      throw;
    }
    if (results) results->push_back(tr);

    Checkpoint ckpt = snapshot(learner, &env, /*with_trainer_state=*/false);
    std::string ckpt_path = base + ".ckpt";
    save_checkpoint(ckpt, ckpt_path);
    lineage.entries.push_back({task_name(stage.task.id), ckpt_path,
                               hash_hex64(checkpoint_param_hash(ckpt)), plan_desc});
    prev = std::move(ckpt);
    have_prev = true;
  }
  save_lineage(lineage, cfg.out_dir + "/lineage.json");
  return lineage;
}

}  // namespace surgirl
