#include "surgirl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace surgirl {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'G', 'R', 'L', 'C', 'K', 'P', 'T'};

json spec_to_json(const MlpSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_dims", s.hidden_dims},
          {"output_dim", s.output_dim},
          {"activation", s.activation == Activation::ReLU ? "relu" : "tanh"}};
}

MlpSpec spec_from_json(const json& j) {
  MlpSpec s;
  s.input_dim = j.at("input_dim");
  s.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  s.output_dim = j.at("output_dim");
  s.activation = j.at("activation") == "relu" ? Activation::ReLU : Activation::Tanh;
  return s;
}

json task_to_json(const TaskSpec& t) {
  return {{"id", task_name(t.id)},
          {"obs_dim", t.obs_dim},
          {"action_dim", t.action_dim},
          {"arms", t.arms},
          {"horizon", t.horizon},
          {"grasp_threshold", t.grasp_threshold},
          {"a_scale", t.a_scale},
          {"ang_scale", t.ang_scale},
          {"c_og", t.coeffs.c_og},
          {"c_ro", t.coeffs.c_ro},
          {"c_rg", t.coeffs.c_rg},
          {"p", t.coeffs.p}};
}

TaskSpec task_from_json(const json& j) {
  TaskSpec t = default_task_spec(task_from_name(j.at("id")));
  t.obs_dim = j.at("obs_dim");
  t.action_dim = j.at("action_dim");
  t.arms = j.at("arms");
  t.horizon = j.at("horizon");
  t.grasp_threshold = j.at("grasp_threshold");
  t.a_scale = j.at("a_scale");
  t.ang_scale = j.at("ang_scale");
  t.coeffs = {j.at("c_og"), j.at("c_ro"), j.at("c_rg"), j.at("p")};
  return t;
}

json world_to_json(const WorldState& w) {
  return {{"ee0", w.ee[0]},
          {"ee1", w.ee[1]},
          {"grasp0", w.grasp[0]},
          {"grasp1", w.grasp[1]},
          {"object_pos", w.object_pos},
          {"goal_pos", w.goal_pos},
          {"has_object", w.has_object},
          {"cam_yaw", w.cam_yaw},
          {"cam_pitch", w.cam_pitch},
          {"yaw", w.yaw},
          {"yaw_goal", w.yaw_goal},
          {"target_az", w.target_az},
          {"target_el", w.target_el},
          {"path_phase", w.path_phase},
          {"on_target_streak", w.on_target_streak},
          {"step", w.step}};
}

WorldState world_from_json(const json& j) {
  WorldState w;
  w.ee[0] = j.at("ee0");
  w.ee[1] = j.at("ee1");
  w.grasp[0] = j.at("grasp0");
  w.grasp[1] = j.at("grasp1");
  w.object_pos = j.at("object_pos");
  w.goal_pos = j.at("goal_pos");
  w.has_object = j.at("has_object");
  w.cam_yaw = j.at("cam_yaw");
  w.cam_pitch = j.at("cam_pitch");
  w.yaw = j.at("yaw");
  w.yaw_goal = j.at("yaw_goal");
  w.target_az = j.at("target_az");
  w.target_el = j.at("target_el");
  w.path_phase = j.at("path_phase");
  w.on_target_streak = j.at("on_target_streak");
  w.step = j.at("step");
  return w;
}

json adam_meta(const AdamState& a) {
  return {{"lr", a.lr}, {"step", a.step}};
}

void adam_from_meta(AdamState& a, const json& j) {
  a.lr = j.at("lr");
  a.step = j.at("step");
}

// Ordered list of (name, pointer) parameter blocks for a checkpoint.
struct BlockList {
  std::vector<std::pair<std::string, const std::vector<double>*>> blocks;
  std::vector<std::vector<double>> owned;  // flattened trainer blocks

  void add(const std::string& name, const std::vector<double>* v) {
    blocks.emplace_back(name, v);
  }
  void add_owned(const std::string& name, std::vector<double> v) {
    owned.push_back(std::move(v));
    blocks.emplace_back(name, &owned.back());
  }
};

BlockList collect_blocks(const Checkpoint& c) {
  BlockList bl;
  bl.owned.reserve(64);  // pointers into owned must stay stable
  bl.add("query_params", &c.policy.query_params);
  bl.add("actor_params", &c.policy.actor_params);
  bl.add("inner_key", &c.policy.inner_key);
  for (std::size_t i = 0; i < c.policy.knowledge.policies.size(); ++i) {
    bl.add("key_" + std::to_string(i), &c.policy.knowledge.keys[i].embedding);
    if (c.policy.knowledge.policies[i].kind == PolicyKind::LearnedInnerActor) {
      bl.add("know_actor_" + std::to_string(i),
             &c.policy.knowledge.policies[i].actor_params);
    }
  }
  bl.add("critic_q1", &c.critics.q1);
  bl.add("critic_q2", &c.critics.q2);
  bl.add("critic_t1", &c.critics.target1);
  bl.add("critic_t2", &c.critics.target2);
  if (c.has_trainer_state) {
    bl.add("opt_query_m", &c.query_opt.m);
    bl.add("opt_query_v", &c.query_opt.v);
    bl.add("opt_actor_m", &c.actor_opt.m);
    bl.add("opt_actor_v", &c.actor_opt.v);
    bl.add("opt_keys_m", &c.keys_opt.m);
    bl.add("opt_keys_v", &c.keys_opt.v);
    bl.add("opt_c1_m", &c.critics.opt1.m);
    bl.add("opt_c1_v", &c.critics.opt1.v);
    bl.add("opt_c2_m", &c.critics.opt2.m);
    bl.add("opt_c2_v", &c.critics.opt2.v);
    bl.add("opt_alpha_m", &c.coeffs.opt.m);
    bl.add("opt_alpha_v", &c.coeffs.opt.v);
    std::vector<double> replay_flat;
    for (const Transition& t : c.replay) {
      replay_flat.insert(replay_flat.end(), t.state.begin(), t.state.end());
      replay_flat.insert(replay_flat.end(), t.action.begin(), t.action.end());
      replay_flat.push_back(t.reward);
      replay_flat.insert(replay_flat.end(), t.next_state.begin(), t.next_state.end());
      replay_flat.push_back(t.done ? 1.0 : 0.0);
    }
    bl.add_owned("replay", std::move(replay_flat));
  }
  return bl;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t hash_blocks(const BlockList& bl) {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [name, vec] : bl.blocks) {
    h = fnv1a(h, vec->data(), vec->size() * sizeof(double));
  }
  return h;
}

}  // namespace

std::uint64_t checkpoint_param_hash(const Checkpoint& ckpt) {
  return hash_blocks(collect_blocks(ckpt));
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  BlockList bl = collect_blocks(c);

  json manifest;
  manifest["version"] = c.version;
  manifest["global_step"] = c.global_step;
  manifest["task"] = task_to_json(c.policy.task);
  manifest["policy"] = {{"d_k", c.policy.cfg.d_k},
                        {"temperature", c.policy.cfg.temperature},
                        {"query_spec", spec_to_json(c.policy.query_spec)},
                        {"actor_spec", spec_to_json(c.policy.actor_spec)}};
  json know = json::array();
  for (const auto& kp : c.policy.knowledge.policies) {
    json e = {{"id", kp.id}, {"kind", policy_kind_name(kp.kind)}};
    if (kp.kind == PolicyKind::LearnedInnerActor) {
      e["actor_spec"] = spec_to_json(kp.actor_spec);
      e["action_dim"] = kp.action_dim;
    }
    know.push_back(e);
  }
  manifest["knowledge"] = know;
  manifest["critics"] = {{"spec", spec_to_json(c.critics.spec)},
                         {"gamma", c.critics.gamma},
                         {"tau", c.critics.tau},
                         {"opt1", adam_meta(c.critics.opt1)},
                         {"opt2", adam_meta(c.critics.opt2)}};
  manifest["coeffs"] = {{"auto_tune", c.coeffs.auto_tune},
                        {"log_alpha", c.coeffs.log_alpha},
                        {"fixed_alpha", c.coeffs.fixed_alpha},
                        {"target_entropy", c.coeffs.target_entropy},
                        {"beta_d_e", c.coeffs.beta.d_e},
                        {"beta_c_e", c.coeffs.beta.c_e},
                        {"opt", adam_meta(c.coeffs.opt)}};
  manifest["rng"] = c.rng_states;
  if (c.has_trainer_state) {
    manifest["trainer"] = {{"replay_count", c.replay.size()},
                           {"replay_cursor", c.replay_cursor},
                           {"env_world", world_to_json(c.env_world)},
                           {"episode_return", c.episode_return},
                           {"last_episode_return", c.last_episode_return},
                           {"eval_count", c.eval_count},
                           {"opt_query", adam_meta(c.query_opt)},
                           {"opt_actor", adam_meta(c.actor_opt)},
                           {"opt_keys", adam_meta(c.keys_opt)}};
  }
  json blocks = json::array();
  for (const auto& [name, vec] : bl.blocks) {
    blocks.push_back({{"name", name}, {"count", vec->size()}});
  }
  manifest["blocks"] = blocks;
  manifest["hash"] = hash_hex(hash_blocks(bl));

  std::string mtext = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  std::uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& [name, vec] : bl.blocks) {
    out.write(reinterpret_cast<const char*>(vec->data()),
              static_cast<std::streamsize>(vec->size() * sizeof(double)));
  }
  out.flush();
  if (!out) throw CheckpointError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file: " + path);
  }
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  if (!in) throw TruncationError("truncated checkpoint header: " + path);
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw TruncationError("truncated checkpoint manifest: " + path);
  json manifest = json::parse(mtext, nullptr, false);
  if (manifest.is_discarded()) throw CheckpointError("corrupt manifest: " + path);
  if (manifest.at("version") != 1) {
    throw VersionError("unsupported checkpoint version in " + path);
  }

  Checkpoint c;
  c.version = manifest.at("version");
  c.global_step = manifest.at("global_step");
  c.policy.task = task_from_json(manifest.at("task"));
  c.policy.cfg.d_k = manifest.at("policy").at("d_k");
  c.policy.cfg.temperature = manifest.at("policy").at("temperature");
  c.policy.query_spec = spec_from_json(manifest.at("policy").at("query_spec"));
  c.policy.actor_spec = spec_from_json(manifest.at("policy").at("actor_spec"));
  for (const auto& e : manifest.at("knowledge")) {
    KnowledgePolicy kp;
    kp.id = e.at("id");
    kp.kind = policy_kind_from_name(e.at("kind"));
    if (kp.kind == PolicyKind::LearnedInnerActor) {
      kp.actor_spec = spec_from_json(e.at("actor_spec"));
      kp.action_dim = e.at("action_dim");
    }
    c.policy.knowledge.policies.push_back(std::move(kp));
    c.policy.knowledge.keys.push_back(
        {.embedding = {}, .owner_policy_id = c.policy.knowledge.policies.back().id});
  }
  c.critics.spec = spec_from_json(manifest.at("critics").at("spec"));
  c.critics.gamma = manifest.at("critics").at("gamma");
  c.critics.tau = manifest.at("critics").at("tau");
  adam_from_meta(c.critics.opt1, manifest.at("critics").at("opt1"));
  adam_from_meta(c.critics.opt2, manifest.at("critics").at("opt2"));
  c.coeffs.auto_tune = manifest.at("coeffs").at("auto_tune");
  c.coeffs.log_alpha = manifest.at("coeffs").at("log_alpha");
  c.coeffs.fixed_alpha = manifest.at("coeffs").at("fixed_alpha");
  c.coeffs.target_entropy = manifest.at("coeffs").at("target_entropy");
  c.coeffs.beta.d_e = manifest.at("coeffs").at("beta_d_e");
  c.coeffs.beta.c_e = manifest.at("coeffs").at("beta_c_e");
  adam_from_meta(c.coeffs.opt, manifest.at("coeffs").at("opt"));
  c.rng_states = manifest.at("rng").get<std::map<std::string, std::string>>();
  c.has_trainer_state = manifest.contains("trainer");
  std::size_t replay_count = 0;
  if (c.has_trainer_state) {
    const json& t = manifest.at("trainer");
    replay_count = t.at("replay_count");
    c.replay_cursor = t.at("replay_cursor");
    c.env_world = world_from_json(t.at("env_world"));
    c.episode_return = t.at("episode_return");
    c.last_episode_return = t.at("last_episode_return");
    c.eval_count = t.at("eval_count");
    adam_from_meta(c.query_opt, t.at("opt_query"));
    adam_from_meta(c.actor_opt, t.at("opt_actor"));
    adam_from_meta(c.keys_opt, t.at("opt_keys"));
  }

  // Read blocks in manifest order.
  std::vector<std::pair<std::string, std::vector<double>>> raw;
  for (const auto& b : manifest.at("blocks")) {
    std::vector<double> v(b.at("count").get<std::size_t>());
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) {
      throw TruncationError("truncated block '" + b.at("name").get<std::string>() +
                            "' in " + path);
    }
    raw.emplace_back(b.at("name"), std::move(v));
  }

  auto take = [&raw, &path](const std::string& name) -> std::vector<double> {
    for (auto& [n, v] : raw) {
      if (n == name) return std::move(v);
    }
    throw CheckpointError("missing block '" + name + "' in " + path);
  };

  c.policy.query_params = take("query_params");
  c.policy.actor_params = take("actor_params");
  c.policy.inner_key = take("inner_key");
  for (std::size_t i = 0; i < c.policy.knowledge.policies.size(); ++i) {
    c.policy.knowledge.keys[i].embedding = take("key_" + std::to_string(i));
    if (c.policy.knowledge.policies[i].kind == PolicyKind::LearnedInnerActor) {
      c.policy.knowledge.policies[i].actor_params =
          take("know_actor_" + std::to_string(i));
    }
  }
  c.critics.q1 = take("critic_q1");
  c.critics.q2 = take("critic_q2");
  c.critics.target1 = take("critic_t1");
  c.critics.target2 = take("critic_t2");
  if (c.has_trainer_state) {
    c.query_opt.m = take("opt_query_m");
    c.query_opt.v = take("opt_query_v");
    c.actor_opt.m = take("opt_actor_m");
    c.actor_opt.v = take("opt_actor_v");
    c.keys_opt.m = take("opt_keys_m");
    c.keys_opt.v = take("opt_keys_v");
    c.critics.opt1.m = take("opt_c1_m");
    c.critics.opt1.v = take("opt_c1_v");
    c.critics.opt2.m = take("opt_c2_m");
    c.critics.opt2.v = take("opt_c2_v");
    c.coeffs.opt.m = take("opt_alpha_m");
    c.coeffs.opt.v = take("opt_alpha_v");
    std::vector<double> flat = take("replay");
    int sd = c.policy.task.obs_dim, ad = c.policy.task.action_dim;
    std::size_t stride = static_cast<std::size_t>(2 * sd + ad + 2);
    if (flat.size() != replay_count * stride) {
      throw CheckpointError("replay block size mismatch in " + path);
    }
    for (std::size_t i = 0; i < replay_count; ++i) {
      const double* p = flat.data() + i * stride;
      Transition tr;
      tr.state.assign(p, p + sd);
      tr.action.assign(p + sd, p + sd + ad);
      tr.reward = p[sd + ad];
      tr.next_state.assign(p + sd + ad + 1, p + sd + ad + 1 + sd);
      tr.done = p[2 * sd + ad + 1] != 0.0;
      c.replay.push_back(std::move(tr));
    }
  }

  std::uint64_t h = checkpoint_param_hash(c);
  if (hash_hex(h) != manifest.at("hash").get<std::string>()) {
    throw HashMismatchError("checkpoint hash mismatch: " + path);
  }
  return c;
}

Checkpoint snapshot(Learner& learner, const Env* env, bool with_trainer_state) {
  Checkpoint c;
  Learner& l = learner;
  c.global_step = learner.global_step();
  c.policy = learner.policy();
  c.critics = l.critics();
  c.coeffs = l.coeffs();
  c.rng_states["policy"] = l.policy_rng().serialize();
  c.rng_states["learner"] = l.learner_rng().serialize();
  if (env) c.rng_states["env"] = env->rng_state();
  if (with_trainer_state) {
    c.has_trainer_state = true;
    c.query_opt = l.query_opt();
    c.actor_opt = l.actor_opt();
    c.keys_opt = l.keys_opt();
    c.replay = l.buffer().raw();
    c.replay_cursor = l.buffer().cursor();
    if (env) c.env_world = env->world();
    c.episode_return = learner.episode_return();
    c.last_episode_return = learner.last_episode_return();
    c.eval_count = learner.eval_count();
  } else {
    // Hash and round-trip cover optimizer vectors only when present.
    c.critics.opt1.m.clear();
    c.critics.opt1.v.clear();
    c.critics.opt2.m.clear();
    c.critics.opt2.v.clear();
    c.coeffs.opt.m.clear();
    c.coeffs.opt.v.clear();
  }
  return c;
}

Learner restore_learner(const Checkpoint& ckpt, const LearnerConfig& cfg,
                        std::uint64_t seed, Env* env) {
  Learner l(ckpt.policy, cfg, seed);
  l.critics() = ckpt.critics;
  l.coeffs() = ckpt.coeffs;
  l.set_global_step(ckpt.global_step);
  if (auto it = ckpt.rng_states.find("policy"); it != ckpt.rng_states.end()) {
    l.policy_rng().deserialize(it->second);
  }
  if (auto it = ckpt.rng_states.find("learner"); it != ckpt.rng_states.end()) {
    l.learner_rng().deserialize(it->second);
  }
  if (ckpt.has_trainer_state) {
    l.query_opt() = ckpt.query_opt;
    l.actor_opt() = ckpt.actor_opt;
    l.keys_opt() = ckpt.keys_opt;
    l.buffer().restore(ckpt.replay, ckpt.replay_cursor);
    l.set_episode_return(ckpt.episode_return);
    l.set_last_episode_return(ckpt.last_episode_return);
    l.set_eval_count(ckpt.eval_count);
    if (env) {
      env->set_world(ckpt.env_world);
      if (auto it = ckpt.rng_states.find("env"); it != ckpt.rng_states.end()) {
        env->set_rng_state(it->second);
      }
    }
  }
  return l;
}

}  // namespace surgirl
