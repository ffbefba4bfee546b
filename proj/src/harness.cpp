#include "surgirl/harness.hpp"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "surgirl/metrics.hpp"

namespace surgirl {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

FlatConfig FlatConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

FlatConfig FlatConfig::parse_text(const std::string& text, const std::string& origin) {
  FlatConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected key = value, got '" + t + "'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (cfg.values_.count(key)) {
      throw ConfigError(origin + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

bool FlatConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string* FlatConfig::lookup(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  consumed_.insert(key);
  return &it->second;
}

std::string FlatConfig::get_string(const std::string& key, const std::string& def) {
  const std::string* v = lookup(key);
  return v ? *v : def;
}

std::string FlatConfig::require_string(const std::string& key) {
  const std::string* v = lookup(key);
  if (!v) throw ConfigError(origin_ + ": missing required key '" + key + "'");
  return *v;
}

double FlatConfig::get_double(const std::string& key, double def) {
  const std::string* v = lookup(key);
  if (!v) return def;
  try {
    std::size_t pos = 0;
    double d = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "': not a number: '" + *v + "'");
  }
}

long FlatConfig::get_long(const std::string& key, long def) {
  const std::string* v = lookup(key);
  if (!v) return def;
  try {
    std::size_t pos = 0;
    long n = std::stol(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing characters");
    return n;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "': not an integer: '" + *v + "'");
  }
}

std::uint64_t FlatConfig::get_u64(const std::string& key, std::uint64_t def) {
  const std::string* v = lookup(key);
  if (!v) return def;
  try {
    std::size_t pos = 0;
    unsigned long long n = std::stoull(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing characters");
    return n;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "': not an unsigned integer: '" + *v + "'");
  }
}

bool FlatConfig::get_bool(const std::string& key, bool def) {
  const std::string* v = lookup(key);
  if (!v) return def;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw ConfigError(origin_ + ": key '" + key + "': expected true/false, got '" + *v + "'");
}

std::vector<std::string> FlatConfig::get_list(const std::string& key) {
  const std::string* v = lookup(key);
  std::vector<std::string> out;
  if (!v) return out;
  std::istringstream in(*v);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> FlatConfig::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (k.rfind(prefix, 0) == 0) out.push_back(k);
  }
  return out;
}

void FlatConfig::finish() const {
  for (const auto& [k, v] : values_) {
    if (!consumed_.count(k)) {
      throw ConfigError(origin_ + ": unknown key '" + k + "'");
    }
  }
}

namespace {

void check_range(const std::string& key, double v, double lo, double hi) {
  if (!(v >= lo && v <= hi)) {
    throw ConfigError("key '" + key + "': value " + std::to_string(v) +
                      " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

void parse_learner(FlatConfig& cfg, LearnerConfig& lc) {
  lc.gamma = cfg.get_double("learner.gamma", lc.gamma);
  check_range("learner.gamma", lc.gamma, 0.0, 1.0);
  lc.tau = cfg.get_double("learner.tau", lc.tau);
  if (!(lc.tau > 0.0 && lc.tau <= 1.0)) {
    throw ConfigError("key 'learner.tau': value must lie in (0, 1]");
  }
  lc.batch = static_cast<int>(cfg.get_long("learner.batch", lc.batch));
  if (lc.batch < 1) throw ConfigError("key 'learner.batch': must be >= 1");
  long buffer = cfg.get_long("learner.buffer", static_cast<long>(lc.buffer_capacity));
  if (buffer < lc.batch) throw ConfigError("key 'learner.buffer': must be >= batch");
  lc.buffer_capacity = static_cast<std::size_t>(buffer);
  lc.start_steps = static_cast<int>(cfg.get_long("learner.start_steps", lc.start_steps));
  if (lc.start_steps < 0) throw ConfigError("key 'learner.start_steps': must be >= 0");
  lc.eval_interval = static_cast<int>(cfg.get_long("learner.eval_interval", lc.eval_interval));
  if (lc.eval_interval < 1) throw ConfigError("key 'learner.eval_interval': must be >= 1");
  lc.eval_episodes = static_cast<int>(cfg.get_long("learner.eval_episodes", lc.eval_episodes));
  if (lc.eval_episodes < 1) throw ConfigError("key 'learner.eval_episodes': must be >= 1");
  lc.actor_lr = cfg.get_double("learner.actor_lr", lc.actor_lr);
  lc.critic_lr = cfg.get_double("learner.critic_lr", lc.critic_lr);
  lc.alpha_lr = cfg.get_double("learner.alpha_lr", lc.alpha_lr);
  for (auto [k, v] : {std::pair<const char*, double>{"learner.actor_lr", lc.actor_lr},
                      {"learner.critic_lr", lc.critic_lr},
                      {"learner.alpha_lr", lc.alpha_lr}}) {
    if (!(v > 0.0 && v <= 1.0)) {
      throw ConfigError(std::string("key '") + k + "': must lie in (0, 1]");
    }
  }
  lc.critic_hidden = static_cast<int>(cfg.get_long("learner.critic_hidden", lc.critic_hidden));
  if (lc.critic_hidden < 1) throw ConfigError("key 'learner.critic_hidden': must be >= 1");
  lc.updates_per_step = static_cast<int>(cfg.get_long("learner.updates_per_step", lc.updates_per_step));
  if (lc.updates_per_step < 0) throw ConfigError("key 'learner.updates_per_step': must be >= 0");
  lc.total_steps = cfg.get_long("total_steps", lc.total_steps);
  if (lc.total_steps < 0) throw ConfigError("key 'total_steps': must be >= 0");

  std::string alpha_mode = cfg.get_string("alpha.mode", "auto");
  if (alpha_mode == "auto") {
    lc.alpha_auto = true;
    if (cfg.has("alpha.value")) {
      throw ConfigError("key 'alpha.value': set alpha.mode = fixed to use a fixed value");
    }
  } else if (alpha_mode == "fixed") {
    lc.alpha_auto = false;
    lc.alpha_value = cfg.get_double("alpha.value", lc.alpha_value);
    bool ok = false;
    for (double allowed : {1e-1, 1e-2, 1e-3, 1e-5}) {
      if (lc.alpha_value == allowed) ok = true;
    }
    if (!ok) {
      throw ConfigError("key 'alpha.value': must be one of 1e-1, 1e-2, 1e-3, 1e-5");
    }
  } else {
    throw ConfigError("key 'alpha.mode': expected auto or fixed, got '" + alpha_mode + "'");
  }

  lc.beta.d_e = cfg.get_double("beta.d_e", lc.beta.d_e);
  if (lc.beta.d_e < 0.0) throw ConfigError("key 'beta.d_e': must be >= 0");
  lc.beta.c_e = cfg.get_double("beta.c_e", lc.beta.c_e);
  bool beta_override = cfg.get_bool("beta.allow_override", false);
  if (!beta_override && lc.beta.c_e != 0.0 && lc.beta.c_e != 2e-4) {
    throw ConfigError("key 'beta.c_e': must be 0 or 2e-4 (set beta.allow_override = true to widen)");
  }
  if (lc.beta.c_e < 0.0) throw ConfigError("key 'beta.c_e': must be >= 0");
}

void parse_nets(FlatConfig& cfg, NetworkSizes& nets) {
  nets.actor_hidden = static_cast<int>(cfg.get_long("net.actor_hidden", nets.actor_hidden));
  nets.query_hidden = static_cast<int>(cfg.get_long("net.query_hidden", nets.query_hidden));
  nets.d_k = static_cast<int>(cfg.get_long("net.d_k", nets.d_k));
  if (nets.actor_hidden < 1) throw ConfigError("key 'net.actor_hidden': must be >= 1");
  if (nets.query_hidden < 1) throw ConfigError("key 'net.query_hidden': must be >= 1");
  if (nets.d_k < 1) throw ConfigError("key 'net.d_k': must be >= 1");
}

TaskSpec parse_task(FlatConfig& cfg, const std::string& prefix) {
  TaskSpec spec = default_task_spec(task_from_name(cfg.require_string(prefix + "task")));
  spec.horizon = static_cast<int>(cfg.get_long(prefix + "task.horizon", spec.horizon));
  spec.grasp_threshold = cfg.get_double(prefix + "task.grasp_threshold", spec.grasp_threshold);
  spec.coeffs.c_og = cfg.get_double(prefix + "task.c_og", spec.coeffs.c_og);
  spec.coeffs.c_ro = cfg.get_double(prefix + "task.c_ro", spec.coeffs.c_ro);
  spec.coeffs.c_rg = cfg.get_double(prefix + "task.c_rg", spec.coeffs.c_rg);
  spec.coeffs.p = cfg.get_double(prefix + "task.p", spec.coeffs.p);
  spec.validate();
  return spec;
}

RunConfig run_config_from(FlatConfig cfg) {
  RunConfig rc;
  rc.task = parse_task(cfg, "");
  parse_learner(cfg, rc.learner);
  parse_nets(cfg, rc.nets);
  rc.seed = cfg.get_u64("seed", 0);
  rc.out_dir = cfg.get_string("out_dir", "run");
  rc.checkpoint_interval = cfg.get_long("checkpoint_interval", 0);
  if (rc.checkpoint_interval < 0) {
    throw ConfigError("key 'checkpoint_interval': must be >= 0");
  }
  rc.dump_trajectory = cfg.get_bool("dump_trajectory", false);
  rc.stop_at_success = cfg.get_double("stop_at_success", -1.0);
  if (rc.stop_at_success > 1.0) {
    throw ConfigError("key 'stop_at_success': must be <= 1");
  }
  cfg.finish();
  return rc;
}

GroupConfig group_config_from(FlatConfig cfg) {
  GroupConfig gc;
  parse_learner(cfg, gc.learner);
  parse_nets(cfg, gc.nets);
  gc.seed = cfg.get_u64("seed", 0);
  gc.out_dir = cfg.get_string("out_dir", "group");
  gc.stop_at_success = cfg.get_double("stop_at_success", -1.0);

  for (int i = 0;; ++i) {
    std::string prefix = "stage." + std::to_string(i) + ".";
    if (cfg.keys_with_prefix(prefix).empty()) break;
    GroupStage stage;
    stage.task = parse_task(cfg, prefix);
    if (i > 0) {
      stage.plan.pipeline = pipeline_from_name(cfg.require_string(prefix + "pipeline"));
      stage.plan.key_selection = cfg.get_list(prefix + "keys");
      if (stage.plan.key_selection.empty()) {
        throw ConfigError("key '" + prefix + "keys': at least one key id required");
      }
      stage.plan.expand_with_inner = cfg.get_bool(prefix + "expand_with_inner", false);
    }
    gc.stages.push_back(std::move(stage));
  }
  if (gc.stages.empty()) throw ConfigError("group config: no stage.0.task found");
  cfg.finish();

  // Reject impossible pipeline/dimension pairings before anything trains.
  for (std::size_t i = 1; i < gc.stages.size(); ++i) {
    const TaskSpec& prev = gc.stages[i - 1].task;
    const TaskSpec& cur = gc.stages[i].task;
    const TransferPlan& plan = gc.stages[i].plan;
    std::string where = "stage." + std::to_string(i);
    if (plan.pipeline != Pipeline::KeysOnly && prev.obs_dim != cur.obs_dim) {
      throw ConfigError(where + ": pipeline " + pipeline_name(plan.pipeline) +
                        " needs equal obs_dim (" + std::to_string(prev.obs_dim) +
                        " vs " + std::to_string(cur.obs_dim) + ")");
    }
    if (plan.pipeline == Pipeline::All && prev.action_dim != cur.action_dim) {
      throw ConfigError(where + ": pipeline All needs equal action_dim (" +
                        std::to_string(prev.action_dim) + " vs " +
                        std::to_string(cur.action_dim) + ")");
    }
    if (plan.expand_with_inner && prev.action_dim != cur.action_dim) {
      throw ConfigError(where + ": expand_with_inner needs equal action_dim");
    }
  }
  return gc;
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  return run_config_from(FlatConfig::parse_file(path));
}

RunConfig run_config_from_text(const std::string& text) {
  return run_config_from(FlatConfig::parse_text(text));
}

GroupConfig parse_group_config(const std::string& path) {
  return group_config_from(FlatConfig::parse_file(path));
}

GroupConfig group_config_from_text(const std::string& text) {
  return group_config_from(FlatConfig::parse_text(text));
}

std::string resolve_out_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_absolute()) return dir;
  const char* root = std::getenv("SURGIRL_OUT_ROOT");
  if (!root || !*root) return dir;
  return (std::filesystem::path(root) / p).string();
}

int cli_train(const std::string& config_path) {
  RunConfig rc;
  try {
    rc = parse_run_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    std::string out_dir = resolve_out_dir(rc.out_dir);
    std::filesystem::create_directories(out_dir);

    Rng init_rng = Rng::substream(rc.seed, "init");
    KianPolicy policy = make_kian_policy(
        rc.task, default_knowledge_set(init_rng, rc.nets.d_k), init_rng,
        rc.nets.actor_hidden, rc.nets.query_hidden, rc.nets.d_k);
    Learner learner(std::move(policy), rc.learner, rc.seed);
    Env env(rc.task, rc.seed);

    MetricsCsvWriter csv(out_dir + "/metrics.csv", learner.policy().n_external());
    std::ofstream traj;
    if (rc.dump_trajectory) {
      traj.open(out_dir + "/trajectory.csv", std::ios::trunc);
      traj << "step";
      for (int i = 0; i < rc.task.obs_dim; ++i) traj << ",s" << i;
      for (int i = 0; i < rc.task.action_dim; ++i) traj << ",a" << i;
      traj << ",reward\n";
      traj.flush();
    }
    StepSink step_sink;
    if (rc.dump_trajectory) {
      step_sink = [&traj](long step, const std::vector<double>& s,
                          const std::vector<double>& a, double r) {
        std::ostringstream line;
        line.precision(17);
        line << step;
        for (double v : s) line << ',' << v;
        for (double v : a) line << ',' << v;
        line << ',' << r << '\n';
        traj << line.str();
        traj.flush();
      };
    }
    MetricsSink sink = [&csv](const MetricsRow& r) { csv.write(r); };

    long remaining = rc.learner.total_steps;
    bool stopped = false;
    while (remaining > 0 && !stopped) {
      long chunk = remaining;
      if (rc.checkpoint_interval > 0 && rc.checkpoint_interval < chunk) {
        chunk = rc.checkpoint_interval;
      }
      TrainResult tr = learner.train(env, chunk, sink, rc.stop_at_success, step_sink);
      remaining -= tr.steps_run;
      stopped = tr.steps_to_threshold >= 0;
      if (rc.checkpoint_interval > 0 && remaining > 0 && !stopped) {
        Checkpoint ck = snapshot(learner, &env, /*with_trainer_state=*/true);
        save_checkpoint(ck, out_dir + "/ckpt_" + std::to_string(learner.global_step()) + ".ckpt");
      }
    }
    Checkpoint final_ck = snapshot(learner, &env, /*with_trainer_state=*/true);
    save_checkpoint(final_ck, out_dir + "/final.ckpt");
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "train failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cli_eval(const std::string& ckpt_path, const std::string& task, int episodes,
             std::uint64_t seed, const std::string& csv_path) {
  Checkpoint ckpt;
  TaskSpec target;
  try {
    target = default_task_spec(task_from_name(task));
    if (episodes <= 0) throw ConfigError("episodes must be >= 1");
  } catch (const std::exception& e) {
    std::cerr << "eval error: " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    ckpt = load_checkpoint(ckpt_path);
  } catch (const std::exception& e) {
    std::cerr << "eval error: " << e.what() << "\n";
    return kExitRuntime;
  }
  if (ckpt.policy.task.obs_dim != target.obs_dim ||
      ckpt.policy.task.action_dim != target.action_dim) {
    std::cerr << "eval error: checkpoint dims (" << ckpt.policy.task.obs_dim << ", "
              << ckpt.policy.task.action_dim << ") incompatible with task " << task
              << " (" << target.obs_dim << ", " << target.action_dim << ")\n";
    return kExitValidation;
  }
  try {
    EvalResult er = evaluate(ckpt.policy, target, episodes, seed);
    if (!csv_path.empty()) {
      std::ofstream out(resolve_out_dir(csv_path), std::ios::trunc);
      if (!out) throw std::runtime_error("cannot open eval csv: " + csv_path);
      out << "episode,success,return\n";
      out.precision(17);
      for (std::size_t i = 0; i < er.episode_success.size(); ++i) {
        out << i << ',' << (er.episode_success[i] ? 1 : 0) << ','
            << er.episode_return[i] << '\n';
      }
    }
    std::cout.precision(17);
    std::cout << "success_rate " << er.success_rate << "\n";
    std::cout << "mean_return " << er.mean_return << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "eval failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cli_transfer(const std::string& config_path) {
  GroupConfig gc;
  try {
    gc = parse_group_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    gc.out_dir = resolve_out_dir(gc.out_dir);
    run_group(gc);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "transfer failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cli_inspect(const std::string& ckpt_path) {
  std::ifstream in(ckpt_path, std::ios::binary);
  if (!in) {
    std::cerr << "inspect error: cannot open " << ckpt_path << "\n";
    return kExitRuntime;
  }
  char magic[8];
  in.read(magic, sizeof(magic));
  static const char expect[8] = {'S', 'G', 'R', 'L', 'C', 'K', 'P', 'T'};
  if (!in || std::memcmp(magic, expect, sizeof(expect)) != 0) {
    std::cerr << "inspect error: not a checkpoint file: " << ckpt_path << "\n";
    return kExitValidation;
  }
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mtext(mlen, '\0');
  if (in) in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) {
    std::cerr << "inspect error: truncated checkpoint: " << ckpt_path << "\n";
    return kExitValidation;
  }
  nlohmann::json manifest = nlohmann::json::parse(mtext, nullptr, false);
  if (manifest.is_discarded()) {
    std::cerr << "inspect error: corrupt manifest: " << ckpt_path << "\n";
    return kExitValidation;
  }
  std::cout << manifest.dump(2) << "\n";
  return kExitOk;
}

}  // namespace surgirl
