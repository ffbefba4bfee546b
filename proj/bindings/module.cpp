// Python bindings for the core library: tasks and environments, the mixture
// policy, the learner, checkpoints, and the transfer pipelines.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>

#include "surgirl/checkpoint.hpp"
#include "surgirl/harness.hpp"
#include "surgirl/incremental.hpp"
#include "surgirl/metrics.hpp"

namespace py = pybind11;
using namespace surgirl;

namespace {

py::dict info_to_dict(const StepInfo& info) {
  py::dict d;
  d["success"] = info.success;
  d["collision"] = info.collision;
  d["d_og"] = info.d_og;
  d["d_ro"] = info.d_ro;
  d["d_rg"] = info.d_rg;
  return d;
}

py::dict row_to_dict(const MetricsRow& r) {
  py::dict d;
  d["step"] = r.step;
  d["episode_return"] = r.episode_return;
  d["success_rate"] = r.success_rate;
  d["actor_loss"] = r.actor_loss;
  d["critic_loss"] = r.critic_loss;
  d["alpha"] = r.alpha;
  d["beta"] = r.beta;
  d["mean_Hw"] = r.mean_Hw;
  d["mean_w"] = r.mean_w;
  return d;
}

}  // namespace

PYBIND11_MODULE(_surgirl, m) {
  m.doc() = "Knowledge-grounded RL: mixture policy, SAC learner, desk-scale "
            "tasks, and incremental transfer pipelines.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<TransferError>(m, "TransferError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);

  py::class_<TaskSpec>(m, "TaskSpec")
      .def_property_readonly("name", [](const TaskSpec& t) { return task_name(t.id); })
      .def_readonly("obs_dim", &TaskSpec::obs_dim)
      .def_readonly("action_dim", &TaskSpec::action_dim)
      .def_readonly("arms", &TaskSpec::arms)
      .def_readonly("horizon", &TaskSpec::horizon)
      .def("__repr__", [](const TaskSpec& t) {
        return std::string("TaskSpec(") + task_name(t.id) + ")";
      });

  m.def("task_spec", [](const std::string& name) {
    return default_task_spec(task_from_name(name));
  }, py::arg("name"), "Default specification of one of the ten tasks.");

  m.def("task_names", [] {
    std::vector<std::string> names;
    for (int i = 0; i <= static_cast<int>(TaskId::ActiveTrack); ++i) {
      names.push_back(task_name(static_cast<TaskId>(i)));
    }
    return names;
  });

  m.def("dense_reward", &dense_reward, py::arg("d_og"), py::arg("d_ro"),
        py::arg("d_rg"), py::arg("collision"), py::arg("success"), py::arg("coeffs"));

  py::class_<RewardCoeffs>(m, "RewardCoeffs")
      .def(py::init([](double c_og, double c_ro, double c_rg, double p) {
        return RewardCoeffs{c_og, c_ro, c_rg, p};
      }), py::arg("c_og") = 0.0, py::arg("c_ro") = 0.0, py::arg("c_rg") = 0.0,
          py::arg("p") = 0.0)
      .def_readwrite("c_og", &RewardCoeffs::c_og)
      .def_readwrite("c_ro", &RewardCoeffs::c_ro)
      .def_readwrite("c_rg", &RewardCoeffs::c_rg)
      .def_readwrite("p", &RewardCoeffs::p);

  py::class_<Env>(m, "Env")
      .def(py::init<const TaskSpec&, std::uint64_t>(), py::arg("spec"), py::arg("seed"))
      .def("reset", &Env::reset)
      .def("observe", &Env::observe)
      .def("step", [](Env& env, const std::vector<double>& action) {
        StepResult r = env.step(action);
        return py::make_tuple(r.next_obs, r.reward, r.done, info_to_dict(r.info));
      }, py::arg("action"))
      .def_property_readonly("spec", &Env::spec);

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("uniform", &Rng::uniform, py::arg("lo") = 0.0, py::arg("hi") = 1.0)
      .def("normal", &Rng::normal)
      .def("gumbel", &Rng::gumbel);

  py::class_<BetaSchedule>(m, "BetaSchedule")
      .def(py::init([](double d_e, double c_e) { return BetaSchedule{d_e, c_e}; }),
           py::arg("d_e") = 0.0, py::arg("c_e") = 0.0)
      .def_readwrite("d_e", &BetaSchedule::d_e)
      .def_readwrite("c_e", &BetaSchedule::c_e)
      .def("at", &BetaSchedule::at, py::arg("t"));

  m.def("categorical_entropy", [](const std::vector<double>& w) {
    return categorical_entropy(w);
  }, py::arg("weights"), "H(w) = -sum w_j log w_j with 0 log 0 := 0.");

  py::class_<KianPolicy>(m, "Policy")
      .def_property_readonly("task", [](const KianPolicy& p) { return p.task; })
      .def_property_readonly("n_external", &KianPolicy::n_external)
      .def_property_readonly("components", &KianPolicy::components)
      .def_property_readonly("knowledge_ids", [](const KianPolicy& p) {
        std::vector<std::string> ids;
        for (const auto& g : p.knowledge.policies) ids.push_back(g.id);
        return ids;
      })
      .def("weights", [](const KianPolicy& p, const std::vector<double>& obs) {
        return policy_weights(p, obs).w;
      }, py::arg("obs"), "Attention weights over [inner, g_1..g_n].")
      .def("act", [](const KianPolicy& p, const std::vector<double>& obs, Rng& rng) {
        ActionDiagnostics diag;
        auto a = act(p, obs, rng, &diag);
        return py::make_tuple(a, diag.selected_index, diag.log_prob);
      }, py::arg("obs"), py::arg("rng"),
         "Sampled action with the selected component and mixture log-prob.")
      .def("greedy_act", [](const KianPolicy& p, const std::vector<double>& obs) {
        return greedy_act(p, obs);
      }, py::arg("obs"));

  m.def("make_policy",
        [](const TaskSpec& task, std::uint64_t seed, int actor_hidden,
           int query_hidden, int d_k, bool with_knowledge) {
          Rng init = Rng::substream(seed, "init");
          KnowledgeSet know;
          if (with_knowledge) know = default_knowledge_set(init, d_k);
          return make_kian_policy(task, std::move(know), init, actor_hidden,
                                  query_hidden, d_k);
        },
        py::arg("task"), py::arg("seed"), py::arg("actor_hidden") = 512,
        py::arg("query_hidden") = 64, py::arg("d_k") = kDefaultKeyDim,
        py::arg("with_knowledge") = true,
        "Mixture policy with the three scripted knowledge policies (or none).");

  py::class_<LearnerConfig>(m, "LearnerConfig")
      .def(py::init<>())
      .def_readwrite("gamma", &LearnerConfig::gamma)
      .def_readwrite("tau", &LearnerConfig::tau)
      .def_readwrite("batch", &LearnerConfig::batch)
      .def_readwrite("buffer_capacity", &LearnerConfig::buffer_capacity)
      .def_readwrite("start_steps", &LearnerConfig::start_steps)
      .def_readwrite("eval_interval", &LearnerConfig::eval_interval)
      .def_readwrite("eval_episodes", &LearnerConfig::eval_episodes)
      .def_readwrite("actor_lr", &LearnerConfig::actor_lr)
      .def_readwrite("critic_lr", &LearnerConfig::critic_lr)
      .def_readwrite("alpha_lr", &LearnerConfig::alpha_lr)
      .def_readwrite("alpha_auto", &LearnerConfig::alpha_auto)
      .def_readwrite("alpha_value", &LearnerConfig::alpha_value)
      .def_readwrite("beta", &LearnerConfig::beta)
      .def_readwrite("critic_hidden", &LearnerConfig::critic_hidden)
      .def_readwrite("total_steps", &LearnerConfig::total_steps);

  py::class_<Learner>(m, "Learner")
      .def(py::init([](const KianPolicy& policy, const LearnerConfig& cfg,
                       std::uint64_t seed) {
        return Learner(policy, cfg, seed);
      }), py::arg("policy"), py::arg("config"), py::arg("seed"))
      .def("train", [](Learner& l, Env& env, long steps, double stop_at_success) {
        TrainResult r = l.train(env, steps, {}, stop_at_success);
        py::list rows;
        for (const auto& row : r.metrics) rows.append(row_to_dict(row));
        py::dict out;
        out["metrics"] = rows;
        out["steps_to_threshold"] = r.steps_to_threshold;
        out["steps_run"] = r.steps_run;
        return out;
      }, py::arg("env"), py::arg("steps"), py::arg("stop_at_success") = -1.0)
      .def_property_readonly("policy",
                             [](Learner& l) -> KianPolicy& { return l.policy(); },
                             py::return_value_policy::reference_internal)
      .def_property_readonly("global_step", &Learner::global_step)
      .def("save", [](Learner& l, const std::string& path, Env* env,
                      bool with_trainer_state) {
        save_checkpoint(snapshot(l, env, with_trainer_state), path);
      }, py::arg("path"), py::arg("env") = nullptr,
         py::arg("with_trainer_state") = false);

  m.def("evaluate", [](const KianPolicy& p, int episodes, std::uint64_t seed) {
    EvalResult r = evaluate(p, p.task, episodes, seed);
    py::dict d;
    d["success_rate"] = r.success_rate;
    d["mean_return"] = r.mean_return;
    d["episode_return"] = r.episode_return;
    return d;
  }, py::arg("policy"), py::arg("episodes"), py::arg("seed"),
     "Greedy evaluation on the policy's own task.");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("global_step",
                             [](const Checkpoint& c) { return c.global_step; })
      .def_property_readonly("policy",
                             [](const Checkpoint& c) { return c.policy; })
      .def_property_readonly("param_hash", &checkpoint_param_hash);

  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def("transfer",
        [](const Checkpoint& source, const TaskSpec& target,
           const std::string& pipeline, const std::vector<std::string>& keys,
           bool expand_with_inner, int actor_hidden, int query_hidden, int d_k,
           std::uint64_t seed) {
          TransferPlan plan{pipeline_from_name(pipeline), keys, expand_with_inner};
          NetworkSizes nets{actor_hidden, query_hidden, d_k};
          Rng init = Rng::substream(seed, "init");
          return transfer(source, target, plan, nets, init);
        },
        py::arg("source"), py::arg("target"), py::arg("pipeline"), py::arg("keys"),
        py::arg("expand_with_inner") = false, py::arg("actor_hidden") = 512,
        py::arg("query_hidden") = 64, py::arg("d_k") = kDefaultKeyDim,
        py::arg("seed") = 0,
        "Initialize a policy for a new task from a source checkpoint.");

  m.def("train_from_config", &cli_train, py::arg("config_path"),
        "Run a full training job from a config file; returns the exit code.");
  m.def("transfer_from_config", &cli_transfer, py::arg("config_path"),
        "Run a staged transfer group from a config file; returns the exit code.");
}
