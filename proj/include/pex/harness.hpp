#ifndef PEX_HARNESS_HPP_
#define PEX_HARNESS_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pex/actor.hpp"
#include "pex/bridge.hpp"
#include "pex/checkpoint.hpp"
#include "pex/config.hpp"
#include "pex/envs.hpp"
#include "pex/iql.hpp"
#include "pex/policy_set.hpp"
#include "pex/replay.hpp"
#include "pex/sac.hpp"

namespace pex
{

// Stream ids mixed with the run seed; each phase consumes its own stream in a fixed order.
constexpr std::uint64_t kDatasetStream = 1;
constexpr std::uint64_t kOfflineStream = 2;
constexpr std::uint64_t kOnlineStream = 3;
constexpr std::uint64_t kOfflineEvalStream = 1ULL << 20;
constexpr std::uint64_t kOnlineEvalStream = 1ULL << 21;

/// Number of trailing evaluation points averaged into a run's final score.
constexpr std::size_t kFinalScoreWindow = 5;

inline std::unique_ptr<Env> make_env(const RunConfig & c)
{
  if (c.maze_layout.empty()) {
    return make_env(c.env_id);
  }
  return make_env(c.env_id, c.maze_layout);
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult
{
  double mean_return = 0.0;
  std::vector<double> returns;
};

/// Undiscounted returns of `episodes` rollouts of a deterministic acting rule on a copy of `env`.
template<typename Policy>
requires std::invocable<Policy &, const Vector &>
EvalResult evaluate(const Env & env, Policy && act, std::size_t episodes, Rng & rng)
{
  if (episodes < 1) {
    throw std::invalid_argument("evaluate: need at least one episode");
  }
  auto copy = env.clone();
  EvalResult r;
  r.returns = rollout_returns(
    *copy, [&](const Vector & obs, Rng &) {return act(obs);}, episodes, rng);
  double s = 0.0;
  for (double x : r.returns) {
    s += x;
  }
  r.mean_return = s / static_cast<double>(r.returns.size());
  return r;
}

inline EvalResult evaluate(const Env & env, const Actor & policy, std::size_t episodes, Rng & rng)
{
  return evaluate(env, [&](const Vector & obs) {return policy.greedy(obs);}, episodes, rng);
}

/// Eval-mode composite policy: greedy proposals, argmax selection.
inline EvalResult evaluate(
  const Env & env, const PolicySet & set, const Mlp & q1, const Mlp & q2,
  std::size_t episodes, Rng & rng)
{
  Rng unused(0);
  return evaluate(
    env, [&](const Vector & obs) {return pex_act(set, q1, q2, obs, unused, ActMode::Eval).action;},
    episodes, rng);
}

// ---------------------------------------------------------------------------
// Run log

struct EvalRecord
{
  std::uint64_t env_step = 0;
  double mean_return = 0.0;
  double normalized_score = 0.0;
  std::vector<double> episode_returns;

  bool operator==(const EvalRecord &) const = default;
};

struct RunLog
{
  std::string label;
  std::string env_id;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<EvalRecord> evals;
  std::vector<SelectionLogEntry> selection;
  double wall_clock_seconds = 0.0;

  /// Equality of everything the run computes (wall-clock time excluded).
  bool same_results(const RunLog & o) const
  {
    return label == o.label && env_id == o.env_id && seed == o.seed &&
           config_hash == o.config_hash && evals == o.evals && selection == o.selection;
  }
};

/// Mean normalized score over the last few evaluation points.
inline double final_score(const std::vector<EvalRecord> & evals, std::size_t window = kFinalScoreWindow)
{
  if (evals.empty()) {
    throw std::invalid_argument("final_score: no evaluations");
  }
  const std::size_t k = std::min(window, evals.size());
  double s = 0.0;
  for (std::size_t i = evals.size() - k; i < evals.size(); ++i) {
    s += evals[i].normalized_score;
  }
  return s / static_cast<double>(k);
}

inline double final_score(const RunLog & log) { return final_score(log.evals); }

inline EvalRecord make_record(const EnvSpec & spec, std::uint64_t step, const EvalResult & r)
{
  return EvalRecord{step, r.mean_return, normalized_score(spec, r.mean_return), r.returns};
}

inline Json to_json(const RunLog & log)
{
  Json j;
  j["label"] = log.label;
  j["env_id"] = log.env_id;
  j["seed"] = log.seed;
  j["config_hash"] = log.config_hash;
  j["wall_clock_seconds"] = log.wall_clock_seconds;
  Json evals = Json::array();
  for (const auto & e : log.evals) {
    evals.push_back({{"env_step", e.env_step}, {"mean_return", e.mean_return},
        {"normalized_score", e.normalized_score}, {"episode_returns", e.episode_returns}});
  }
  j["evals"] = evals;
  return j;
}

inline RunLog run_log_from_json(const Json & j)
{
  RunLog log;
  try {
    log.label = j.at("label").get<std::string>();
    log.env_id = j.at("env_id").get<std::string>();
    log.seed = j.at("seed").get<std::uint64_t>();
    log.config_hash = j.at("config_hash").get<std::string>();
    log.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    for (const auto & e : j.at("evals")) {
      log.evals.push_back(EvalRecord{e.at("env_step").get<std::uint64_t>(),
          e.at("mean_return").get<double>(), e.at("normalized_score").get<double>(),
          e.at("episode_returns").get<std::vector<double>>()});
    }
  } catch (const nlohmann::json::exception & e) {
    throw DataError(DataErrorCode::Mismatch, std::string("malformed run log: ") + e.what());
  }
  return log;
}

// ---------------------------------------------------------------------------
// Data and checkpoints

/// Loads `c.dataset_path`, or generates the configured dataset in memory when it is empty.
inline OfflineDataset build_dataset(const RunConfig & c, const Env & env)
{
  if (!c.dataset_path.empty()) {
    OfflineDataset ds = load_dataset(c.dataset_path);
    const EnvSpec & spec = env.spec();
    if (ds.meta().env_id != spec.env_id || ds.obs_dim() != spec.obs_dim || ds.act_dim() != spec.act_dim) {
      throw DataError(DataErrorCode::Mismatch,
        "dataset '" + c.dataset_path + "' was generated for '" + ds.meta().env_id +
        "' and does not match environment '" + spec.env_id + "'");
    }
    return ds;
  }
  const BehaviorGrade grade = grade_from_string(c.dataset_grade);
  auto copy = env.clone();
  Rng rng(mix_seed(c.dataset_seed, kDatasetStream));
  const auto ts = generate_offline_dataset(*copy, grade, c.dataset_size, rng);
  return OfflineDataset::from_transitions(
    DatasetMeta{env.spec().env_id, grade, c.dataset_seed}, env.spec().obs_dim, env.spec().act_dim, ts);
}

/// The actor's state-independent log-std rides along as a 1 -> act_dim layer with zero weights.
inline void store_actor(Checkpoint & ckpt, const std::string & name, const Actor & actor)
{
  ckpt.add(name, actor.net);
  Mlp ls = Mlp::zeros({1, actor.act_dim()});
  ls.biases[0] = actor.log_std;
  ckpt.add(name + ".log_std", std::move(ls));
}

inline Actor load_actor(const Checkpoint & ckpt, const std::string & name, const EnvSpec & spec)
{
  Actor a;
  a.net = ckpt.get(name);
  const Mlp & ls = ckpt.get(name + ".log_std");
  if (a.net.input_dim() != spec.obs_dim || a.net.output_dim() != spec.act_dim ||
    ls.layer_sizes != std::vector<std::size_t>{1, spec.act_dim})
  {
    throw DataError(DataErrorCode::Mismatch, "checkpoint actor '" + name + "' does not fit environment " + spec.env_id);
  }
  a.log_std = ls.biases[0];
  a.action_low = spec.action_low;
  a.action_high = spec.action_high;
  return a;
}

inline Checkpoint to_checkpoint(const IqlNets & n)
{
  Checkpoint c;
  c.add("q1", n.q1);
  c.add("q2", n.q2);
  c.add("q1_target", n.q1_target);
  c.add("q2_target", n.q2_target);
  c.add("v", n.v);
  store_actor(c, "actor", n.actor);
  return c;
}

inline void check_critic(const Mlp & q, std::size_t in, const std::string & name)
{
  if (q.input_dim() != in || q.output_dim() != 1) {
    throw DataError(DataErrorCode::Mismatch, "checkpoint network '" + name + "' has the wrong input or output size");
  }
}

// ---------------------------------------------------------------------------
// Offline phase

struct OfflineResult
{
  Checkpoint checkpoint;
  std::vector<EvalRecord> evals;  // env_step holds the gradient step
  std::string config_hash;
  std::uint32_t dataset_checksum = 0;
};

/// IQL (or reward-free BC) on the offline dataset, with periodic greedy evaluation.
inline OfflineResult run_offline_phase(const RunConfig & c, const Env & env, const OfflineDataset & data)
{
  validate(c);
  const EnvSpec & spec = env.spec();
  if (data.obs_dim() != spec.obs_dim || data.act_dim() != spec.act_dim) {
    throw DataError(DataErrorCode::Mismatch, "dataset dimensions do not match environment " + spec.env_id);
  }
  if (data.empty() && c.offline_steps > 0) {
    throw DataError(DataErrorCode::Mismatch, "offline training needs a nonempty dataset");
  }
  Rng rng(mix_seed(c.seed, kOfflineStream));
  IqlNets nets = IqlNets::init(spec.obs_dim, spec.act_dim, c.hidden, spec.action_low, spec.action_high, rng);
  IqlOptim optim = IqlOptim::for_nets(nets);
  const IqlHyper hyper = resolve_iql_hyper(c, spec);
  const LearningRates lr = learning_rates(c);

  OfflineResult out;
  out.config_hash = config_hash(c);
  out.dataset_checksum = data.checksum();
  std::uint64_t eval_index = 0;
  auto eval = [&](std::uint64_t step) {
      Rng erng(mix_seed(c.seed, kOfflineEvalStream + eval_index++));
      out.evals.push_back(make_record(spec, step, evaluate(env, nets.actor, c.eval_episodes, erng)));
    };
  eval(0);
  for (std::uint64_t step = 1; step <= c.offline_steps; ++step) {
    const Batch batch = sample_batch(data, c.batch_size, rng);
    if (c.offline_algo == OfflineAlgo::IQL) {
      iql_update(nets, optim, batch, hyper, lr);
    } else {
      const ActorLoss l = bc_loss(nets.actor, batch);
      adam_step(nets.actor, l.grad, optim.actor, lr.actor);
    }
    if (step % c.offline_eval_interval == 0 || step == c.offline_steps) {
      eval(step);
    }
  }
  out.checkpoint = to_checkpoint(nets);
  return out;
}

inline OfflineResult run_offline_phase(const RunConfig & c)
{
  validate(c);
  auto env = make_env(c);
  return run_offline_phase(c, *env, build_dataset(c, *env));
}

// ---------------------------------------------------------------------------
// Online phase

struct OnlineResult
{
  RunLog log;
  Checkpoint checkpoint;                // final online networks
  std::optional<Actor> offline_policy;  // pi_beta at the end of the run, when one was used
};

namespace detail
{

inline bool uses_offline_policy(BridgeStrategy s)
{
  return s == BridgeStrategy::PEX || s == BridgeStrategy::BT || s == BridgeStrategy::JSRL ||
         s == BridgeStrategy::BCOffline;
}

/// Online training state; members referenced by the policy set never move after construction.
class OnlineRun
{
public:
  OnlineRun(const RunConfig & c, const Env & env, const OfflineDataset * data, const Checkpoint * ckpt)
  : c_(c), env_(env.clone()), spec_(env_->spec()), flags_(resolve_flags(c)),
    hyper_(resolve_iql_hyper(c, spec_)), lr_(learning_rates(c)),
    rng_(mix_seed(c.seed, kOnlineStream)),
    buffer_(static_cast<std::size_t>(std::max<std::uint64_t>(1, c.buffer_capacity)), spec_.obs_dim, spec_.act_dim),
    offline_data_(flags_.use_offline_buffer ? data : nullptr)
  {
    if (flags_.use_offline_buffer && (data == nullptr || data->empty())) {
      throw DataError(DataErrorCode::Mismatch, "use_offline_buffer is on but no offline dataset was given");
    }
    if (data != nullptr && (data->obs_dim() != spec_.obs_dim || data->act_dim() != spec_.act_dim)) {
      throw DataError(DataErrorCode::Mismatch, "dataset dimensions do not match environment " + spec_.env_id);
    }
    if ((flags_.transfer_critic || flags_.transfer_policy) && ckpt == nullptr) {
      throw DataError(DataErrorCode::Mismatch, "transfer flags are on but no offline checkpoint was given");
    }
    // Fresh networks are always drawn first so the stream order does not depend on the flags.
    iql_ = IqlNets::init(spec_.obs_dim, spec_.act_dim, c.hidden, spec_.action_low, spec_.action_high, rng_);
    if (flags_.transfer_critic) {
      const std::size_t in = spec_.obs_dim + spec_.act_dim;
      for (const char * name : {"q1", "q2", "q1_target", "q2_target"}) {
        check_critic(ckpt->get(name), in, name);
      }
      check_critic(ckpt->get("v"), spec_.obs_dim, "v");
      iql_.q1 = ckpt->get("q1");
      iql_.q2 = ckpt->get("q2");
      iql_.q1_target = ckpt->get("q1_target");
      iql_.q2_target = ckpt->get("q2_target");
      iql_.v = ckpt->get("v");
    }
    if (flags_.transfer_policy) {
      Actor transferred = load_actor(*ckpt, "actor", spec_);
      if (uses_offline_policy(c.strategy)) {
        beta_ = transferred;
        beta_optim_ = ActorOptim::for_actor(*beta_);
      } else {
        iql_.actor = transferred;
      }
    }
    iql_optim_ = IqlOptim::for_nets(iql_);
    if (c.online_algo == OnlineAlgo::SAC) {
      sac_ = SacNets::from_iql(iql_);
      sac_optim_ = SacOptim::for_nets(sac_);
    }
    const Actor & theta = online_actor();
    if (c.strategy == BridgeStrategy::PEX) {
      set_ = PolicySet::expansion(*beta_, theta, hyper_.temperature(), flags_.freeze_offline_policy);
    } else {
      set_ = PolicySet::single(theta, hyper_.temperature());
    }
    sac_hyper_ = SacHyper{c.discount, resolve_target_entropy(c, spec_)};
  }

  OnlineResult run()
  {
    const auto t0 = std::chrono::steady_clock::now();
    OnlineResult out;
    RunLog & log = out.log;
    log.label = c_.display_label();
    log.env_id = spec_.env_id;
    log.seed = c_.seed;
    log.config_hash = config_hash(c_);

    const bool train = c_.strategy != BridgeStrategy::BCOffline;
    const std::uint64_t total = train ? c_.online_steps : 0;
    const std::uint64_t guide = c_.jsrl_max_guide_steps > 0 ? c_.jsrl_max_guide_steps : spec_.max_episode_steps;
    std::uint64_t eval_index = 0;
    auto eval = [&](std::uint64_t step) {
        Rng erng(mix_seed(c_.seed, kOnlineEvalStream + eval_index++));
        log.evals.push_back(make_record(spec_, step, evaluate_current(erng)));
      };
    eval(0);

    Vector obs = env_->reset(rng_);
    for (std::uint64_t step = 1; step <= total; ++step) {
      if (env_->episode_over()) {
        obs = env_->reset(rng_);
      }
      Vector action;
      switch (c_.strategy) {
        case BridgeStrategy::PEX: {
            PexChoice ch = pex_act(set_, critic1(), critic2(), obs, rng_, ActMode::Explore, step);
            action = std::move(ch.action);
            log.selection.push_back(std::move(ch.entry));
            break;
          }
        case BridgeStrategy::BT: {
            BtChoice ch = bt_act(*beta_, online_actor(), bt_, obs, rng_, c_.bt_epsilon, c_.bt_zeta_a);
            action = std::move(ch.action);
            log.selection.push_back(one_hot_entry(step, ch.used_offline));
            break;
          }
        case BridgeStrategy::JSRL: {
            const double progress = static_cast<double>(step - 1) / static_cast<double>(total);
            JsrlChoice ch = jsrl_act(*beta_, online_actor(), obs, env_->episode_step(), progress, guide, rng_);
            action = std::move(ch.action);
            log.selection.push_back(one_hot_entry(step, ch.used_offline));
            break;
          }
        default:
          action = online_actor().sample(obs, rng_);
          break;
      }
      const Transition tr = env_->step(action);
      buffer_.push(tr);
      obs = tr.next_obs;

      if (step >= c_.initial_collection_steps) {
        for (std::uint64_t u = 0; u < c_.updates_per_env_step; ++u) {
          update();
        }
      }
      if (step % c_.eval_interval == 0 || step == total) {
        eval(step);
      }
    }
    out.checkpoint = final_checkpoint();
    out.offline_policy = beta_;
    log.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

private:
  bool sac() const { return c_.online_algo == OnlineAlgo::SAC; }
  const Actor & online_actor() const { return sac() ? sac_.actor : iql_.actor; }
  const Mlp & critic1() const { return sac() ? sac_.q1 : iql_.q1; }
  const Mlp & critic2() const { return sac() ? sac_.q2 : iql_.q2; }

  static SelectionLogEntry one_hot_entry(std::uint64_t step, bool offline)
  {
    SelectionLogEntry e;
    e.env_step = step;
    e.chosen_index = offline ? 0 : 1;
    e.probabilities = Vector::Zero(2);
    e.probabilities(static_cast<Eigen::Index>(e.chosen_index)) = 1.0;
    return e;
  }

  EvalResult evaluate_current(Rng & erng) const
  {
    if (c_.strategy == BridgeStrategy::PEX) {
      return evaluate(*env_, set_, critic1(), critic2(), c_.eval_episodes, erng);
    }
    if (c_.strategy == BridgeStrategy::BCOffline) {
      return evaluate(*env_, *beta_, c_.eval_episodes, erng);
    }
    return evaluate(*env_, online_actor(), c_.eval_episodes, erng);
  }

  void update()
  {
    const Batch batch = sample_mixed(buffer_, offline_data_, c_.batch_size, rng_, c_.offline_ratio);
    std::vector<ExtraActor> extra;
    if (c_.strategy == BridgeStrategy::PEX && !flags_.freeze_offline_policy) {
      extra.push_back(ExtraActor{&*beta_, &beta_optim_});
    }
    if (sac()) {
      sac_update(sac_, sac_optim_, batch, sac_hyper_, lr_, set_, rng_, {}, extra, c_.lr_entropy);
    } else {
      iql_update(iql_, iql_optim_, batch, hyper_, lr_, {}, extra);
    }
  }

  Checkpoint final_checkpoint() const
  {
    Checkpoint ck;
    if (sac()) {
      ck.add("q1", sac_.q1);
      ck.add("q2", sac_.q2);
      ck.add("q1_target", sac_.q1_target);
      ck.add("q2_target", sac_.q2_target);
      Mlp ent = Mlp::zeros({1, 1});
      ent.biases[0](0) = sac_.log_ent_coef;
      ck.add("log_ent_coef", ent);
      store_actor(ck, "actor", sac_.actor);
    } else {
      ck = to_checkpoint(iql_);
    }
    if (beta_) {
      store_actor(ck, "offline_actor", *beta_);
    }
    return ck;
  }

  RunConfig c_;
  std::unique_ptr<Env> env_;
  EnvSpec spec_;
  BridgeFlags flags_;
  IqlHyper hyper_;
  LearningRates lr_;
  SacHyper sac_hyper_;
  Rng rng_;
  ReplayBuffer buffer_;
  const OfflineDataset * offline_data_;
  IqlNets iql_;
  IqlOptim iql_optim_;
  SacNets sac_;
  SacOptim sac_optim_;
  std::optional<Actor> beta_;
  ActorOptim beta_optim_;
  PolicySet set_;
  BtState bt_;
};

}  // namespace detail

/**
 * Online fine-tuning under the configured bridging strategy. `data` feeds the offline
 * buffer; `ckpt` supplies transferred networks. Either may be null when the resolved
 * flags do not need it.
 */
inline OnlineResult run_online_phase(
  const RunConfig & c, const Env & env, const OfflineDataset * data, const Checkpoint * ckpt)
{
  validate(c);
  detail::OnlineRun run(c, env, data, ckpt);
  return run.run();
}

// ---------------------------------------------------------------------------
// Outputs

namespace detail
{

inline std::string fmt(double v)
{
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

inline void write_text(const std::filesystem::path & path, const std::string & text)
{
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {
    throw DataError(DataErrorCode::Io, "cannot write " + path.string());
  }
}

}  // namespace detail

inline std::string run_stem(const RunLog & log)
{
  return log.label + "_" + log.env_id + "_s" + std::to_string(log.seed);
}

/// env_step,mean_return,normalized_score
inline std::string run_csv(const RunLog & log)
{
  std::ostringstream os;
  os << "env_step,mean_return,normalized_score\n";
  for (const auto & e : log.evals) {
    os << e.env_step << ',' << detail::fmt(e.mean_return) << ',' << detail::fmt(e.normalized_score) << '\n';
  }
  return os.str();
}

inline std::vector<EvalRecord> parse_run_csv(const std::string & text)
{
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  std::vector<EvalRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) {
      continue;
    }
    EvalRecord e;
    char * end = nullptr;
    e.env_step = std::strtoull(line.c_str(), &end, 10);
    e.mean_return = std::strtod(end + 1, &end);
    e.normalized_score = std::strtod(end + 1, &end);
    out.push_back(std::move(e));
  }
  return out;
}

struct AggregatePoint
{
  std::uint64_t env_step = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t runs = 0;
};

/**
 * Per label: at each evaluation step, scores are averaged across tasks within a seed,
 * then mean and sample standard deviation are taken across seeds.
 */
inline std::map<std::string, std::vector<AggregatePoint>> aggregate(const std::vector<RunLog> & logs)
{
  std::map<std::string, std::map<std::uint64_t, std::vector<const RunLog *>>> by_label;
  for (const auto & l : logs) {
    by_label[l.label][l.seed].push_back(&l);
  }
  std::map<std::string, std::vector<AggregatePoint>> out;
  for (const auto & [label, seeds] : by_label) {
    const std::vector<EvalRecord> & ref = seeds.begin()->second.front()->evals;
    std::vector<std::vector<double>> per_seed;
    for (const auto & [seed, runs] : seeds) {
      std::vector<double> avg(ref.size(), 0.0);
      for (const RunLog * r : runs) {
        if (r->evals.size() != ref.size()) {
          throw std::invalid_argument("aggregate: runs of '" + label + "' have different evaluation schedules");
        }
        for (std::size_t i = 0; i < ref.size(); ++i) {
          if (r->evals[i].env_step != ref[i].env_step) {
            throw std::invalid_argument("aggregate: runs of '" + label + "' have different evaluation schedules");
          }
          avg[i] += r->evals[i].normalized_score / static_cast<double>(runs.size());
        }
      }
      per_seed.push_back(std::move(avg));
    }
    std::vector<AggregatePoint> pts;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      AggregatePoint p;
      p.env_step = ref[i].env_step;
      p.runs = per_seed.size();
      for (const auto & s : per_seed) {
        p.mean += s[i];
      }
      p.mean /= static_cast<double>(p.runs);
      if (p.runs > 1) {
        double ss = 0.0;
        for (const auto & s : per_seed) {
          ss += (s[i] - p.mean) * (s[i] - p.mean);
        }
        p.std = std::sqrt(ss / static_cast<double>(p.runs - 1));
      }
      pts.push_back(p);
    }
    out.emplace(label, std::move(pts));
  }
  return out;
}

struct ChartSeries
{
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal SVG line chart with axes, min/max tick labels and a legend.
inline std::string svg_line_chart(
  const std::string & title, const std::vector<ChartSeries> & series,
  const std::string & x_label, const std::string & y_label)
{
  constexpr double W = 640, H = 400, L = 60, R = 160, T = 40, B = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto & s : series) {
    for (double v : s.x) {x0 = std::min(x0, v); x1 = std::max(x1, v);}
    for (double v : s.y) {y0 = std::min(y0, v); y1 = std::max(y1, v);}
  }
  if (!(x1 > x0)) {x1 = x0 + 1.0;}
  if (!(y1 > y0)) {y0 -= 1.0; y1 += 1.0;}
  auto px = [&](double v) {return L + (v - x0) / (x1 - x0) * (W - L - R);};
  auto py = [&](double v) {return H - B - (v - y0) / (y1 - y0) * (H - T - B);};
  static const char * colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream os;
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
  os << "<text x=\"14\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " << (T + H - B) / 2 << ")\">" << y_label << "</text>\n";
  os << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" font-size=\"10\" text-anchor=\"middle\">" << x0 << "</text>\n";
  os << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" font-size=\"10\" text-anchor=\"middle\">" << x1 << "</text>\n";
  os << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" font-size=\"10\" text-anchor=\"end\">" << y0 << "</text>\n";
  os << "<text x=\"" << L - 6 << "\" y=\"" << T + 4 << "\" font-size=\"10\" text-anchor=\"end\">" << y1 << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto & s = series[k];
    const char * color = colors[k % 8];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    os << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(k);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
    os << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << s.name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/**
 * Writes runs/<stem>.csv (+ _selection.csv, .json), aggregate.csv, usage.csv and
 * returns.svg / aggregate.svg / usage.svg into `out_dir`.
 */
inline void emit_outputs(const std::vector<RunLog> & logs, const std::filesystem::path & out_dir, std::size_t usage_bucket = 1000)
{
  if (logs.empty()) {
    throw std::invalid_argument("emit_outputs: no run logs");
  }
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "runs", ec);
  if (ec) {
    throw DataError(DataErrorCode::Io, "cannot create " + (out_dir / "runs").string() + ": " + ec.message());
  }
  std::vector<ChartSeries> run_series;
  std::vector<ChartSeries> usage_series;
  std::ostringstream usage;
  usage << "label,env_id,seed,bucket,start_step,offline_usage\n";
  for (const auto & log : logs) {
    const std::string stem = run_stem(log);
    detail::write_text(out_dir / "runs" / (stem + ".csv"), run_csv(log));
    detail::write_text(out_dir / "runs" / (stem + ".json"), to_json(log).dump(1) + "\n");
    ChartSeries s{stem, {}, {}};
    for (const auto & e : log.evals) {
      s.x.push_back(static_cast<double>(e.env_step));
      s.y.push_back(e.normalized_score);
    }
    run_series.push_back(std::move(s));
    if (!log.selection.empty()) {
      detail::write_text(out_dir / "runs" / (stem + "_selection.csv"), selection_log_csv(log.selection));
      const auto fr = usage_summary(log.selection, usage_bucket);
      ChartSeries u{stem, {}, {}};
      for (std::size_t b = 0; b < fr.size(); ++b) {
        const std::uint64_t start = log.selection[b * usage_bucket].env_step;
        usage << log.label << ',' << log.env_id << ',' << log.seed << ',' << b << ',' << start << ','
              << detail::fmt(fr[b]) << '\n';
        u.x.push_back(static_cast<double>(start));
        u.y.push_back(fr[b]);
      }
      usage_series.push_back(std::move(u));
    }
  }
  std::ostringstream agg;
  agg << "label,env_step,mean,std,runs\n";
  std::vector<ChartSeries> agg_series;
  for (const auto & [label, pts] : aggregate(logs)) {
    ChartSeries s{label, {}, {}};
    for (const auto & p : pts) {
      agg << label << ',' << p.env_step << ',' << detail::fmt(p.mean) << ',' << detail::fmt(p.std) << ','
          << p.runs << '\n';
      s.x.push_back(static_cast<double>(p.env_step));
      s.y.push_back(p.mean);
    }
    agg_series.push_back(std::move(s));
  }
  detail::write_text(out_dir / "aggregate.csv", agg.str());
  detail::write_text(out_dir / "usage.csv", usage.str());
  detail::write_text(out_dir / "returns.svg",
    svg_line_chart("Normalized return per run", run_series, "env steps", "normalized score"));
  detail::write_text(out_dir / "aggregate.svg",
    svg_line_chart("Aggregated normalized return", agg_series, "env steps", "normalized score"));
  if (!usage_series.empty()) {
    detail::write_text(out_dir / "usage.svg",
      svg_line_chart("Offline policy usage", usage_series, "env steps", "fraction of steps"));
  }
}

}  // namespace pex

#endif  // PEX_HARNESS_HPP_
