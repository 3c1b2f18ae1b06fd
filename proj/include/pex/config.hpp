#ifndef PEX_CONFIG_HPP_
#define PEX_CONFIG_HPP_

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pex/bridge.hpp"
#include "pex/envs.hpp"
#include "pex/errors.hpp"
#include "pex/iql.hpp"

namespace pex
{

enum class OfflineAlgo { IQL, BC };
enum class OnlineAlgo { IQL, SAC };

/// Ablation switches after strategy defaults are applied.
struct BridgeFlags
{
  bool use_offline_buffer = true;
  bool transfer_critic = true;
  bool transfer_policy = true;
  bool freeze_offline_policy = true;

  bool operator==(const BridgeFlags &) const = default;
};

/**
 * Every knob of a run. Optional fields left empty take a default that depends on the
 * strategy (ablation flags) or on the environment (IQL constants, target entropy).
 */
struct RunConfig
{
  std::string label;  // defaults to the strategy name
  std::string env_id = "pointmaze-umaze";
  std::vector<std::string> maze_layout;

  std::string dataset_path;  // empty: generate in memory from the fields below
  std::string dataset_grade = "medium";
  std::uint64_t dataset_size = 100000;
  std::uint64_t dataset_seed = 0;
  std::string checkpoint_path;

  BridgeStrategy strategy = BridgeStrategy::PEX;
  std::optional<bool> use_offline_buffer;
  std::optional<bool> transfer_critic;
  std::optional<bool> transfer_policy;
  std::optional<bool> freeze_offline_policy;
  double bt_zeta_a = 2.0;
  double bt_epsilon = 0.1;
  std::uint64_t jsrl_max_guide_steps = 0;  // 0: the environment's episode limit

  OfflineAlgo offline_algo = OfflineAlgo::IQL;
  OnlineAlgo online_algo = OnlineAlgo::IQL;
  std::uint64_t offline_steps = 50000;
  std::uint64_t online_steps = 100000;

  std::optional<double> expectile;
  std::optional<double> inv_temperature;
  double weight_max = 100.0;
  double discount = 0.99;
  std::optional<double> target_entropy;

  std::uint64_t batch_size = 64;
  std::vector<std::size_t> hidden{64, 64};
  double lr_critic = 3e-4;
  double lr_actor = 3e-4;
  double lr_entropy = 3e-4;
  double target_update_speed = 5e-3;
  std::uint64_t buffer_capacity = 1000000;
  std::uint64_t initial_collection_steps = 5000;
  std::uint64_t updates_per_env_step = 1;
  double offline_ratio = 0.5;

  std::uint64_t eval_interval = 2000;
  std::uint64_t eval_episodes = 10;
  std::uint64_t offline_eval_interval = 5000;
  std::uint64_t usage_bucket = 1000;
  std::uint64_t seed = 0;

  std::string display_label() const { return label.empty() ? to_string(strategy) : label; }
};

inline const char * to_string(OfflineAlgo a) { return a == OfflineAlgo::IQL ? "iql" : "bc"; }
inline const char * to_string(OnlineAlgo a) { return a == OnlineAlgo::IQL ? "iql" : "sac"; }

inline BridgeFlags strategy_defaults(BridgeStrategy s, OfflineAlgo offline)
{
  BridgeFlags f;
  switch (s) {
    case BridgeStrategy::Scratch:
      f = {false, false, false, false};
      break;
    case BridgeStrategy::Buffer:
      f = {true, false, false, false};
      break;
    case BridgeStrategy::Direct:
      f = {true, true, true, false};
      break;
    case BridgeStrategy::PEX:
    case BridgeStrategy::BT:
    case BridgeStrategy::JSRL:
    case BridgeStrategy::BCOffline:
      f = {true, true, true, true};
      break;
  }
  if (offline == OfflineAlgo::BC) {
    // Reward-free pre-training leaves no critic and no reward-annotated buffer to carry over.
    f.use_offline_buffer = false;
    f.transfer_critic = false;
  }
  return f;
}

inline BridgeFlags resolve_flags(const RunConfig & c)
{
  BridgeFlags f = strategy_defaults(c.strategy, c.offline_algo);
  f.use_offline_buffer = c.use_offline_buffer.value_or(f.use_offline_buffer);
  f.transfer_critic = c.transfer_critic.value_or(f.transfer_critic);
  f.transfer_policy = c.transfer_policy.value_or(f.transfer_policy);
  f.freeze_offline_policy = c.freeze_offline_policy.value_or(f.freeze_offline_policy);
  return f;
}

/// IQL constants when unset: tau 0.9 / alpha^-1 10 on sparse tasks, 0.7 / 3 on dense ones.
inline IqlHyper resolve_iql_hyper(const RunConfig & c, const EnvSpec & spec)
{
  IqlHyper h;
  h.expectile = c.expectile.value_or(spec.sparse_reward ? 0.9 : 0.7);
  h.inv_temperature = c.inv_temperature.value_or(spec.sparse_reward ? 10.0 : 3.0);
  h.weight_max = c.weight_max;
  h.discount = c.discount;
  return h;
}

inline double resolve_target_entropy(const RunConfig & c, const EnvSpec & spec)
{
  return c.target_entropy.value_or(-static_cast<double>(spec.act_dim));
}

inline LearningRates learning_rates(const RunConfig & c)
{
  return LearningRates{c.lr_critic, c.lr_actor, c.target_update_speed};
}

/// Rejects out-of-range values and contradictory strategy/flag combinations.
inline void validate(const RunConfig & c)
{
  auto fail = [](const std::string & m) { throw ConfigError(m); };
  const BridgeFlags f = resolve_flags(c);
  switch (c.strategy) {
    case BridgeStrategy::PEX:
      if (!f.transfer_policy) {
        fail("pex requires transfer_policy (a fresh policy with transferred critics is strategy 'direct' with transfer_policy=false)");
      }
      break;
    case BridgeStrategy::Scratch:
      if (f.use_offline_buffer || f.transfer_critic || f.transfer_policy) {
        fail("scratch uses no offline data: offline buffer and transfers must be off");
      }
      break;
    case BridgeStrategy::Buffer:
      if (!f.use_offline_buffer) {
        fail("buffer requires use_offline_buffer");
      }
      if (f.transfer_critic || f.transfer_policy) {
        fail("buffer trains fresh networks: transfers must be off");
      }
      break;
    case BridgeStrategy::Direct:
      if (c.freeze_offline_policy.value_or(false)) {
        fail("direct fine-tunes the transferred policy; freeze_offline_policy cannot be set");
      }
      break;
    case BridgeStrategy::BT:
    case BridgeStrategy::JSRL:
      if (!f.transfer_policy) {
        fail(std::string(to_string(c.strategy)) + " needs the offline policy: transfer_policy must be on");
      }
      if (!f.freeze_offline_policy) {
        fail(std::string(to_string(c.strategy)) + " keeps its guide policy frozen");
      }
      break;
    case BridgeStrategy::BCOffline:
      if (!f.transfer_policy) {
        fail("bc-offline evaluates the offline policy: transfer_policy must be on");
      }
      break;
  }
  if (c.offline_algo == OfflineAlgo::BC && (f.transfer_critic || f.use_offline_buffer)) {
    fail("bc pre-training is reward-free: transfer_critic and use_offline_buffer must be off");
  }
  if (c.expectile && !(*c.expectile > 0.0 && *c.expectile < 1.0)) {
    fail("expectile must lie in (0, 1)");
  }
  if (c.inv_temperature && !(*c.inv_temperature > 0.0)) {
    fail("inv_temperature must be positive");
  }
  if (!(c.weight_max > 0.0)) {
    fail("weight_max must be positive");
  }
  if (!(c.discount > 0.0 && c.discount < 1.0)) {
    fail("discount must lie in (0, 1)");
  }
  if (c.batch_size < 1 || c.buffer_capacity < 1 || c.eval_episodes < 1 || c.eval_interval < 1 ||
    c.offline_eval_interval < 1 || c.usage_bucket < 1 || c.updates_per_env_step < 1 || c.dataset_size < 1)
  {
    fail("batch_size, buffer_capacity, dataset_size, eval settings, usage_bucket and updates_per_env_step must be positive");
  }
  if (c.hidden.empty()) {
    fail("hidden must list at least one layer width");
  }
  for (auto h : c.hidden) {
    if (h < 1) {
      fail("hidden layer widths must be positive");
    }
  }
  for (double lr : {c.lr_critic, c.lr_actor, c.lr_entropy}) {
    if (!(lr >= 0.0)) {
      fail("learning rates must be nonnegative");
    }
  }
  if (!(c.target_update_speed > 0.0 && c.target_update_speed <= 1.0)) {
    fail("target_update_speed must lie in (0, 1]");
  }
  if (!(c.offline_ratio >= 0.0 && c.offline_ratio <= 1.0)) {
    fail("offline_ratio must lie in [0, 1]");
  }
  if (!(c.bt_zeta_a > 1.0) || !(c.bt_epsilon >= 0.0 && c.bt_epsilon <= 1.0)) {
    fail("bt_zeta_a must exceed 1 and bt_epsilon must lie in [0, 1]");
  }
  try {
    grade_from_string(c.dataset_grade);
  } catch (const std::exception & e) {
    fail(e.what());
  }
}

// ---------------------------------------------------------------------------
// JSON

using Json = nlohmann::json;

inline Json to_json(const RunConfig & c)
{
  auto opt = [](const auto & o) -> Json { return o ? Json(*o) : Json(nullptr); };
  Json j;
  j["label"] = c.label;
  j["env_id"] = c.env_id;
  j["maze_layout"] = c.maze_layout;
  j["dataset_path"] = c.dataset_path;
  j["dataset_grade"] = c.dataset_grade;
  j["dataset_size"] = c.dataset_size;
  j["dataset_seed"] = c.dataset_seed;
  j["checkpoint_path"] = c.checkpoint_path;
  j["strategy"] = to_string(c.strategy);
  j["use_offline_buffer"] = opt(c.use_offline_buffer);
  j["transfer_critic"] = opt(c.transfer_critic);
  j["transfer_policy"] = opt(c.transfer_policy);
  j["freeze_offline_policy"] = opt(c.freeze_offline_policy);
  j["bt_zeta_a"] = c.bt_zeta_a;
  j["bt_epsilon"] = c.bt_epsilon;
  j["jsrl_max_guide_steps"] = c.jsrl_max_guide_steps;
  j["offline_algo"] = to_string(c.offline_algo);
  j["online_algo"] = to_string(c.online_algo);
  j["offline_steps"] = c.offline_steps;
  j["online_steps"] = c.online_steps;
  j["expectile"] = opt(c.expectile);
  j["inv_temperature"] = opt(c.inv_temperature);
  j["weight_max"] = c.weight_max;
  j["discount"] = c.discount;
  j["target_entropy"] = opt(c.target_entropy);
  j["batch_size"] = c.batch_size;
  j["hidden"] = c.hidden;
  j["lr_critic"] = c.lr_critic;
  j["lr_actor"] = c.lr_actor;
  j["lr_entropy"] = c.lr_entropy;
  j["target_update_speed"] = c.target_update_speed;
  j["buffer_capacity"] = c.buffer_capacity;
  j["initial_collection_steps"] = c.initial_collection_steps;
  j["updates_per_env_step"] = c.updates_per_env_step;
  j["offline_ratio"] = c.offline_ratio;
  j["eval_interval"] = c.eval_interval;
  j["eval_episodes"] = c.eval_episodes;
  j["offline_eval_interval"] = c.offline_eval_interval;
  j["usage_bucket"] = c.usage_bucket;
  j["seed"] = c.seed;
  return j;
}

namespace detail
{

template<typename T>
void read_field(const Json & j, const char * key, T & out)
{
  try {
    out = j.get<T>();
  } catch (const nlohmann::json::exception & e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

template<typename T>
void read_field(const Json & j, const char * key, std::optional<T> & out)
{
  if (j.is_null()) {
    out.reset();
    return;
  }
  T v{};
  read_field(j, key, v);
  out = v;
}

}  // namespace detail

/// Applies the keys present in `j` onto `c`; unknown keys are rejected.
inline void apply_json(RunConfig & c, const Json & j)
{
  if (!j.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  for (const auto & [key, v] : j.items()) {
    const char * k = key.c_str();
    using detail::read_field;
    if (key == "label") {read_field(v, k, c.label);}
    else if (key == "env_id") {read_field(v, k, c.env_id);}
    else if (key == "maze_layout") {read_field(v, k, c.maze_layout);}
    else if (key == "dataset_path") {read_field(v, k, c.dataset_path);}
    else if (key == "dataset_grade") {read_field(v, k, c.dataset_grade);}
    else if (key == "dataset_size") {read_field(v, k, c.dataset_size);}
    else if (key == "dataset_seed") {read_field(v, k, c.dataset_seed);}
    else if (key == "checkpoint_path") {read_field(v, k, c.checkpoint_path);}
    else if (key == "strategy") {
      std::string s;
      read_field(v, k, s);
      c.strategy = strategy_from_string(s);
    }
    else if (key == "use_offline_buffer") {read_field(v, k, c.use_offline_buffer);}
    else if (key == "transfer_critic") {read_field(v, k, c.transfer_critic);}
    else if (key == "transfer_policy") {read_field(v, k, c.transfer_policy);}
    else if (key == "freeze_offline_policy") {read_field(v, k, c.freeze_offline_policy);}
    else if (key == "bt_zeta_a") {read_field(v, k, c.bt_zeta_a);}
    else if (key == "bt_epsilon") {read_field(v, k, c.bt_epsilon);}
    else if (key == "jsrl_max_guide_steps") {read_field(v, k, c.jsrl_max_guide_steps);}
    else if (key == "offline_algo" || key == "online_algo") {
      std::string s;
      read_field(v, k, s);
      if (s != "iql" && !(s == "bc" && key == "offline_algo") && !(s == "sac" && key == "online_algo")) {
        throw ConfigError("config field '" + key + "': unsupported algorithm '" + s + "'");
      }
      if (key == "offline_algo") {
        c.offline_algo = s == "bc" ? OfflineAlgo::BC : OfflineAlgo::IQL;
      } else {
        c.online_algo = s == "sac" ? OnlineAlgo::SAC : OnlineAlgo::IQL;
      }
    }
    else if (key == "offline_steps") {read_field(v, k, c.offline_steps);}
    else if (key == "online_steps") {read_field(v, k, c.online_steps);}
    else if (key == "expectile") {read_field(v, k, c.expectile);}
    else if (key == "inv_temperature") {read_field(v, k, c.inv_temperature);}
    else if (key == "weight_max") {read_field(v, k, c.weight_max);}
    else if (key == "discount") {read_field(v, k, c.discount);}
    else if (key == "target_entropy") {read_field(v, k, c.target_entropy);}
    else if (key == "batch_size") {read_field(v, k, c.batch_size);}
    else if (key == "hidden") {read_field(v, k, c.hidden);}
    else if (key == "lr_critic") {read_field(v, k, c.lr_critic);}
    else if (key == "lr_actor") {read_field(v, k, c.lr_actor);}
    else if (key == "lr_entropy") {read_field(v, k, c.lr_entropy);}
    else if (key == "target_update_speed") {read_field(v, k, c.target_update_speed);}
    else if (key == "buffer_capacity") {read_field(v, k, c.buffer_capacity);}
    else if (key == "initial_collection_steps") {read_field(v, k, c.initial_collection_steps);}
    else if (key == "updates_per_env_step") {read_field(v, k, c.updates_per_env_step);}
    else if (key == "offline_ratio") {read_field(v, k, c.offline_ratio);}
    else if (key == "eval_interval") {read_field(v, k, c.eval_interval);}
    else if (key == "eval_episodes") {read_field(v, k, c.eval_episodes);}
    else if (key == "offline_eval_interval") {read_field(v, k, c.offline_eval_interval);}
    else if (key == "usage_bucket") {read_field(v, k, c.usage_bucket);}
    else if (key == "seed") {read_field(v, k, c.seed);}
    else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

inline RunConfig config_from_json(const Json & j)
{
  RunConfig c;
  apply_json(c, j);
  return c;
}

/**
 * Applies one `key=value` override. The value is parsed as JSON when it parses,
 * otherwise taken as a bare string (so `strategy=pex` works unquoted).
 */
inline void apply_override(RunConfig & c, const std::string & assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) {
    value = text;
  }
  Json patch;
  patch[key] = value;
  apply_json(c, patch);
}

inline RunConfig load_config(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config '" + path + "'");
  }
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError("config '" + path + "' is not valid JSON");
  }
  return config_from_json(j);
}

/// FNV-1a 64 of the canonical (sorted-key) JSON dump, as 16 hex digits.
inline std::string config_hash(const RunConfig & c)
{
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pex

#endif  // PEX_CONFIG_HPP_
