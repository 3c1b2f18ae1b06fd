#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pex/harness.hpp"

namespace fs = std::filesystem;
using namespace pex;

namespace
{

struct CommonOptions
{
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

void add_common(CLI::App * cmd, CommonOptions & o)
{
  cmd->add_option("-c,--config", o.config_path, "JSON run configuration");
  cmd->add_option("--set", o.overrides, "key=value override, applied after the config file")->take_all();
  cmd->add_option("--seed", o.seed, "run seed (overrides the config)");
  cmd->add_option("-o,--out-dir", o.out_dir, "output directory");
}

RunConfig resolve_config(const CommonOptions & o)
{
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  for (const auto & s : o.overrides) {
    apply_override(c, s);
  }
  if (o.seed) {
    c.seed = *o.seed;
  }
  validate(c);
  return c;
}

std::unique_ptr<Env> env_for(const RunConfig & c)
{
  try {
    return make_env(c);
  } catch (const std::invalid_argument & e) {
    throw ConfigError(e.what());
  }
}

fs::path ensure_dir(const std::string & dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw DataError(DataErrorCode::Io, "cannot create " + dir + ": " + ec.message());
  }
  return fs::path(dir);
}

void write_json(const fs::path & path, const Json & j)
{
  std::ofstream out(path);
  out << j.dump(1) << '\n';
  if (!out) {
    throw DataError(DataErrorCode::Io, "cannot write " + path.string());
  }
}

Json evals_json(const std::vector<EvalRecord> & evals)
{
  Json a = Json::array();
  for (const auto & e : evals) {
    a.push_back({{"step", e.env_step}, {"mean_return", e.mean_return}, {"normalized_score", e.normalized_score}});
  }
  return a;
}

int gen_data(const CommonOptions & o)
{
  RunConfig c = resolve_config(o);
  c.dataset_path.clear();
  auto env = env_for(c);
  const OfflineDataset ds = build_dataset(c, *env);
  const fs::path path = ensure_dir(o.out_dir) / "dataset.pexd";
  save_dataset(ds, path.string());
  std::printf("%s: %zu transitions, checksum %08x\n", path.c_str(), ds.size(), ds.checksum());
  return 0;
}

int train_offline(const CommonOptions & o)
{
  const RunConfig c = resolve_config(o);
  auto env = env_for(c);
  const OfflineDataset data = build_dataset(c, *env);
  const OfflineResult r = run_offline_phase(c, *env, data);
  const fs::path dir = ensure_dir(o.out_dir);
  save_checkpoint(r.checkpoint, (dir / "offline.pexc").string());
  Json side;
  side["config_hash"] = r.config_hash;
  side["dataset_checksum"] = r.dataset_checksum;
  side["config"] = to_json(c);
  side["evals"] = evals_json(r.evals);
  write_json(dir / "offline.json", side);
  std::printf("offline: %s, final normalized score %.2f\n", (dir / "offline.pexc").c_str(), final_score(r.evals));
  return 0;
}

int train_online(const CommonOptions & o, const std::string & checkpoint)
{
  RunConfig c = resolve_config(o);
  if (!checkpoint.empty()) {
    c.checkpoint_path = checkpoint;
  }
  auto env = env_for(c);
  const BridgeFlags flags = resolve_flags(c);
  std::optional<OfflineDataset> data;
  if (flags.use_offline_buffer) {
    data = build_dataset(c, *env);
  }
  std::optional<Checkpoint> ckpt;
  if (!c.checkpoint_path.empty()) {
    ckpt = load_checkpoint(c.checkpoint_path);
  }
  const OnlineResult r = run_online_phase(c, *env, data ? &*data : nullptr, ckpt ? &*ckpt : nullptr);
  const fs::path dir = ensure_dir(o.out_dir);
  emit_outputs({r.log}, dir, static_cast<std::size_t>(c.usage_bucket));
  save_checkpoint(r.checkpoint, (dir / "online.pexc").string());
  std::printf("online: %s, final normalized score %.2f\n", r.log.label.c_str(), final_score(r.log));
  return 0;
}

int eval_cmd(const CommonOptions & o, const std::string & checkpoint, std::uint64_t episodes)
{
  const RunConfig c = resolve_config(o);
  const std::string path = checkpoint.empty() ? c.checkpoint_path : checkpoint;
  if (path.empty()) {
    throw ConfigError("eval needs --checkpoint or checkpoint_path");
  }
  auto env = env_for(c);
  const Actor actor = load_actor(load_checkpoint(path), "actor", env->spec());
  Rng rng(mix_seed(c.seed, kOnlineEvalStream));
  const EvalRecord rec = make_record(env->spec(), 0, evaluate(*env, actor, episodes, rng));
  Json j;
  j["checkpoint"] = path;
  j["env_id"] = env->spec().env_id;
  j["mean_return"] = rec.mean_return;
  j["normalized_score"] = rec.normalized_score;
  j["episode_returns"] = rec.episode_returns;
  std::cout << j.dump(1) << '\n';
  return 0;
}

int plot_cmd(const std::vector<std::string> & logs, const std::string & out_dir, std::uint64_t bucket)
{
  std::vector<RunLog> runs;
  for (const auto & p : logs) {
    std::ifstream in(p);
    if (!in) {
      throw DataError(DataErrorCode::Io, "cannot open " + p);
    }
    const Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) {
      throw DataError(DataErrorCode::Mismatch, p + " is not valid JSON");
    }
    runs.push_back(run_log_from_json(j));
  }
  emit_outputs(runs, out_dir, static_cast<std::size_t>(bucket));
  std::printf("plotted %zu runs into %s\n", runs.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Offline-to-online RL experiments with policy expansion"};
  app.require_subcommand(1);

  CommonOptions gen_o, off_o, on_o, eval_o;
  std::string on_ckpt, eval_ckpt, plot_out = ".";
  std::uint64_t eval_episodes = 10;
  std::uint64_t plot_bucket = 1000;
  std::vector<std::string> plot_logs;

  auto * gen = app.add_subcommand("gen-data", "generate an offline dataset file (dataset.pexd)");
  add_common(gen, gen_o);
  auto * off = app.add_subcommand("train-offline", "offline training; writes offline.pexc and offline.json");
  add_common(off, off_o);
  auto * on = app.add_subcommand("train-online", "online fine-tuning; writes run CSV/JSON, charts and online.pexc");
  add_common(on, on_o);
  on->add_option("--checkpoint", on_ckpt, "offline checkpoint to transfer from");
  auto * ev = app.add_subcommand("eval", "greedy evaluation of a checkpoint's actor");
  add_common(ev, eval_o);
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate");
  ev->add_option("--episodes", eval_episodes, "episodes")->check(CLI::PositiveNumber);
  auto * plot = app.add_subcommand("plot", "aggregate run JSON logs into CSV and SVG");
  plot->add_option("logs", plot_logs, "run log JSON files")->required();
  plot->add_option("-o,--out-dir", plot_out, "output directory");
  plot->add_option("--usage-bucket", plot_bucket, "env steps per usage bucket")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      return gen_data(gen_o);
    }
    if (*off) {
      return train_offline(off_o);
    }
    if (*on) {
      return train_online(on_o, on_ckpt);
    }
    if (*ev) {
      return eval_cmd(eval_o, eval_ckpt, eval_episodes);
    }
    return plot_cmd(plot_logs, plot_out, plot_bucket);
  } catch (const ConfigError & e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError & e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception & e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
