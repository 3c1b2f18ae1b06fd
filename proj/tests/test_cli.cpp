#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "pex/harness.hpp"

namespace fs = std::filesystem;
using namespace pex;

namespace
{

const char * cli()
{
  const char * p = std::getenv("PEX_CLI");
  return p == nullptr ? "pex_cli" : p;
}

int run(const std::string & args)
{
  const std::string cmd = std::string(cli()) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test
{
protected:
  static fs::path dir_;

  static void SetUpTestSuite()
  {
    dir_ = fs::temp_directory_path() / ("pex_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.json") << R"({
      "env_id": "linereach", "dataset_size": 1000, "offline_steps": 100, "online_steps": 200,
      "initial_collection_steps": 50, "eval_interval": 100, "eval_episodes": 2,
      "offline_eval_interval": 50, "hidden": [8], "batch_size": 16, "buffer_capacity": 500,
      "usage_bucket": 50
    })";
    std::ofstream(dir_ / "garbage.pexd") << "not a dataset";
  }

  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string tiny() { return "--config " + (dir_ / "tiny.json").string(); }
  static std::string out(const std::string & sub) { return " --out-dir " + (dir_ / sub).string(); }
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, HelpAndUsageErrors)
{
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("train-offline --bogus-flag"), 2);
}

TEST_F(Cli, ConfigErrorsExitTwo)
{
  EXPECT_EQ(run("train-offline " + tiny() + " --set no_such_key=1" + out("c1")), 2);
  EXPECT_EQ(run("train-offline " + tiny() + " --set strategy=scratch --set use_offline_buffer=true" + out("c2")), 2);
  EXPECT_EQ(run("gen-data --config " + (dir_ / "missing.json").string() + out("c3")), 2);
  EXPECT_EQ(run("gen-data " + tiny() + " --set env_id=nowhere" + out("c4")), 2);
  EXPECT_EQ(run("eval " + tiny() + out("c5")), 2);
}

TEST_F(Cli, DataErrorsExitThree)
{
  EXPECT_EQ(run("train-offline " + tiny() + " --set dataset_path=" + (dir_ / "garbage.pexd").string() + out("d1")), 3);
  EXPECT_EQ(run("eval " + tiny() + " --checkpoint " + (dir_ / "absent.pexc").string()), 3);
}

TEST_F(Cli, FullPipeline)
{
  ASSERT_EQ(run("gen-data " + tiny() + out("data")), 0);
  const fs::path ds = dir_ / "data" / "dataset.pexd";
  EXPECT_EQ(load_dataset(ds.string()).size(), 1000u);

  const std::string with_data = tiny() + " --set dataset_path=" + ds.string();
  ASSERT_EQ(run("train-offline " + with_data + " --seed 3" + out("off")), 0);
  const fs::path ckpt = dir_ / "off" / "offline.pexc";
  EXPECT_NO_THROW(load_checkpoint(ckpt.string()).get("actor"));
  std::ifstream side(dir_ / "off" / "offline.json");
  const Json j = Json::parse(side);
  EXPECT_EQ(j.at("dataset_checksum").get<std::uint32_t>(), load_dataset(ds.string()).checksum());
  EXPECT_EQ(j.at("config").at("seed").get<std::uint64_t>(), 3u);

  ASSERT_EQ(run("eval " + tiny() + " --checkpoint " + ckpt.string() + " --episodes 2"), 0);

  ASSERT_EQ(run("train-online " + with_data + " --seed 3 --checkpoint " + ckpt.string() + out("on")), 0);
  const fs::path runs = dir_ / "on" / "runs";
  EXPECT_TRUE(fs::exists(dir_ / "on" / "aggregate.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "on" / "online.pexc"));
  EXPECT_TRUE(fs::exists(runs / "pex_linereach_s3.json"));

  ASSERT_EQ(run("plot " + (runs / "pex_linereach_s3.json").string() + " --out-dir " + (dir_ / "plot").string()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "plot" / "aggregate.svg"));
  EXPECT_EQ(run("plot " + (dir_ / "garbage.pexd").string() + " --out-dir " + (dir_ / "plot2").string()), 3);
}

TEST_F(Cli, MissingCheckpointForTransferIsRejected)
{
  EXPECT_EQ(run("train-online " + tiny() + out("m1")), 3);
}
