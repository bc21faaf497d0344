#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "json.hpp"
#include "srop/dataset.hpp"
#include "srop/fields.hpp"
#include "srop/model.hpp"
#include "srop/rng.hpp"
#include "test_support.hpp"

using namespace srop;
using srop::testing::read_bytes;
using srop::testing::TempDir;
using srop::testing::write_bytes;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string("\"") + SROP_CLI_PATH + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_bytes(out);
  r.err = read_bytes(err);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

const char* kTinyConfig = R"({
  "experiment": {"name": "cli-test"},
  "model": {"variant": "two_net", "K": 4, "branch": {"widths": [8], "lstm_hidden": 4},
            "trunk": {"widths": [8]}},
  "train": {"epochs": 2, "batch_size": 2, "seed": 3}
})";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    const fs::path d = dir_->path();
    write_bytes(d / "tiny.json", kTinyConfig);
    ASSERT_EQ(cli("generate --problem exp1 --n-samples 4 --seed 1 --out " + q(d / "e1.srop"), d).code,
              0);
    const CliRun t = cli("train --dataset " + q(d / "e1.srop") + " --config " + q(d / "tiny.json") +
                          " --out " + q(d / "run"),
                      d);
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path root() { return dir_->path(); }
  static TempDir* dir_;
};

TempDir* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, GenerateWritesDefaultExp1Resolutions) {
  const Dataset ds = read_dataset(root() / "e1.srop");
  EXPECT_EQ(ds.samples.size(), 4u);
  EXPECT_EQ(ds.header.lr_shape, (std::vector<std::size_t>{40, 16}));
  EXPECT_EQ(ds.header.hr_frames, 80u);
  EXPECT_EQ(ds.header.hr_query_count, 64u);
}

TEST_F(Cli, GenerateIsByteReproducible) {
  const fs::path d = root();
  ASSERT_EQ(cli("generate --problem exp1 --n-samples 4 --seed 1 --out " + q(d / "again.srop"), d)
                .code,
            0);
  EXPECT_EQ(read_bytes(d / "again.srop"), read_bytes(d / "e1.srop"));
}

TEST_F(Cli, GenerateZeroSamplesSucceeds) {
  const fs::path d = root();
  const CliRun r = cli("generate --problem exp3 --n-samples 0 --seed 1 --out " + q(d / "none.srop"), d);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_dataset(d / "none.srop").samples.size(), 0u);
}

TEST_F(Cli, TrainWritesRunDirectory) {
  const fs::path run = root() / "run";
  for (const char* f : {"checkpoint.ckpt", "loss.csv", "config.json", "train_summary.json"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  const std::string csv = read_bytes(run / "loss.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  const fs::path d = root();
  write_bytes(d / "bad.json", R"({"train": {"epochs": 1, "learning_rat": 0.1}})");
  const CliRun r = cli("train --dataset " + q(d / "e1.srop") + " --config " + q(d / "bad.json") +
                        " --out " + q(d / "badrun"),
                    d);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("learning_rat"), std::string::npos) << r.err;
  EXPECT_EQ(cli("generate --problem exp9 --n-samples 1 --seed 1 --out " + q(d / "x.srop"), d).code,
            2);
  EXPECT_EQ(cli("generate --n-samples 1", d).code, 2);
}

TEST_F(Cli, FormatErrorsExitThree) {
  const fs::path d = root();
  const std::string bytes = read_bytes(d / "e1.srop");
  write_bytes(d / "cut.srop", bytes.substr(0, bytes.size() - 100));
  const CliRun r = cli("evaluate --checkpoint " + q(d / "run" / "checkpoint.ckpt") + " --dataset " +
                        q(d / "cut.srop") + " --report " + q(d / "r.json"),
                    d);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("byte offset"), std::string::npos) << r.err;
  write_bytes(d / "junk.ckpt", "garbage\n");
  EXPECT_EQ(cli("evaluate --checkpoint " + q(d / "junk.ckpt") + " --dataset " + q(d / "e1.srop") +
                    " --report " + q(d / "r.json"),
                d)
                .code,
            3);
}

TEST_F(Cli, IncompatibleDatasetIsReported) {
  const fs::path d = root();
  ASSERT_EQ(cli("generate --problem exp3 --n-samples 1 --seed 2 --out " + q(d / "e3.srop"), d).code,
            0);
  const CliRun r = cli("evaluate --checkpoint " + q(d / "run" / "checkpoint.ckpt") + " --dataset " +
                        q(d / "e3.srop") + " --report " + q(d / "r.json"),
                    d);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("incompatible"), std::string::npos) << r.err;
}

TEST_F(Cli, EvaluateReportsModelAndBaseline) {
  const fs::path d = root();
  const CliRun r = cli("evaluate --checkpoint " + q(d / "run" / "checkpoint.ckpt") + " --dataset " +
                        q(d / "e1.srop") + " --report " + q(d / "rep.json"),
                    d);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_bytes(d / "rep.json"));
  EXPECT_EQ(j["per_sample"]["rel_l2"].size(), 4u);
  EXPECT_EQ(j["baseline"]["method"], "bicubic_grid");
  EXPECT_GT(j["model"]["mean"].get<double>(), 0.0);
}

TEST_F(Cli, PredictOnTheLowResolutionGrid) {
  const fs::path d = root();
  const CliRun r = cli("predict --checkpoint " + q(d / "run" / "checkpoint.ckpt") + " --dataset " +
                        q(d / "e1.srop") + " --sample 1 --grid 16,40 --out " + q(d / "pl"),
                    d);
  ASSERT_EQ(r.code, 0) << r.err;
  const Field f = read_field(d / "pl" / "prediction.field");
  EXPECT_EQ(f.shape, (std::vector<std::size_t>{40, 16}));
  EXPECT_EQ(read_field(d / "pl" / "lr.field").shape, (std::vector<std::size_t>{40, 16}));
  const CliRun bad = cli("predict --checkpoint " + q(d / "run" / "checkpoint.ckpt") + " --dataset " +
                          q(d / "e1.srop") + " --sample 9 --grid 16,40 --out " + q(d / "pl"),
                      d);
  EXPECT_EQ(bad.code, 2);
}

TEST_F(Cli, PredictOnAFinerGridThanTraining) {
  const fs::path d = root();
  ASSERT_EQ(cli("generate --problem exp2 --n-samples 2 --seed 4 --out " + q(d / "e2.srop"), d).code,
            0);
  ASSERT_EQ(cli("train --dataset " + q(d / "e2.srop") + " --config " + q(d / "tiny.json") +
                    " --out " + q(d / "run2"),
                d)
                .code,
            0);
  const CliRun r = cli("predict --checkpoint " + q(d / "run2" / "checkpoint.ckpt") + " --dataset " +
                        q(d / "e2.srop") + " --sample 0 --grid 96,100 --out " + q(d / "p2"),
                    d);
  ASSERT_EQ(r.code, 0) << r.err;
  const Field f = read_field(d / "p2" / "prediction.field");
  EXPECT_EQ(f.shape, (std::vector<std::size_t>{100, 96}));
  for (float v : f.values) EXPECT_TRUE(std::isfinite(v));
  const CliRun plot = cli("plot --field " + q(d / "p2" / "prediction.field") + " --out " +
                           q(d / "p2" / "plots"),
                       d);
  ASSERT_EQ(plot.code, 0) << plot.err;
  EXPECT_TRUE(fs::exists(d / "p2" / "plots" / "panels.json"));
}

TEST_F(Cli, TruthOracleCheckpointEvaluatesToZeroError) {
  const fs::path d = root();
  DatasetConfig dc;
  dc.problem = Problem::exp3;
  dc.n_samples = 3;
  dc.seed = 5;
  dc.alpha_range = Range{0.0, 0.0};
  const Dataset ds = generate_dataset(dc);
  write_dataset(ds, d / "flat.srop");

  ModelConfig mc;
  mc.variant = Variant::three_net;
  mc.K = 4;
  mc.normalization = Normalization::none;
  mc.branch.widths = {8};
  mc.sensor.widths = {8};
  mc.trunk.widths = {8};
  Checkpoint ckpt;
  ckpt.spec = make_model_spec(ds.header, mc);
  Rng rng(5);
  ckpt.params = init_params(ckpt.spec, rng);
  for (const char* name : {"branch.mlp1.weight", "branch.mlp1.bias"}) {
    for (double& v : const_cast<Tensor&>(ckpt.params.at(name)).mutable_values()) v = 0.0;
  }
  const_cast<Tensor&>(ckpt.params.at("combination_bias")).mutable_values()[0] = 0.5;
  save_checkpoint(ckpt, d / "oracle.ckpt");

  const CliRun r = cli("evaluate --checkpoint " + q(d / "oracle.ckpt") + " --dataset " +
                        q(d / "flat.srop") + " --report " + q(d / "oracle.json"),
                    d);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_bytes(d / "oracle.json"));
  for (const auto& v : j["per_sample"]["rel_l2"]) EXPECT_EQ(v.get<double>(), 0.0);
  EXPECT_EQ(j["baseline"]["method"], "idw_scattered");
}
