/* Copyright 2026 The dcss Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "dcss/checkpoint.hpp"
#include "dcss/supernet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

const char* dcss_bin() {
  const char* bin = std::getenv("DCSS_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "DCSS_BIN must point at the dcss binary");
  return bin;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "dcss_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CmdResult run_cli(const std::string& args, const std::string& env = "") {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += std::string(dcss_bin()) + " " + args + " >" + out.string() + " 2>" +
         err.string();
  const int rc = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WEXITSTATUS(rc);
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

fs::path write_config(const std::string& name, const json& j) {
  const fs::path p = work_dir() / name;
  std::ofstream os(p);
  os << j.dump(2);
  return p;
}

json tiny_config() {
  return {
      {"dataset",
       {{"num_classes", 5}, {"height", 32}, {"width", 32},
        {"count_train_a", 8}, {"count_train_b", 4}, {"count_val", 2},
        {"seed", 71}}},
      {"supernet",
       {{"num_layers", 1}, {"base_width", 4}, {"max_in_degree", 3},
        {"channel_ratio", 0.25}, {"n_paths", 3}, {"num_classes", 5}}},
      {"search", {{"epochs", 2}, {"batch_size", 2}, {"seed", 72}}},
      {"train", {{"epochs", 1}, {"batch_size", 2}, {"seed", 73}}},
      {"correlation", {{"n_trials", 2}, {"base_seed", 74}, {"jobs", 2}}},
  };
}

}  // namespace

TEST_CASE("cli: gen-data writes splits, manifest, and stable hashes") {
  json cfg = tiny_config();
  // The default-config manifest must list the documented 200/100/50 counts.
  json defaults;
  defaults["dataset"] = json::object();
  const fs::path defcfg = write_config("default_cfg.json", defaults);
  const fs::path defdir = work_dir() / "data_default";
  CmdResult r0 = run_cli("gen-data --config " + defcfg.string() + " --out " +
                         defdir.string());
  REQUIRE(r0.exit_code == 0);
  json manifest0 = json::parse(read_file(defdir / "manifest.json"));
  CHECK(manifest0.at("splits").at("trainA").at("count") == 200);
  CHECK(manifest0.at("splits").at("trainB").at("count") == 100);
  CHECK(manifest0.at("splits").at("val").at("count") == 50);

  const fs::path cfgp = write_config("cfg.json", cfg);
  const fs::path d1 = work_dir() / "data1";
  const fs::path d2 = work_dir() / "data2";
  CmdResult r1 = run_cli("gen-data --config " + cfgp.string() + " --out " +
                         d1.string());
  REQUIRE(r1.exit_code == 0);
  CHECK(fs::exists(d1 / "trainA.bin"));
  CHECK(fs::exists(d1 / "trainB.bin"));
  CHECK(fs::exists(d1 / "val.bin"));
  CHECK(fs::exists(d1 / "resolved_config.json"));

  // Same config into a second directory: identical split hashes.
  CmdResult r2 = run_cli("gen-data --config " + cfgp.string() + " --out " +
                         d2.string());
  REQUIRE(r2.exit_code == 0);
  json m1 = json::parse(read_file(d1 / "manifest.json"));
  json m2 = json::parse(read_file(d2 / "manifest.json"));
  CHECK(m1.at("splits") == m2.at("splits"));
  CHECK(read_file(d1 / "trainA.bin") == read_file(d2 / "trainA.bin"));

  // Refuses to clobber without --force.
  CmdResult r3 = run_cli("gen-data --config " + cfgp.string() + " --out " +
                         d1.string());
  CHECK(r3.exit_code == 4);
  CHECK(r3.err.find("--force") != std::string::npos);
  CmdResult r4 = run_cli("gen-data --config " + cfgp.string() + " --out " +
                         d1.string() + " --force");
  CHECK(r4.exit_code == 0);
}

TEST_CASE("cli: config validation failures exit with code 2") {
  json cfg = tiny_config();
  cfg["search"]["lr_q"] = 0.5;  // unknown key
  const fs::path bad = write_config("bad_cfg.json", cfg);
  CmdResult r = run_cli("gen-data --config " + bad.string() + " --out " +
                        (work_dir() / "never").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("search.lr_q") != std::string::npos);

  const fs::path garbled = work_dir() / "garbled.json";
  std::ofstream(garbled) << "{ not json";
  CmdResult g = run_cli("gen-data --config " + garbled.string() + " --out " +
                        (work_dir() / "never2").string());
  CHECK(g.exit_code == 2);

  CmdResult missing = run_cli("report --in " + (work_dir() / "nodir").string());
  CHECK(missing.exit_code == 2);
}

TEST_CASE("cli: search smoke runs, checkpoints, per-epoch csv rows") {
  json cfg = tiny_config();
  const fs::path cfgp = write_config("cfg_search.json", cfg);
  const fs::path data = work_dir() / "data_s";
  // Subcases re-enter this body; --force keeps the generation idempotent.
  REQUIRE(run_cli("gen-data --config " + cfgp.string() + " --out " +
                  data.string() + " --force")
              .exit_code == 0);

  SUBCASE("epochs=0 still emits a valid checkpoint") {
    json zero = cfg;
    zero["search"]["epochs"] = 0;
    const fs::path zp = write_config("cfg_zero.json", zero);
    const fs::path out = work_dir() / "run_zero";
    fs::remove_all(out);
    CmdResult r = run_cli("search --config " + zp.string() + " --data " +
                          data.string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(out / "best.ckpt"));
    dcss::Checkpoint ckpt = dcss::read_checkpoint((out / "best.ckpt").string());
    CHECK(ckpt.index.at("kind") == "supernet");
    const std::string csv = read_file(out / "metrics.csv");
    CHECK(csv ==
          "epoch,trainA_ce,trainB_ce,L_alpha,L_beta,L_con,tau,val_miou\n");
  }

  SUBCASE("two epochs produce two metric rows and byte-stable reruns") {
    const fs::path o1 = work_dir() / "run_a";
    const fs::path o2 = work_dir() / "run_b";
    fs::remove_all(o1);
    fs::remove_all(o2);
    REQUIRE(run_cli("search --config " + cfgp.string() + " --data " +
                    data.string() + " --out " + o1.string())
                .exit_code == 0);
    REQUIRE(run_cli("search --config " + cfgp.string() + " --data " +
                    data.string() + " --out " + o2.string())
                .exit_code == 0);
    std::istringstream csv(read_file(o1 / "metrics.csv"));
    std::string line;
    int rows = -1;  // discount the header
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 2);
    CHECK(read_file(o1 / "best.ckpt") == read_file(o2 / "best.ckpt"));
    CHECK(read_file(o1 / "last.ckpt") == read_file(o2 / "last.ckpt"));
    CHECK(read_file(o1 / "metrics.csv") == read_file(o2 / "metrics.csv"));
  }

  SUBCASE("an interrupted run resumes bit for bit") {
    const fs::path straight = work_dir() / "run_straight";
    const fs::path resumed = work_dir() / "run_resumed";
    fs::remove_all(straight);
    fs::remove_all(resumed);
    REQUIRE(run_cli("search --config " + cfgp.string() + " --data " +
                    data.string() + " --out " + straight.string())
                .exit_code == 0);
    REQUIRE(run_cli("search --config " + cfgp.string() + " --data " +
                    data.string() + " --out " + resumed.string() +
                    " --stop-after 1")
                .exit_code == 0);
    REQUIRE(run_cli("search --config " + cfgp.string() + " --data " +
                    data.string() + " --out " + resumed.string() + " --resume")
                .exit_code == 0);
    CHECK(read_file(straight / "last.ckpt") == read_file(resumed / "last.ckpt"));
    CHECK(read_file(straight / "metrics.csv") ==
          read_file(resumed / "metrics.csv"));
  }

  SUBCASE("missing data directory is an i/o failure") {
    CmdResult r = run_cli("search --config " + cfgp.string() + " --data " +
                          (work_dir() / "no_data").string() + " --out " +
                          (work_dir() / "run_x").string());
    CHECK(r.exit_code == 4);
  }
}

TEST_CASE("cli: decode emits schema-conforming json, strict mode warns") {
  // Craft a checkpoint with every beta negative.
  dcss::SupernetSpec spec;
  spec.num_layers = 1;
  spec.base_width = 4;
  dcss::Supernet net(spec, 123);
  dcss::ArchParams params = net.arch_params();
  for (auto& [id, b] : params.beta) {
    for (auto& v : b) v = -1.0;
  }
  net.set_arch_params(params);
  const fs::path ckpt = work_dir() / "allneg.ckpt";
  net.save(ckpt.string());

  const fs::path strict_arch = work_dir() / "strict_arch.json";
  CmdResult r = run_cli("decode --checkpoint " + ckpt.string() + " --out " +
                        strict_arch.string() + " --strict");
  REQUIRE(r.exit_code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  json arch = json::parse(read_file(strict_arch));
  CHECK(arch.at("edges").empty());
  for (const char* key : {"nodes", "edges", "edge_betas", "spec", "provenance"}) {
    CHECK(arch.contains(key));
  }

  // Fallback mode keeps one edge per visited node and exports a dot view.
  const fs::path fb_arch = work_dir() / "fb_arch.json";
  const fs::path dot = work_dir() / "fb_arch.dot";
  CmdResult r2 = run_cli("decode --checkpoint " + ckpt.string() + " --out " +
                         fb_arch.string() + " --dot " + dot.string());
  REQUIRE(r2.exit_code == 0);
  json arch2 = json::parse(read_file(fb_arch));
  CHECK(arch2.at("edges").size() == 4);  // one per final node
  CHECK(read_file(dot).find("digraph") != std::string::npos);
  CHECK(arch2.at("provenance").get<std::string>().size() == 64);  // sha256 hex
}

TEST_CASE("cli: train smoke and the epochs=0 path") {
  json cfg = tiny_config();
  const fs::path cfgp = write_config("cfg_train.json", cfg);
  const fs::path data = work_dir() / "data_t";
  REQUIRE(run_cli("gen-data --config " + cfgp.string() + " --out " +
                  data.string())
              .exit_code == 0);
  const fs::path run = work_dir() / "run_t";
  REQUIRE(run_cli("search --config " + cfgp.string() + " --data " +
                  data.string() + " --out " + run.string())
              .exit_code == 0);
  const fs::path arch = work_dir() / "arch_t.json";
  REQUIRE(run_cli("decode --checkpoint " + (run / "best.ckpt").string() +
                  " --out " + arch.string())
              .exit_code == 0);

  json zero = cfg;
  zero["train"]["epochs"] = 0;
  const fs::path zp = write_config("cfg_train0.json", zero);
  const fs::path tout = work_dir() / "train_zero";
  CmdResult r = run_cli("train --arch " + arch.string() + " --config " +
                        zp.string() + " --data " + data.string() + " --out " +
                        tout.string());
  REQUIRE(r.exit_code == 0);
  json result = json::parse(read_file(tout / "result.json"));
  CHECK(result.at("t_miou").is_number());
  CHECK(fs::exists(tout / "weights.ckpt"));

  CmdResult missing = run_cli("train --arch " + (work_dir() / "none.json").string() +
                              " --config " + zp.string() + " --data " +
                              data.string() + " --out " + tout.string());
  CHECK(missing.exit_code == 4);
}

TEST_CASE("cli: correlate and report round trip") {
  json cfg = tiny_config();
  cfg["search"]["epochs"] = 1;
  const fs::path cfgp = write_config("cfg_corr.json", cfg);
  const fs::path out = work_dir() / "corr";
  CmdResult r = run_cli("correlate --config " + cfgp.string() + " --out " +
                        out.string() + " --jobs 2");
  REQUIRE(r.exit_code == 0);
  json report = json::parse(read_file(out / "report.json"));
  CHECK(report.at("records").size() == 2);
  CHECK(std::abs(report.at("tau").get<double>()) <= 1.0);
  CHECK(fs::exists(out / "scatter.csv"));

  CmdResult rep = run_cli("report --in " + out.string());
  CHECK(rep.exit_code == 0);
  CHECK(rep.out.find("S-mIoU") != std::string::npos);
}

TEST_CASE("cli: DCSS_SEED overrides every configured seed") {
  json cfg = tiny_config();
  const fs::path cfgp = write_config("cfg_env.json", cfg);
  json explicit_cfg = cfg;
  explicit_cfg["dataset"]["seed"] = 4242;
  const fs::path cfge = write_config("cfg_env_explicit.json", explicit_cfg);

  const fs::path denv = work_dir() / "data_env";
  const fs::path dexp = work_dir() / "data_exp";
  REQUIRE(run_cli("gen-data --config " + cfgp.string() + " --out " +
                  denv.string(),
                  "DCSS_SEED=4242")
              .exit_code == 0);
  REQUIRE(run_cli("gen-data --config " + cfge.string() + " --out " +
                  dexp.string())
              .exit_code == 0);
  CHECK(read_file(denv / "trainA.bin") == read_file(dexp / "trainA.bin"));
  // And it is actually different from the un-overridden dataset.
  const fs::path dplain = work_dir() / "data_plain";
  REQUIRE(run_cli("gen-data --config " + cfgp.string() + " --out " +
                  dplain.string())
              .exit_code == 0);
  CHECK(read_file(denv / "trainA.bin") != read_file(dplain / "trainA.bin"));
}
