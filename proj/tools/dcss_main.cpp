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
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dcss/config.hpp"
#include "dcss/correlation.hpp"
#include "dcss/decode.hpp"
#include "dcss/search.hpp"

namespace fs = std::filesystem;
using dcss::cat;

namespace {

// Exit-code contract: 0 success, 2 config error, 3 numeric failure, 4 I/O.
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw dcss::IoError(cat("cannot create output directory '", dir, "'"));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os.good()) throw dcss::IoError(cat("cannot write '", path, "'"));
  os << text;
}

// Timestamps and host details stay out of the result artifacts so those can
// be compared byte-for-byte across runs.
void append_log(const std::string& out_dir, const std::string& message) {
  std::ofstream os(out_dir + "/run.log", std::ios::app);
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[64];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  os << stamp << " " << message << "\n";
}

void echo_config(const dcss::RunConfig& cfg, const std::string& out_dir) {
  write_text(out_dir + "/resolved_config.json", cfg.to_json().dump(2) + "\n");
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 bool force) {
  dcss::RunConfig cfg = dcss::RunConfig::load(config_path);
  ensure_out_dir(out_dir);
  if (fs::exists(out_dir + "/manifest.json") && !force) {
    throw dcss::IoError(cat("'", out_dir,
                            "' already holds a dataset (use --force to "
                            "overwrite)"));
  }
  append_log(out_dir, "gen-data start");
  dcss::Dataset ds = dcss::generate_dataset(cfg.dataset);

  nlohmann::json manifest = {{"spec", cfg.dataset.to_json()},
                             {"splits", nlohmann::json::object()}};
  const std::vector<std::pair<std::string, const std::vector<dcss::SegSample>*>>
      splits = {{"trainA", &ds.train_a}, {"trainB", &ds.train_b}, {"val", &ds.val}};
  for (const auto& [name, samples] : splits) {
    const std::string file = name + ".bin";
    dcss::write_split(out_dir + "/" + file, cfg.dataset, name, *samples);
    manifest["splits"][name] = {{"file", file},
                                {"count", samples->size()},
                                {"sha256", dcss::sha256_file(out_dir + "/" + file)}};
  }
  write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  echo_config(cfg, out_dir);
  append_log(out_dir, "gen-data done");
  std::cout << "generated " << ds.train_a.size() << "/" << ds.train_b.size()
            << "/" << ds.val.size() << " samples (trainA/trainB/val) in "
            << out_dir << "\n";
  return 0;
}

int cmd_search(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir, bool resume, int stop_after) {
  dcss::RunConfig cfg = dcss::RunConfig::load(config_path);
  ensure_out_dir(out_dir);
  append_log(out_dir, resume ? "search resume" : "search start");
  dcss::Dataset ds = dcss::read_dataset_dir(data_dir);
  if (ds.spec.num_classes != cfg.supernet.num_classes) {
    throw dcss::ConfigError(cat("dataset at '", data_dir, "' has ",
                                ds.spec.num_classes,
                                " classes, supernet expects ",
                                cfg.supernet.num_classes));
  }
  echo_config(cfg, out_dir);
  try {
    dcss::SearchResult res = dcss::run_search(ds, cfg.supernet, cfg.search,
                                              out_dir, resume ? out_dir : "",
                                              stop_after);
    append_log(out_dir, "search done");
    std::printf("S-mIoU %.6f (best epoch %d); checkpoints in %s\n",
                res.best_val_miou, res.best_epoch, out_dir.c_str());
  } catch (const dcss::NumericError& e) {
    append_log(out_dir, cat("search aborted: ", e.what()));
    std::cerr << "numeric failure: " << e.what() << "\n"
              << "diagnostic snapshot: " << out_dir << "/diagnostic.ckpt\n";
    return kExitNumeric;
  }
  return 0;
}

int cmd_decode(const std::string& ckpt_path, const std::string& out_path,
               bool strict, const std::string& dot_path) {
  dcss::Checkpoint ckpt = dcss::read_checkpoint(ckpt_path);
  dcss::SupernetSpec spec;
  dcss::ArchParams params = dcss::arch_params_from_checkpoint(ckpt, &spec);
  const std::string provenance = dcss::sha256_file(ckpt_path);
  dcss::DecodedArchitecture arch =
      dcss::decode(params, spec, strict, provenance);
  if (arch.kept_edges.empty()) {
    std::cerr << "warning: strict decoding kept no connections (every beta "
                 "negative along the backward frontier)\n";
  }
  write_text(out_path, arch.to_json().dump(2) + "\n");
  if (!dot_path.empty()) write_text(dot_path, arch.to_dot());
  std::cout << "decoded " << arch.retained_nodes().size() << " nodes, "
            << arch.kept_edges.size() << " edges -> " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& arch_path, const std::string& config_path,
              const std::string& data_dir, const std::string& out_dir) {
  dcss::RunConfig cfg = dcss::RunConfig::load(config_path);
  std::ifstream is(arch_path);
  if (!is.good()) throw dcss::IoError(cat("cannot open '", arch_path, "'"));
  nlohmann::json aj;
  try {
    aj = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw dcss::ConfigError(cat("'", arch_path, "' is not valid JSON: ",
                                e.what()));
  }
  dcss::DecodedArchitecture arch = dcss::DecodedArchitecture::from_json(aj);
  ensure_out_dir(out_dir);
  append_log(out_dir, "train start");
  dcss::Dataset ds = dcss::read_dataset_dir(data_dir);
  echo_config(cfg, out_dir);
  dcss::StandaloneNet net(arch, cfg.train.seed);
  try {
    dcss::TrainResult res = dcss::train_standalone(net, ds, cfg.train, out_dir);
    nlohmann::json result = {{"t_miou", res.best_val_miou},
                             {"best_epoch", res.best_epoch},
                             {"epochs", cfg.train.epochs}};
    write_text(out_dir + "/result.json", result.dump(2) + "\n");
    append_log(out_dir, "train done");
    std::printf("T-mIoU %.6f (best epoch %d); weights in %s\n",
                res.best_val_miou, res.best_epoch, out_dir.c_str());
  } catch (const dcss::NumericError& e) {
    append_log(out_dir, cat("train aborted: ", e.what()));
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}

int cmd_correlate(const std::string& config_path, const std::string& out_dir,
                  int jobs_override) {
  dcss::RunConfig cfg = dcss::RunConfig::load(config_path);
  if (jobs_override > 0) cfg.correlation.jobs = jobs_override;
  ensure_out_dir(out_dir);
  append_log(out_dir, "correlate start");
  echo_config(cfg, out_dir);
  dcss::Dataset ds = dcss::generate_dataset(cfg.dataset);
  dcss::CorrelationReport report = dcss::run_correlation_study(
      ds, cfg.supernet, cfg.search, cfg.train, cfg.correlation, out_dir);
  append_log(out_dir, "correlate done");
  std::printf("trials %d (excluded %d)\n", report.n, report.excluded);
  if (report.degenerate) {
    std::printf("rho: undefined (%s), tau %.6f\n", report.note.c_str(),
                report.tau);
  } else if (report.n >= 2) {
    std::printf("rho %.6f, tau %.6f, ties %d\n", report.rho, report.tau,
                report.ties);
  } else {
    std::printf("%s\n", report.note.c_str());
  }
  std::cout << "report: " << out_dir << "/report.json\n";
  return 0;
}

int cmd_report(const std::string& in_dir) {
  const std::string path = in_dir + "/report.json";
  if (!fs::exists(path)) {
    throw dcss::ConfigError(cat("no report found at '", path, "'"));
  }
  std::ifstream is(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw dcss::ConfigError(cat("'", path, "' is not a valid report: ",
                                e.what()));
  }
  std::printf("%-8s %-12s %-10s %-10s %-10s %s\n", "trial", "seed", "S-mIoU",
              "T-mIoU", "time(s)", "status");
  for (const auto& r : j.at("records")) {
    std::printf("%-8d %-12llu %-10.4f %-10.4f %-10.1f %s\n",
                r.at("trial_id").get<int>(),
                static_cast<unsigned long long>(r.at("seed").get<std::uint64_t>()),
                r.at("s_miou").get<double>(), r.at("t_miou").get<double>(),
                r.at("wall_seconds").get<double>(),
                r.at("failed").get<bool>() ? r.at("error").get<std::string>().c_str()
                                           : "ok");
  }
  std::printf("\nn=%d  rho=%.4f  tau=%.4f  ties=%d  excluded=%d\n",
              j.at("n").get<int>(), j.at("rho").get<double>(),
              j.at("tau").get<double>(), j.at("ties").get<int>(),
              j.at("excluded").get<int>());
  if (j.value("degenerate", false)) {
    std::printf("note: %s\n", j.at("note").get<std::string>().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dcss: densely connected architecture search at desk scale"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, ckpt_path, arch_path, in_dir,
      out_path, dot_path;
  bool force = false, resume = false, strict = false;
  int jobs = 0, stop_after = -1;

  auto* gen = app.add_subcommand("gen-data", "Materialize the synthetic dataset");
  gen->add_option("--config", config_path, "Run config JSON")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_flag("--force", force, "Overwrite an existing dataset");

  auto* search = app.add_subcommand("search", "Run the bilevel architecture search");
  search->add_option("--config", config_path, "Run config JSON")->required();
  search->add_option("--data", data_dir, "Dataset directory (gen-data output)")
      ->required();
  search->add_option("--out", out_dir, "Output directory")->required();
  search->add_flag("--resume", resume, "Continue from <out>/last.ckpt");
  search->add_option("--stop-after", stop_after,
                     "Interrupt after this many epochs (schedules still follow "
                     "the configured total)");

  auto* dec = app.add_subcommand("decode", "Discretize a searched checkpoint");
  dec->add_option("--checkpoint", ckpt_path, "Supernet checkpoint")->required();
  dec->add_option("--out", out_path, "Architecture JSON output path")->required();
  dec->add_flag("--strict", strict, "Literal decoding, no fallback edge");
  dec->add_option("--dot", dot_path, "Also write a Graphviz view");

  auto* train = app.add_subcommand("train", "Train a decoded architecture");
  train->add_option("--arch", arch_path, "Architecture JSON")->required();
  train->add_option("--config", config_path, "Run config JSON")->required();
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", out_dir, "Output directory")->required();

  auto* corr = app.add_subcommand("correlate",
                                  "Multi-trial search/train correlation study");
  corr->add_option("--config", config_path, "Run config JSON")->required();
  corr->add_option("--out", out_dir, "Output directory")->required();
  corr->add_option("--jobs", jobs, "Parallel trials (overrides config)");

  auto* rep = app.add_subcommand("report", "Render a correlation report");
  rep->add_option("--in", in_dir, "Directory holding report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir, force);
    if (search->parsed()) {
      return cmd_search(config_path, data_dir, out_dir, resume, stop_after);
    }
    if (dec->parsed()) return cmd_decode(ckpt_path, out_path, strict, dot_path);
    if (train->parsed()) return cmd_train(arch_path, config_path, data_dir, out_dir);
    if (corr->parsed()) return cmd_correlate(config_path, out_dir, jobs);
    if (rep->parsed()) return cmd_report(in_dir);
  } catch (const dcss::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dcss::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const dcss::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
