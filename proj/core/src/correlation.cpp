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
#include "dcss/correlation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <thread>

namespace dcss {

double pearson(std::span<const double> xs, std::span<const double> ys) {
  DCSS_CHECK(xs.size() == ys.size(), "pearson: length mismatch ", xs.size(),
             " vs ", ys.size());
  const std::size_t n = xs.size();
  DCSS_CHECK(n >= 2, "pearson: need at least 2 observations, got ", n);
  double mean_x = 0.0, mean_y = 0.0, m2x = 0.0, m2y = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double k = 1.0 / static_cast<double>(i + 1);
    const double dx = xs[i] - mean_x;
    const double dy = ys[i] - mean_y;
    mean_x += dx * k;
    mean_y += dy * k;
    m2x += dx * (xs[i] - mean_x);
    m2y += dy * (ys[i] - mean_y);
    cxy += dx * (ys[i] - mean_y);
  }
  if (m2x <= 0.0 || m2y <= 0.0) {
    throw NumericError("pearson: degenerate sample (zero variance)");
  }
  return cxy / std::sqrt(m2x * m2y);
}

double kendall(std::span<const double> xs, std::span<const double> ys) {
  DCSS_CHECK(xs.size() == ys.size(), "kendall: length mismatch ", xs.size(),
             " vs ", ys.size());
  const std::size_t n = xs.size();
  DCSS_CHECK(n >= 2, "kendall: need at least 2 observations, got ", n);
  index_t concordant = 0, discordant = 0;
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double dx = xs[i] - xs[j];
      const double dy = ys[i] - ys[j];
      const double prod = dx * dy;
      if (prod > 0.0) ++concordant;
      else if (prod < 0.0) ++discordant;
      // ties in either coordinate count toward neither
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return static_cast<double>(concordant - discordant) / pairs;
}

int count_ties(std::span<const double> xs, std::span<const double> ys) {
  int ties = 0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (xs[i] == xs[j] || ys[i] == ys[j]) ++ties;
    }
  }
  return ties;
}

nlohmann::json TrialRecord::to_json() const {
  return {{"trial_id", trial_id},     {"seed", seed},
          {"s_miou", s_miou},         {"t_miou", t_miou},
          {"arch_path", arch_path},   {"wall_seconds", wall_seconds},
          {"failed", failed},         {"error", error}};
}

nlohmann::json CorrelationReport::to_json() const {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : records) recs.push_back(r.to_json());
  return {{"n", n},
          {"rho", rho},
          {"tau", tau},
          {"ties", ties},
          {"excluded", excluded},
          {"degenerate", degenerate},
          {"note", note},
          {"records", recs}};
}

std::string CorrelationReport::scatter_csv() const {
  std::string out = "s_miou,t_miou,trial_id\n";
  char buf[96];
  for (const auto& r : records) {
    if (r.failed) continue;
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", r.s_miou, r.t_miou,
                  r.trial_id);
    out += buf;
  }
  return out;
}

CorrelationReport make_report(std::vector<TrialRecord> records) {
  CorrelationReport report;
  report.records = std::move(records);
  std::vector<double> xs, ys;
  for (const auto& r : report.records) {
    if (r.failed) {
      ++report.excluded;
      continue;
    }
    xs.push_back(r.s_miou);
    ys.push_back(r.t_miou);
  }
  report.n = static_cast<int>(xs.size());
  if (report.n >= 2) {
    report.tau = kendall(xs, ys);
    report.ties = count_ties(xs, ys);
    try {
      report.rho = pearson(xs, ys);
    } catch (const NumericError& e) {
      report.degenerate = true;
      report.rho = 0.0;
      report.note = e.what();
    }
  } else {
    report.note = "fewer than 2 usable trials; statistics undefined";
  }
  return report;
}

CorrelationReport run_correlation_study(const Dataset& dataset,
                                        const SupernetSpec& spec,
                                        const SearchConfig& search_cfg,
                                        const TrainConfig& train_cfg,
                                        const StudyConfig& study,
                                        const std::string& out_dir) {
  DCSS_CHECK(study.n_trials >= 2, "correlate: need at least 2 trials, got ",
             study.n_trials);
  DCSS_CHECK(study.jobs >= 1, "correlate: jobs must be >= 1");

  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(out_dir);

  auto run_trial = [&](int trial_id) {
    TrialRecord rec;
    rec.trial_id = trial_id;
    rec.seed = study.base_seed + static_cast<std::uint64_t>(trial_id);
    const auto start = std::chrono::steady_clock::now();
    try {
      std::string trial_dir;
      if (!out_dir.empty()) {
        trial_dir = cat(out_dir, "/trial_", trial_id);
        fs::create_directories(trial_dir);
      }
      SearchConfig scfg = search_cfg;
      scfg.seed = rec.seed;
      SearchResult sres = run_search(dataset, spec, scfg, trial_dir);
      rec.s_miou = sres.best_val_miou;

      DecodedArchitecture arch =
          decode(sres.best_arch, spec, /*strict=*/false,
                 cat("trial_", trial_id, "_seed_", rec.seed));
      if (!trial_dir.empty()) {
        rec.arch_path = trial_dir + "/arch.json";
        std::ofstream os(rec.arch_path);
        os << arch.to_json().dump(2) << "\n";
      }

      TrainConfig tcfg = train_cfg;
      tcfg.seed = rec.seed;
      StandaloneNet net(arch, rec.seed);
      TrainResult tres = train_standalone(net, dataset, tcfg, trial_dir);
      rec.t_miou = tres.best_val_miou;
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    return rec;
  };

  std::vector<TrialRecord> records(static_cast<std::size_t>(study.n_trials));
  if (study.jobs == 1) {
    for (int t = 0; t < study.n_trials; ++t) records[static_cast<std::size_t>(t)] = run_trial(t);
  } else {
    // Bounded thread pool; trial results are position-indexed so the report
    // never depends on completion order.
    std::vector<std::future<void>> futures;
    std::atomic<int> next{0};
    const int workers = std::min(study.jobs, study.n_trials);
    for (int w = 0; w < workers; ++w) {
      futures.push_back(std::async(std::launch::async, [&]() {
        for (int t = next.fetch_add(1); t < study.n_trials;
             t = next.fetch_add(1)) {
          records[static_cast<std::size_t>(t)] = run_trial(t);
        }
      }));
    }
    for (auto& f : futures) f.get();
  }

  CorrelationReport report = make_report(std::move(records));
  if (!out_dir.empty()) {
    std::ofstream os(out_dir + "/report.json");
    if (!os.good()) throw IoError(cat("correlate: cannot write to '", out_dir, "'"));
    os << report.to_json().dump(2) << "\n";
    std::ofstream scatter(out_dir + "/scatter.csv");
    scatter << report.scatter_csv();
  }
  return report;
}

}  // namespace dcss
