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
#ifndef DCSS_CORRELATION_HPP_
#define DCSS_CORRELATION_HPP_

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcss/decode.hpp"
#include "dcss/search.hpp"

namespace dcss {

/// Sample Pearson correlation, single stable pass (Welford co-moments).
/// Throws NumericError("degenerate sample") when either side has zero
/// variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

/// Kendall tau-a: (concordant - discordant) / C(n,2). Pairs tied in x or y
/// count toward neither term while the denominator stays C(n,2).
double kendall(std::span<const double> xs, std::span<const double> ys);

int count_ties(std::span<const double> xs, std::span<const double> ys);

/// One search -> decode -> retrain round trip.
struct TrialRecord {
  int trial_id = 0;
  std::uint64_t seed = 0;
  double s_miou = 0.0;
  double t_miou = 0.0;
  std::string arch_path;
  double wall_seconds = 0.0;
  bool failed = false;
  std::string error;

  nlohmann::json to_json() const;
};

struct CorrelationReport {
  std::vector<TrialRecord> records;  // all trials, including failed ones
  int n = 0;                         // usable trials
  double rho = 0.0;
  double tau = 0.0;
  int ties = 0;
  int excluded = 0;
  bool degenerate = false;  // all pairs identical; rho undefined
  std::string note;

  nlohmann::json to_json() const;
  std::string scatter_csv() const;
};

/// Computes the report statistics over the non-failed records.
CorrelationReport make_report(std::vector<TrialRecord> records);

struct StudyConfig {
  int n_trials = 8;
  std::uint64_t base_seed = 1000;
  int jobs = 1;
};

/// Runs n_trials independent (search, decode, retrain) rounds with seeds
/// base_seed + trial_id and correlates S-mIoU with T-mIoU. Trials run in up
/// to `jobs` threads; a failed trial is recorded and excluded. When out_dir
/// is given, writes report.json, scatter.csv and per-trial artifacts.
CorrelationReport run_correlation_study(const Dataset& dataset,
                                        const SupernetSpec& spec,
                                        const SearchConfig& search_cfg,
                                        const TrainConfig& train_cfg,
                                        const StudyConfig& study,
                                        const std::string& out_dir = "");

}  // namespace dcss

#endif  // DCSS_CORRELATION_HPP_
