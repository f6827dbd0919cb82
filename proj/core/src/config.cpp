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
#include "dcss/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace dcss {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& path) {
  if (!j.is_object()) {
    throw ConfigError(cat("config: '", path, "' must be an object"));
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ConfigError(cat("config: unknown key '", path, it.key(), "'"));
    }
  }
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback,
         const std::string& path) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(cat("config: bad value for '", path, key, "'"));
  }
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset.to_json();
  j["supernet"] = supernet.to_json();
  j["search"] = search.to_json();
  j["train"] = train.to_json();
  j["correlation"] = {{"n_trials", correlation.n_trials},
                      {"base_seed", correlation.base_seed},
                      {"jobs", correlation.jobs}};
  j["io"] = {{"out_dir", out_dir}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  reject_unknown(
      j, {"dataset", "supernet", "search", "train", "correlation", "io"}, "");

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown(d,
                   {"num_classes", "height", "width", "count_train_a",
                    "count_train_b", "count_val", "seed"},
                   "dataset.");
    cfg.dataset.num_classes =
        get_or(d, "num_classes", cfg.dataset.num_classes, "dataset.");
    cfg.dataset.height = get_or(d, "height", cfg.dataset.height, "dataset.");
    cfg.dataset.width = get_or(d, "width", cfg.dataset.width, "dataset.");
    cfg.dataset.count_train_a =
        get_or(d, "count_train_a", cfg.dataset.count_train_a, "dataset.");
    cfg.dataset.count_train_b =
        get_or(d, "count_train_b", cfg.dataset.count_train_b, "dataset.");
    cfg.dataset.count_val =
        get_or(d, "count_val", cfg.dataset.count_val, "dataset.");
    cfg.dataset.seed = get_or(d, "seed", cfg.dataset.seed, "dataset.");
  }

  if (j.contains("supernet")) {
    const auto& s = j.at("supernet");
    reject_unknown(s,
                   {"num_layers", "base_width", "max_in_degree",
                    "channel_ratio", "n_paths", "num_classes"},
                   "supernet.");
    cfg.supernet.num_layers =
        get_or(s, "num_layers", cfg.supernet.num_layers, "supernet.");
    cfg.supernet.base_width =
        get_or(s, "base_width", cfg.supernet.base_width, "supernet.");
    cfg.supernet.max_in_degree =
        get_or(s, "max_in_degree", cfg.supernet.max_in_degree, "supernet.");
    cfg.supernet.channel_ratio =
        get_or(s, "channel_ratio", cfg.supernet.channel_ratio, "supernet.");
    cfg.supernet.n_paths = get_or(s, "n_paths", cfg.supernet.n_paths, "supernet.");
    cfg.supernet.num_classes =
        get_or(s, "num_classes", cfg.dataset.num_classes, "supernet.");
  } else {
    cfg.supernet.num_classes = cfg.dataset.num_classes;
  }

  if (j.contains("search")) {
    const auto& s = j.at("search");
    reject_unknown(s,
                   {"epochs", "batch_size", "lr_w", "lr_arch", "weight_decay_w",
                    "momentum_w", "lambda_alpha", "lambda_beta", "lambda_con",
                    "sampler", "seed"},
                   "search.");
    if (s.contains("sampler")) {
      reject_unknown(s.at("sampler"), {"tau_start", "tau_end", "n_paths"},
                     "search.sampler.");
    }
    try {
      cfg.search = SearchConfig::from_json(s);
    } catch (const Error& e) {
      throw ConfigError(cat("config: search section invalid: ", e.what()));
    }
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(
        t, {"epochs", "batch_size", "lr", "momentum", "weight_decay", "seed"},
        "train.");
    try {
      cfg.train = TrainConfig::from_json(t);
    } catch (const Error& e) {
      throw ConfigError(cat("config: train section invalid: ", e.what()));
    }
  }

  if (j.contains("correlation")) {
    const auto& c = j.at("correlation");
    reject_unknown(c, {"n_trials", "base_seed", "jobs"}, "correlation.");
    cfg.correlation.n_trials =
        get_or(c, "n_trials", cfg.correlation.n_trials, "correlation.");
    cfg.correlation.base_seed =
        get_or(c, "base_seed", cfg.correlation.base_seed, "correlation.");
    cfg.correlation.jobs = get_or(c, "jobs", cfg.correlation.jobs, "correlation.");
  }

  if (j.contains("io")) {
    const auto& io = j.at("io");
    reject_unknown(io, {"out_dir"}, "io.");
    cfg.out_dir = get_or<std::string>(io, "out_dir", "", "io.");
  }

  // Sampler n_paths follows the supernet unless configured explicitly.
  if (!(j.contains("search") && j.at("search").contains("sampler") &&
        j.at("search").at("sampler").contains("n_paths"))) {
    cfg.search.sampler.n_paths = cfg.supernet.n_paths;
  }

  if (const char* env = std::getenv("DCSS_SEED")) {
    char* end = nullptr;
    const std::uint64_t seed = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
      throw ConfigError(cat("config: DCSS_SEED ('", env,
                            "') is not an unsigned integer"));
    }
    cfg.dataset.seed = seed;
    cfg.search.seed = seed;
    cfg.train.seed = seed;
    cfg.correlation.base_seed = seed;
  }

  try {
    cfg.supernet.validate();
    cfg.search.validate();
    cfg.train.validate();
  } catch (const Error& e) {
    throw ConfigError(cat("config: ", e.what()));
  }
  if (cfg.dataset.num_classes != cfg.supernet.num_classes) {
    throw ConfigError(cat("config: dataset.num_classes (",
                          cfg.dataset.num_classes,
                          ") != supernet.num_classes (",
                          cfg.supernet.num_classes, ")"));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is.good()) throw IoError(cat("config: cannot open '", path, "'"));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(cat("config: '", path, "' is not valid JSON: ", e.what()));
  }
  return from_json(j);
}

}  // namespace dcss
