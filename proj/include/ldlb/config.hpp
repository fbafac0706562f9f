// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldlb/objectives.hpp"
#include "ldlb/samplers.hpp"

namespace ldlb {

enum class Precision { F32, F64 };

struct ExperimentConfig {
    std::string dataset = "toy8gauss"; // toy8gauss | swissroll | mnist-binarized
    std::string data_path;             // IDX image file for mnist-binarized
    std::string eval_data_path;        // optional held-out IDX image file
    std::size_t n_train = 10000;       // toy sets only
    std::size_t n_eval = 1000;
    TrainConfig train;
    ModelConfig model;
    OdeSolverConfig solver;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    Precision precision = Precision::F32;

    std::size_t eval_probes = 16;
    std::size_t n_samples = 2000;
    std::string sampler = "ode"; // ode | ancestral
    std::size_t ancestral_steps = 1000;
    std::size_t log_every = 50;
    std::size_t checkpoint_every = 0; // 0: only at the end of a phase

    std::size_t grid_size = 101;          // schedule-dump / variance-report grid
    std::size_t variance_draws = 100000;  // variance-report
    std::size_t variance_latent_dim = 2;  // variance-report
    std::vector<double> iw_noise_vars{0.0, 0.01, 0.05, 0.1, 0.25};
    std::size_t iw_k = 100;
    std::size_t iw_trials = 100000;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

nlohmann::json schedule_to_json(const SdeSchedule& s);
SdeSchedule schedule_from_json(const nlohmann::json& j, const std::string& where = "schedule");

nlohmann::json train_to_json(const TrainConfig& t);
nlohmann::json model_to_json(const ModelConfig& m);
/// Overwrites fields of `out` present in `j`; `where` prefixes error messages.
void read_train(const nlohmann::json& j, const std::string& where, TrainConfig& out);
void read_model(const nlohmann::json& j, const std::string& where, ModelConfig& out);

nlohmann::json to_json(const ExperimentConfig& c);
/// Unknown keys and ill-typed values raise ConfigError with the dotted field path.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

} // namespace ldlb
