// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ldlb/config.hpp"
#include "ldlb/data.hpp"

namespace ldlb {

/// Subcommands accepted by Experiment::run.
const std::vector<std::string>& subcommands();

/// Training set for the configuration (toy sets seeded from config.seed).
Dataset load_training_set(const ExperimentConfig& c);
/// Held-out set: a fresh toy draw, the eval IDX file, or the first n_eval
/// training images.
Dataset load_eval_set(const ExperimentConfig& c);

/// Optimizer steps per phase: steps_* when nonzero, else epochs * batches.
std::size_t pretrain_steps(const ExperimentConfig& c, std::size_t n_data);
std::size_t main_steps(const ExperimentConfig& c, std::size_t n_data);

// Output layout under output_dir (rewritten in place on every run):
//   checkpoints/pretrain.ckpt, checkpoints/train.ckpt, checkpoints/<phase>_<step>.ckpt
//   metrics_pretrain.jsonl, metrics_train.jsonl
//   samples.csv | samples/*.pgm + samples/manifest.json, samples_manifest.json
//   eval_nelbo.json, variance_report.csv, schedule.csv, iw_bias.csv
class Experiment {
public:
    explicit Experiment(ExperimentConfig cfg);

    const ExperimentConfig& config() const { return cfg_; }

    /// Runs one subcommand. `checkpoint` overrides the default input
    /// checkpoint (for pretrain it resumes from it). Returns a JSON summary.
    nlohmann::json run(const std::string& subcommand, const std::string& checkpoint = "");

private:
    ExperimentConfig cfg_;
};

} // namespace ldlb
