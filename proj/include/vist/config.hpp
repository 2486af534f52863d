// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "vist/corpus.hpp"
#include "vist/effmeter.hpp"
#include "vist/generation.hpp"
#include "vist/trainer.hpp"

namespace vist {

// One structured config file drives every command; flags may override
// individual fields and the effective config (with its checksum) is echoed
// into every output artifact.
struct ExperimentConfig {
    SystemConfig system;
    std::string precision = "f32";  // "f32" | "f64"
    std::uint64_t init_seed = 1;
    SyntheticCorpusSpec data;
    CurriculumConfig curriculum;
    int olm_chunks_per_sample = 4;
    std::map<std::string, StageConfig> stages;  // keyed by stage name
    GenerationConfig generation;
    EffScenario bench;
    // Evaluation settings.
    int eval_docs = 32;
    std::uint64_t eval_seed = 99;

    std::string run_name = "run";

    void validate() const;
    std::string canonical_json() const;         // sorted keys, fixed formatting
    std::uint64_t checksum() const { return fnv1a(canonical_json()); }
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

// Output root: $VIST2_OUT_ROOT (default "./out") / run_name.
std::string output_dir(const ExperimentConfig& cfg);

}  // namespace vist
