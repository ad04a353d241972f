#pragma once

#include <array>
#include <string>
#include <vector>

#include "mgreid/model.hpp"
#include "mgreid/synth_data.hpp"
#include "mgreid/trainer.hpp"

namespace mgreid::cfg {

// Every run-time knob in one place: data generation, model dimensions,
// training. Values resolve as defaults < config file < command-line
// overrides.
struct RunConfig {
    synth::GenConfig data;
    img::EncoderConfig enc;
    int num_prompts = 4;
    int prompt_width = 32;
    double prompt_init_std = 0.002;
    uint64_t model_seed = 3;
    train::TrainConfig train;
    std::string granularities = "GHUL";
    std::string mask_source = "predicted";
    std::string box_source = "oracle";  // "oracle" or a JSONL path

    model::ModelConfig model_config() const;
    std::array<bool, 4> gran_flags() const;
};

// key = value lines, '#' comments. Unknown keys are an error.
void apply_file(RunConfig& c, const std::string& path);
void apply_kv(RunConfig& c, const std::string& key, const std::string& value);
void apply_overrides(RunConfig& c, const std::vector<std::string>& kvs);  // "key=value"
std::string serialize(const RunConfig& c);
// Cross-field checks; also syncs encoder image dims from the data section.
void finalize(RunConfig& c);

}  // namespace mgreid::cfg
