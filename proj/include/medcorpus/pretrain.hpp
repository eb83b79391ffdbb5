#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace medcorpus::pretrain {

struct PretrainConfig {
    int phase = 1;
    int seq_len = 128;
    std::optional<double> learning_rate;  // nullopt: no usable reference value
    int batch_size = 0;
    int warmup_steps = 0;
    int total_steps = 0;
    std::string optimizer = "LAMB";
    std::string lr_schedule = "polynomial-decay";
    std::optional<std::string> warning;
};

// Two-phase BERT pretraining schedule. Throws UsageError for phases other
// than 1 and 2.
PretrainConfig emit_pretrain_config(int phase);

nlohmann::json to_json(const PretrainConfig& config);

}  // namespace medcorpus::pretrain
