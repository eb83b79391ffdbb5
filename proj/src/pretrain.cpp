#include "medcorpus/pretrain.hpp"

#include "medcorpus/error.hpp"

namespace medcorpus::pretrain {

PretrainConfig emit_pretrain_config(int phase) {
    PretrainConfig c;
    c.phase = phase;
    if (phase == 1) {
        c.seq_len = 128;
        c.learning_rate = 6e-3;
        c.batch_size = 65536;
        c.warmup_steps = 2000;
        c.total_steps = 7038;
    } else if (phase == 2) {
        c.seq_len = 512;
        c.batch_size = 32768;
        c.warmup_steps = 200;
        c.total_steps = 1563;
        c.warning =
            "phase-2 maximum learning rate is undefined (the reference value reads 4e^{-e}); "
            "no value is assumed, set learning_rate explicitly";
    } else {
        throw UsageError("pretraining phase must be 1 or 2, got " + std::to_string(phase));
    }
    return c;
}

nlohmann::json to_json(const PretrainConfig& c) {
    nlohmann::json j = {{"phase", c.phase},
                        {"seq_len", c.seq_len},
                        {"learning_rate", c.learning_rate ? nlohmann::json(*c.learning_rate) : nlohmann::json(nullptr)},
                        {"batch_size", c.batch_size},
                        {"warmup_steps", c.warmup_steps},
                        {"total_steps", c.total_steps},
                        {"optimizer", c.optimizer},
                        {"lr_schedule", c.lr_schedule}};
    if (c.warning) j["warning"] = *c.warning;
    return j;
}

}  // namespace medcorpus::pretrain
