#pragma once

// Hyperparameter search: independent random sampling over learning rate,
// batch size and warm-up steps, with median pruning on intermediate values.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorpus/rng.hpp"

namespace medcorpus::hpo {

struct SearchSpace {
    double lr_min = 1e-5;
    double lr_max = 1e-4;  // sampled log-uniformly
    std::vector<int> batch_sizes{8, 16};
    int warmup_min = 0;
    int warmup_max = 1000;  // inclusive

    void validate() const;  // throws UsageError
};

SearchSpace search_space_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SearchSpace& space);

struct Params {
    double learning_rate = 0.0;
    int batch_size = 0;
    int warmup_steps = 0;

    bool operator==(const Params&) const = default;
};

class Sampler {
public:
    virtual ~Sampler() = default;
    virtual Params sample(const SearchSpace& space) = 0;
};

// Each draw consumes exactly three generator outputs: lr, batch, warm-up.
class RandomSampler final : public Sampler {
public:
    explicit RandomSampler(std::uint64_t seed) : rng_(seed) {}
    Params sample(const SearchSpace& space) override;

private:
    Rng rng_;
};

enum class TrialState { running, pruned, complete, failed };
enum class Direction { maximize, minimize };

std::string_view to_string(TrialState s);

struct Trial {
    std::size_t id = 0;
    Params params;
    std::vector<std::pair<std::int64_t, double>> intermediate;  // strictly increasing steps
    TrialState state = TrialState::running;
    std::optional<double> final_value;
    std::string message;  // failure reason

    // Best intermediate value over steps ≤ step, if any.
    std::optional<double> best_up_to(std::int64_t step, Direction direction) const;
};

struct Study {
    Direction direction = Direction::maximize;
    std::size_t n_trials = 100;
    std::size_t n_startup_trials = 5;
    std::uint64_t seed = 0;
    SearchSpace space;
    std::vector<Trial> trials;

    std::size_t n_complete() const;
};

nlohmann::json to_json(const Study& study);
Study study_from_json(const nlohmann::json& j);

class MedianPruner {
public:
    explicit MedianPruner(std::size_t n_startup_trials = 5) : n_startup_trials_(n_startup_trials) {}

    // False until n_startup_trials trials are complete. Otherwise compares
    // the trial's best value up to `step` with the median, over complete
    // trials that reported at or before `step`, of their best value up to
    // `step`; prunes only when strictly worse.
    bool should_prune(const Study& study, const Trial& trial, std::int64_t step) const;

    std::size_t n_startup_trials() const { return n_startup_trials_; }

private:
    std::size_t n_startup_trials_;
};

// Thrown from inside an objective to stop a pruned trial.
struct TrialPruned {};

// Handle given to objectives for reporting intermediate values.
class TrialContext {
public:
    TrialContext(const Study& snapshot, Trial& trial, const MedianPruner& pruner)
        : snapshot_(snapshot), trial_(trial), pruner_(pruner) {}

    std::size_t trial_id() const { return trial_.id; }
    const Params& params() const { return trial_.params; }

    // Records (step, value); throws UsageError for non-increasing steps.
    void report(std::int64_t step, double value);
    // Pruning decision for the most recent report.
    bool should_prune() const;

private:
    const Study& snapshot_;
    Trial& trial_;
    const MedianPruner& pruner_;
};

// Returns the final value; may throw TrialPruned or any std::exception
// (recorded as a failed trial).
using Objective = std::function<double(TrialContext&)>;

struct RunOptions {
    std::size_t n_trials = 100;
    std::size_t n_startup_trials = 5;
    std::uint64_t seed = 0;
    Direction direction = Direction::maximize;
    // Trials per parallel wave; 1 = sequential (the deterministic mode).
    std::size_t jobs = 1;
    // Invoked after every finished trial (and wave) with the current study.
    std::function<void(const Study&)> on_trial_finished;
};

Study run_study(const SearchSpace& space, const Objective& objective, const RunOptions& options);

// Continues `study` until it holds options.n_trials trials. The sampler is
// replayed over the existing trials so the parameter stream matches an
// uninterrupted run.
Study resume_study(Study study, const Objective& objective, const RunOptions& options);

// Highest (or lowest, when minimizing) final value; ties go to the lower id.
// Throws DataError when no trial is complete.
const Trial& best_trial(const Study& study);

// Runs `command` through /bin/sh with the parameters appended as
// `--learning_rate X --batch_size N --warmup_steps N` and exported as
// HPO_TRIAL_ID, HPO_LEARNING_RATE, HPO_BATCH_SIZE, HPO_WARMUP_STEPS.
// Reads `step=<int> value=<float>` lines from stdout; the run must exit 0
// and print `final=<float>`. Pruned runs are terminated.
Objective command_objective(std::string command);

void save_study(const Study& study, const std::filesystem::path& path);
Study load_study(const std::filesystem::path& path);

}  // namespace medcorpus::hpo
