#include "medcorpus/hpo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include "medcorpus/error.hpp"

extern char** environ;

namespace medcorpus::hpo {

using nlohmann::json;

void SearchSpace::validate() const {
    if (!(lr_min > 0.0) || !(lr_max > 0.0)) throw UsageError("search space: learning-rate bounds must be positive");
    if (lr_min > lr_max) throw UsageError("search space: empty learning-rate range");
    if (batch_sizes.empty()) throw UsageError("search space: no batch sizes");
    for (int b : batch_sizes) {
        if (b <= 0) throw UsageError("search space: batch sizes must be positive");
    }
    if (warmup_min < 0 || warmup_min > warmup_max) throw UsageError("search space: empty warm-up range");
}

SearchSpace search_space_from_json(const json& j) {
    SearchSpace s;
    try {
        if (j.contains("learning_rate")) {
            const auto& lr = j.at("learning_rate");
            s.lr_min = lr.at(0).get<double>();
            s.lr_max = lr.at(1).get<double>();
        }
        if (j.contains("batch_size")) s.batch_sizes = j.at("batch_size").get<std::vector<int>>();
        if (j.contains("warmup_steps")) {
            const auto& w = j.at("warmup_steps");
            s.warmup_min = w.at(0).get<int>();
            s.warmup_max = w.at(1).get<int>();
        }
    } catch (const json::exception& e) {
        throw UsageError(std::string("search space: ") + e.what());
    }
    s.validate();
    return s;
}

json to_json(const SearchSpace& s) {
    return {{"learning_rate", {s.lr_min, s.lr_max}},
            {"batch_size", s.batch_sizes},
            {"warmup_steps", {s.warmup_min, s.warmup_max}}};
}

Params RandomSampler::sample(const SearchSpace& space) {
    space.validate();
    Params p;
    const double u = rng_.uniform01();
    if (space.lr_min == space.lr_max) {
        p.learning_rate = space.lr_min;
    } else {
        const double lo = std::log(space.lr_min);
        const double hi = std::log(space.lr_max);
        p.learning_rate = std::clamp(std::exp(lo + u * (hi - lo)), space.lr_min, space.lr_max);
    }
    p.batch_size = space.batch_sizes[rng_.below(space.batch_sizes.size())];
    const auto width = static_cast<std::uint64_t>(space.warmup_max - space.warmup_min) + 1;
    p.warmup_steps = space.warmup_min + static_cast<int>(rng_.below(width));
    return p;
}

std::string_view to_string(TrialState s) {
    switch (s) {
        case TrialState::running: return "running";
        case TrialState::pruned: return "pruned";
        case TrialState::complete: return "complete";
        case TrialState::failed: return "failed";
    }
    return "failed";
}

namespace {

TrialState parse_state(const std::string& s) {
    if (s == "running") return TrialState::running;
    if (s == "pruned") return TrialState::pruned;
    if (s == "complete") return TrialState::complete;
    if (s == "failed") return TrialState::failed;
    throw DataError("study: unknown trial state '" + s + "'");
}

bool better(double a, double b, Direction d) { return d == Direction::maximize ? a > b : a < b; }

}  // namespace

std::optional<double> Trial::best_up_to(std::int64_t step, Direction direction) const {
    std::optional<double> best;
    for (const auto& [s, v] : intermediate) {
        if (s > step) break;
        if (!best || better(v, *best, direction)) best = v;
    }
    return best;
}

std::size_t Study::n_complete() const {
    return static_cast<std::size_t>(
        std::count_if(trials.begin(), trials.end(), [](const Trial& t) { return t.state == TrialState::complete; }));
}

bool MedianPruner::should_prune(const Study& study, const Trial& trial, std::int64_t step) const {
    if (study.n_complete() < n_startup_trials_) return false;
    const auto current = trial.best_up_to(step, study.direction);
    if (!current) return false;
    std::vector<double> bests;
    for (const auto& t : study.trials) {
        if (t.state != TrialState::complete || t.id == trial.id) continue;
        if (auto b = t.best_up_to(step, study.direction)) bests.push_back(*b);
    }
    if (bests.empty()) return false;
    std::sort(bests.begin(), bests.end());
    const std::size_t n = bests.size();
    const double median = n % 2 == 1 ? bests[n / 2] : (bests[n / 2 - 1] + bests[n / 2]) / 2.0;
    return better(median, *current, study.direction);
}

void TrialContext::report(std::int64_t step, double value) {
    if (!std::isfinite(value)) throw DataError("trial " + std::to_string(trial_.id) + ": non-finite value reported");
    if (!trial_.intermediate.empty() && step <= trial_.intermediate.back().first) {
        throw UsageError("trial " + std::to_string(trial_.id) + ": step " + std::to_string(step) +
                         " does not increase");
    }
    trial_.intermediate.emplace_back(step, value);
}

bool TrialContext::should_prune() const {
    if (trial_.intermediate.empty()) return false;
    return pruner_.should_prune(snapshot_, trial_, trial_.intermediate.back().first);
}

namespace {

void execute(Trial& trial, const Study& snapshot, const MedianPruner& pruner, const Objective& objective) {
    TrialContext ctx(snapshot, trial, pruner);
    try {
        const double value = objective(ctx);
        if (!std::isfinite(value)) throw DataError("non-finite final value");
        trial.final_value = value;
        trial.state = TrialState::complete;
    } catch (const TrialPruned&) {
        trial.state = TrialState::pruned;
    } catch (const std::exception& e) {
        trial.state = TrialState::failed;
        trial.message = e.what();
    }
}

Study run_from(Study study, RandomSampler& sampler, const Objective& objective, const RunOptions& options) {
    const MedianPruner pruner(study.n_startup_trials);
    const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
    while (study.trials.size() < study.n_trials) {
        const std::size_t width = std::min(jobs, study.n_trials - study.trials.size());
        std::vector<Trial> wave(width);
        for (auto& t : wave) {
            t.id = study.trials.size() + static_cast<std::size_t>(&t - wave.data());
            t.params = sampler.sample(study.space);
        }
        if (width == 1) {
            execute(wave[0], study, pruner, objective);
        } else {
            const Study snapshot = study;
            std::vector<std::thread> threads;
            threads.reserve(width);
            for (auto& t : wave) {
                threads.emplace_back([&, tp = &t] { execute(*tp, snapshot, pruner, objective); });
            }
            for (auto& th : threads) th.join();
        }
        for (auto& t : wave) {
            study.trials.push_back(std::move(t));
            if (options.on_trial_finished) options.on_trial_finished(study);
        }
    }
    return study;
}

}  // namespace

Study run_study(const SearchSpace& space, const Objective& objective, const RunOptions& options) {
    space.validate();
    Study study;
    study.direction = options.direction;
    study.n_trials = options.n_trials;
    study.n_startup_trials = options.n_startup_trials;
    study.seed = options.seed;
    study.space = space;
    RandomSampler sampler(options.seed);
    return run_from(std::move(study), sampler, objective, options);
}

Study resume_study(Study study, const Objective& objective, const RunOptions& options) {
    study.space.validate();
    std::erase_if(study.trials, [](const Trial& t) { return t.state == TrialState::running; });
    RandomSampler sampler(study.seed);
    for (std::size_t i = 0; i < study.trials.size(); ++i) {
        if (study.trials[i].id != i) throw DataError("study: trial ids are not dense");
        if (!(sampler.sample(study.space) == study.trials[i].params)) {
            throw DataError("study: trial " + std::to_string(i) + " does not match the seeded sampler");
        }
    }
    study.n_trials = std::max(study.n_trials, options.n_trials);
    return run_from(std::move(study), sampler, objective, options);
}

const Trial& best_trial(const Study& study) {
    const Trial* best = nullptr;
    for (const auto& t : study.trials) {
        if (t.state != TrialState::complete) continue;
        if (!best || better(*t.final_value, *best->final_value, study.direction)) best = &t;
    }
    if (!best) throw DataError("study has no complete trial");
    return *best;
}

json to_json(const Study& study) {
    json trials = json::array();
    for (const auto& t : study.trials) {
        json inter = json::array();
        for (const auto& [s, v] : t.intermediate) inter.push_back({s, v});
        json row = {{"id", t.id},
                    {"params",
                     {{"learning_rate", t.params.learning_rate},
                      {"batch_size", t.params.batch_size},
                      {"warmup_steps", t.params.warmup_steps}}},
                    {"state", to_string(t.state)},
                    {"intermediate", inter},
                    {"final_value", t.final_value ? json(*t.final_value) : json(nullptr)}};
        if (!t.message.empty()) row["message"] = t.message;
        trials.push_back(std::move(row));
    }
    json best = nullptr;
    if (study.n_complete() > 0) best = best_trial(study).id;
    return {{"direction", study.direction == Direction::maximize ? "maximize" : "minimize"},
            {"n_trials", study.n_trials},
            {"n_startup_trials", study.n_startup_trials},
            {"seed", study.seed},
            {"space", to_json(study.space)},
            {"trials", trials},
            {"best_trial", best}};
}

Study study_from_json(const json& j) {
    Study s;
    try {
        const auto dir = j.at("direction").get<std::string>();
        if (dir != "maximize" && dir != "minimize") throw DataError("study: unknown direction '" + dir + "'");
        s.direction = dir == "maximize" ? Direction::maximize : Direction::minimize;
        s.n_trials = j.at("n_trials").get<std::size_t>();
        s.n_startup_trials = j.at("n_startup_trials").get<std::size_t>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.space = search_space_from_json(j.at("space"));
        for (const auto& r : j.at("trials")) {
            Trial t;
            t.id = r.at("id").get<std::size_t>();
            const auto& p = r.at("params");
            t.params = {p.at("learning_rate").get<double>(), p.at("batch_size").get<int>(),
                        p.at("warmup_steps").get<int>()};
            t.state = parse_state(r.at("state").get<std::string>());
            for (const auto& sv : r.at("intermediate")) {
                t.intermediate.emplace_back(sv.at(0).get<std::int64_t>(), sv.at(1).get<double>());
            }
            if (!r.at("final_value").is_null()) t.final_value = r.at("final_value").get<double>();
            if (r.contains("message")) t.message = r.at("message").get<std::string>();
            if (t.final_value.has_value() != (t.state == TrialState::complete)) {
                throw DataError("study: trial " + std::to_string(t.id) + " has inconsistent final value");
            }
            s.trials.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("study: ") + e.what());
    } catch (const UsageError& e) {
        throw DataError(e.what());
    }
    return s;
}

void save_study(const Study& study, const std::filesystem::path& path) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << to_json(study).dump(2) << '\n';
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Study load_study(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return study_from_json(j);
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::optional<double> parse_double(std::string_view s) {
    const std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size()) return std::nullopt;
    return v;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

std::string rtrim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    return s;
}

class Child {
public:
    Child(const std::string& script, const std::vector<std::string>& extra_env) {
        int fds[2];
        if (pipe(fds) != 0) throw Error(ErrorKind::internal, "pipe failed");
        std::vector<std::string> env_store;
        for (char** e = environ; e && *e; ++e) env_store.emplace_back(*e);
        for (const auto& e : extra_env) env_store.push_back(e);
        std::vector<char*> envp;
        for (auto& e : env_store) envp.push_back(e.data());
        envp.push_back(nullptr);
        std::string sh = "/bin/sh", dash_c = "-c", body = script;
        char* argv[] = {sh.data(), dash_c.data(), body.data(), nullptr};

        pid_ = fork();
        if (pid_ < 0) {
            close(fds[0]);
            close(fds[1]);
            throw Error(ErrorKind::internal, "fork failed");
        }
        if (pid_ == 0) {
            setpgid(0, 0);
            dup2(fds[1], STDOUT_FILENO);
            close(fds[0]);
            close(fds[1]);
            execve(argv[0], argv, envp.data());
            _exit(127);
        }
        close(fds[1]);
        out_ = fdopen(fds[0], "r");
    }

    ~Child() {
        if (pid_ > 0) {
            terminate();
        }
        if (out_) std::fclose(out_);
    }

    bool read_line(std::string& line) {
        line.clear();
        int c;
        while ((c = std::fgetc(out_)) != EOF) {
            if (c == '\n') return true;
            line.push_back(static_cast<char>(c));
        }
        return !line.empty();
    }

    int wait() {
        int status = 0;
        while (waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
        }
        pid_ = -1;
        if (WIFEXITED(status)) return WEXITSTATUS(status);
        return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    }

    void terminate() {
        kill(-pid_, SIGKILL);
        kill(pid_, SIGKILL);
        wait();
    }

private:
    pid_t pid_ = -1;
    FILE* out_ = nullptr;
};

}  // namespace

Objective command_objective(std::string command) {
    return [command = std::move(command)](TrialContext& ctx) -> double {
        const auto& p = ctx.params();
        const std::string lr = fmt_double(p.learning_rate);
        const std::string script = command + " --learning_rate " + shell_quote(lr) + " --batch_size " +
                                   std::to_string(p.batch_size) + " --warmup_steps " +
                                   std::to_string(p.warmup_steps);
        Child child(script, {"HPO_TRIAL_ID=" + std::to_string(ctx.trial_id()), "HPO_LEARNING_RATE=" + lr,
                             "HPO_BATCH_SIZE=" + std::to_string(p.batch_size),
                             "HPO_WARMUP_STEPS=" + std::to_string(p.warmup_steps)});
        std::optional<double> final_value;
        std::string line;
        while (child.read_line(line)) {
            line = rtrim(line);
            if (line.rfind("final=", 0) == 0) {
                final_value = parse_double(std::string_view(line).substr(6));
                if (!final_value) throw DataError("objective: malformed line '" + line + "'");
                continue;
            }
            if (line.rfind("step=", 0) != 0) continue;
            const auto sp = line.find(" value=");
            if (sp == std::string::npos) throw DataError("objective: malformed line '" + line + "'");
            std::int64_t step = 0;
            const auto step_text = std::string_view(line).substr(5, sp - 5);
            const auto [ptr, ec] = std::from_chars(step_text.data(), step_text.data() + step_text.size(), step);
            const auto value = parse_double(std::string_view(line).substr(sp + 7));
            if (ec != std::errc() || ptr != step_text.data() + step_text.size() || !value) {
                throw DataError("objective: malformed line '" + line + "'");
            }
            ctx.report(step, *value);
            if (ctx.should_prune()) {
                child.terminate();
                throw TrialPruned{};
            }
        }
        const int status = child.wait();
        if (status != 0) throw DataError("objective exited with status " + std::to_string(status));
        if (!final_value) throw DataError("objective printed no final value");
        return *final_value;
    };
}

}  // namespace medcorpus::hpo
