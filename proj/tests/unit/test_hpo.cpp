#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "medcorpus/error.hpp"
#include "medcorpus/hpo.hpp"

using namespace medcorpus;
using namespace medcorpus::hpo;

namespace {

Trial finished(std::size_t id, std::vector<std::pair<std::int64_t, double>> curve, double final_value) {
    Trial t;
    t.id = id;
    t.intermediate = std::move(curve);
    t.state = TrialState::complete;
    t.final_value = final_value;
    return t;
}

Study study_with(std::vector<double> values_at_step1, std::size_t n_startup) {
    Study s;
    s.n_startup_trials = n_startup;
    for (std::size_t i = 0; i < values_at_step1.size(); ++i) s.trials.push_back(finished(i, {{1, values_at_step1[i]}}, values_at_step1[i]));
    return s;
}

Trial probe(std::size_t id, double v) {
    Trial t;
    t.id = id;
    t.intermediate = {{1, v}};
    return t;
}

// Objective that reports a curve rising toward a value set by the learning rate.
Objective curve_objective(int steps = 5) {
    return [steps](TrialContext& ctx) {
        const double target = std::log10(ctx.params().learning_rate) + 5.0;
        double v = 0;
        for (int s = 1; s <= steps; ++s) {
            v = target * s / steps;
            ctx.report(s, v);
            if (ctx.should_prune()) throw TrialPruned{};
        }
        return v;
    };
}

std::filesystem::path tmp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("search space validation and JSON") {
    SearchSpace s;
    CHECK_NOTHROW(s.validate());
    auto j = to_json(s);
    CHECK(j["batch_size"] == nlohmann::json::array({8, 16}));
    auto back = search_space_from_json(j);
    CHECK(back.lr_min == s.lr_min);
    CHECK(back.warmup_max == 1000);
    s.lr_min = 0;
    CHECK_THROWS_AS(s.validate(), UsageError);
    s = SearchSpace{};
    s.batch_sizes.clear();
    CHECK_THROWS_AS(s.validate(), UsageError);
    s = SearchSpace{};
    s.warmup_min = 10;
    s.warmup_max = 5;
    CHECK_THROWS_AS(s.validate(), UsageError);
}

TEST_CASE("degenerate space yields constant parameters") {
    SearchSpace s{3e-5, 3e-5, {16}, 100, 100};
    RandomSampler sampler(1);
    for (int i = 0; i < 50; ++i) {
        auto p = sampler.sample(s);
        CHECK(p.learning_rate == doctest::Approx(3e-5));
        CHECK(p.batch_size == 16);
        CHECK(p.warmup_steps == 100);
    }
}

TEST_CASE("learning rate is log-uniform and the other parameters stay in range") {
    SearchSpace s;
    RandomSampler sampler(2024);
    const int n = 10000;
    std::vector<double> u;
    int n8 = 0;
    for (int i = 0; i < n; ++i) {
        auto p = sampler.sample(s);
        CHECK(p.learning_rate >= 1e-5);
        CHECK(p.learning_rate <= 1e-4);
        CHECK((p.batch_size == 8 || p.batch_size == 16));
        CHECK(p.warmup_steps >= 0);
        CHECK(p.warmup_steps <= 1000);
        n8 += p.batch_size == 8;
        u.push_back(std::log10(p.learning_rate) + 5.0);
    }
    std::sort(u.begin(), u.end());
    double ks = 0;
    for (int i = 0; i < n; ++i) {
        ks = std::max(ks, std::abs(u[i] - static_cast<double>(i) / n));
        ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - u[i]));
    }
    CHECK(ks < 0.02);
    CHECK(std::abs(n8 / static_cast<double>(n) - 0.5) < 0.03);
}

TEST_CASE("median pruner worked example") {
    auto s = study_with({0.5, 0.6, 0.7}, 3);
    MedianPruner pruner(3);
    CHECK(pruner.should_prune(s, probe(3, 0.55), 1));
    CHECK_FALSE(pruner.should_prune(s, probe(3, 0.6), 1));
    CHECK_FALSE(pruner.should_prune(s, probe(3, 0.9), 1));

    s.direction = Direction::minimize;
    CHECK_FALSE(pruner.should_prune(s, probe(3, 0.55), 1));
    CHECK(pruner.should_prune(s, probe(3, 0.65), 1));

    // even count: median of {0.5, 0.6, 0.7, 0.8} is 0.65
    s = study_with({0.5, 0.6, 0.7, 0.8}, 3);
    CHECK(pruner.should_prune(s, probe(4, 0.64), 1));
    CHECK_FALSE(pruner.should_prune(s, probe(4, 0.65), 1));
}

TEST_CASE("median pruner startup guard") {
    auto s = study_with({0.9, 0.9, 0.9, 0.9}, 5);
    MedianPruner pruner(5);
    CHECK_FALSE(pruner.should_prune(s, probe(4, 0.0), 1));
    s.trials.push_back(finished(4, {{1, 0.9}}, 0.9));
    CHECK(pruner.should_prune(s, probe(5, 0.0), 1));
    // pruned and failed trials do not count toward the guard
    auto g = study_with({0.9, 0.9, 0.9, 0.9}, 5);
    Trial p = probe(4, 0.9);
    p.state = TrialState::pruned;
    g.trials.push_back(p);
    CHECK_FALSE(pruner.should_prune(g, probe(5, 0.0), 1));
}

TEST_CASE("median pruner uses the best value reached so far") {
    Study s;
    s.n_startup_trials = 1;
    s.trials.push_back(finished(0, {{1, 0.2}, {2, 0.8}, {3, 0.4}}, 0.4));
    MedianPruner pruner(1);
    Trial t;
    t.id = 1;
    t.intermediate = {{1, 0.3}, {3, 0.5}};
    CHECK_FALSE(pruner.should_prune(s, t, 1));
    // reference best by step 3 is 0.8, not the last value 0.4
    CHECK(pruner.should_prune(s, t, 3));
    // a trial with no report at or before the step is never pruned
    Trial late;
    late.id = 2;
    late.intermediate = {{5, 0.0}};
    CHECK_FALSE(pruner.should_prune(s, late, 2));
}

TEST_CASE("report rejects bad steps and values") {
    Study s;
    Trial t;
    MedianPruner pruner;
    TrialContext ctx(s, t, pruner);
    ctx.report(1, 0.5);
    CHECK_THROWS_AS(ctx.report(1, 0.6), UsageError);
    CHECK_THROWS_AS(ctx.report(2, std::nan("")), DataError);
    ctx.report(3, 0.7);
    CHECK(t.intermediate.size() == 2);
}

TEST_CASE("best trial ties and empty studies") {
    Study s;
    CHECK_THROWS_AS(best_trial(s), DataError);
    s.trials = {finished(0, {}, 0.7), finished(1, {}, 0.9), finished(2, {}, 0.9)};
    CHECK(best_trial(s).id == 1);
    s.direction = Direction::minimize;
    CHECK(best_trial(s).id == 0);
    s.trials[0].state = TrialState::failed;
    CHECK(best_trial(s).id == 1);
}

TEST_CASE("zero trials gives an empty study") {
    RunOptions opt;
    opt.n_trials = 0;
    auto s = run_study({}, curve_objective(), opt);
    CHECK(s.trials.empty());
    CHECK(to_json(s)["best_trial"].is_null());
}

TEST_CASE("identity objective: best trial carries the largest learning rate") {
    RunOptions opt;
    opt.n_trials = 40;
    opt.seed = 9;
    auto s = run_study({}, [](TrialContext& ctx) { return ctx.params().learning_rate; }, opt);
    REQUIRE(s.trials.size() == 40);
    double top = 0;
    for (const auto& t : s.trials) {
        CHECK(t.state == TrialState::complete);
        top = std::max(top, t.params.learning_rate);
    }
    CHECK(best_trial(s).params.learning_rate == top);
}

TEST_CASE("pruning soundness: pruned trials were below the median when stopped") {
    RunOptions opt;
    opt.n_trials = 60;
    opt.seed = 4;
    auto s = run_study({}, curve_objective(), opt);
    std::size_t pruned = 0;
    for (std::size_t i = 0; i < s.trials.size(); ++i) {
        const auto& t = s.trials[i];
        if (i < 5) CHECK(t.state == TrialState::complete);
        if (t.state != TrialState::pruned) continue;
        ++pruned;
        const auto step = t.intermediate.back().first;
        std::vector<double> ref;
        for (std::size_t k = 0; k < i; ++k) {
            const auto& o = s.trials[k];
            if (o.state != TrialState::complete) continue;
            double best = -1e300;
            for (const auto& [st, v] : o.intermediate)
                if (st <= step) best = std::max(best, v);
            ref.push_back(best);
        }
        std::sort(ref.begin(), ref.end());
        const auto n = ref.size();
        const double median = n % 2 ? ref[n / 2] : (ref[n / 2 - 1] + ref[n / 2]) / 2;
        double mine = -1e300;
        for (const auto& [st, v] : t.intermediate) mine = std::max(mine, v);
        CHECK(mine < median);
    }
    CHECK(pruned > 0);
}

TEST_CASE("sequential studies are byte-identical") {
    RunOptions opt;
    opt.n_trials = 100;
    opt.seed = 77;
    const auto a = to_json(run_study({}, curve_objective(), opt)).dump();
    const auto b = to_json(run_study({}, curve_objective(), opt)).dump();
    CHECK(a == b);
    opt.seed = 78;
    CHECK(to_json(run_study({}, curve_objective(), opt)).dump() != a);
}

TEST_CASE("failing objectives are recorded") {
    RunOptions opt;
    opt.n_trials = 3;
    auto s = run_study(
        {}, [](TrialContext& ctx) -> double {
            if (ctx.trial_id() == 1) throw std::runtime_error("diverged");
            return 1.0;
        },
        opt);
    CHECK(s.trials[1].state == TrialState::failed);
    CHECK(s.trials[1].message == "diverged");
    CHECK(s.n_complete() == 2);
}

TEST_CASE("resume matches an uninterrupted run") {
    RunOptions opt;
    opt.n_trials = 30;
    opt.seed = 5;
    const auto full = to_json(run_study({}, curve_objective(), opt)).dump();

    RunOptions part = opt;
    part.n_trials = 12;
    auto partial = run_study({}, curve_objective(), part);
    // a trial left running by a crash is discarded on resume
    Trial dangling;
    dangling.id = partial.trials.size();
    dangling.params = Params{1e-5, 8, 0};
    partial.trials.push_back(dangling);

    const auto dir = tmp_dir("medcorpus_hpo_resume");
    save_study(partial, dir / "study.json");
    auto loaded = load_study(dir / "study.json");
    auto resumed = resume_study(loaded, curve_objective(), opt);
    CHECK(to_json(resumed).dump() == full);

    // tampered parameters do not match the seeded stream
    loaded.trials.pop_back();
    loaded.trials[3].params.batch_size = loaded.trials[3].params.batch_size == 8 ? 16 : 8;
    CHECK_THROWS_AS(resume_study(loaded, curve_objective(), opt), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("parallel waves complete the requested trial count") {
    RunOptions opt;
    opt.n_trials = 23;
    opt.jobs = 4;
    std::size_t calls = 0;
    opt.on_trial_finished = [&](const Study&) { ++calls; };
    auto s = run_study({}, curve_objective(), opt);
    CHECK(s.trials.size() == 23);
    CHECK(calls == 23);
    for (std::size_t i = 0; i < s.trials.size(); ++i) CHECK(s.trials[i].id == i);
    RandomSampler sampler(0);
    for (const auto& t : s.trials) CHECK(t.params == sampler.sample(SearchSpace{}));
}

TEST_CASE("study JSON round trip and malformed files") {
    RunOptions opt;
    opt.n_trials = 8;
    auto s = run_study({}, curve_objective(), opt);
    const auto j = to_json(s);
    CHECK(to_json(study_from_json(j)) == j);
    auto bad = j;
    bad["trials"][0]["state"] = "sleeping";
    CHECK_THROWS_AS(study_from_json(bad), DataError);
    const auto dir = tmp_dir("medcorpus_hpo_bad");
    std::ofstream(dir / "study.json") << "{not json";
    CHECK_THROWS_AS(load_study(dir / "study.json"), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("command objective passes parameters and reads values") {
    const auto dir = tmp_dir("medcorpus_hpo_cmd");
    const auto script = dir / "train.sh";
    std::ofstream(script) << "#!/bin/sh\n"
                             "[ \"$2\" = \"$HPO_LEARNING_RATE\" ] || exit 7\n"
                             "[ \"$4\" = \"$HPO_BATCH_SIZE\" ] || exit 7\n"
                             "echo \"step=1 value=$HPO_BATCH_SIZE\"\n"
                             "echo noise\n"
                             "echo \"final=$HPO_WARMUP_STEPS\"\n";
    RunOptions opt;
    opt.n_trials = 4;
    opt.n_startup_trials = 10;
    auto s = run_study({}, command_objective("sh " + script.string()), opt);
    for (const auto& t : s.trials) {
        REQUIRE(t.state == TrialState::complete);
        CHECK(*t.final_value == t.params.warmup_steps);
        REQUIRE(t.intermediate.size() == 1);
        CHECK(t.intermediate[0].second == t.params.batch_size);
    }

    const auto failing = dir / "fail.sh";
    std::ofstream(failing) << "#!/bin/sh\necho step=1 value=0.5\nexit 3\n";
    opt.n_trials = 1;
    auto f = run_study({}, command_objective("sh " + failing.string()), opt);
    CHECK(f.trials[0].state == TrialState::failed);

    const auto silent = dir / "silent.sh";
    std::ofstream(silent) << "#!/bin/sh\necho step=1 value=0.5\n";
    f = run_study({}, command_objective("sh " + silent.string()), opt);
    CHECK(f.trials[0].state == TrialState::failed);
    std::filesystem::remove_all(dir);
}

TEST_CASE("command objective stops pruned runs") {
    const auto dir = tmp_dir("medcorpus_hpo_prune");
    const auto script = dir / "slow.sh";
    // trial 0 reports 1.0 and finishes; later trials report 0 and would hang
    std::ofstream(script) << "#!/bin/sh\n"
                             "if [ \"$HPO_TRIAL_ID\" = 0 ]; then echo step=1 value=1.0; echo final=1.0; exit 0; fi\n"
                             "echo step=1 value=0.0\n"
                             "sleep 30\n"
                             "echo final=0.0\n";
    RunOptions opt;
    opt.n_trials = 2;
    opt.n_startup_trials = 1;
    const auto t0 = std::chrono::steady_clock::now();
    auto s = run_study({}, command_objective("sh " + script.string()), opt);
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(s.trials[0].state == TrialState::complete);
    CHECK(s.trials[1].state == TrialState::pruned);
    CHECK(secs < 10.0);
    std::filesystem::remove_all(dir);
}
