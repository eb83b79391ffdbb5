#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "medcorpus/anonymize.hpp"
#include "medcorpus/benchmark.hpp"
#include "medcorpus/corpus.hpp"
#include "medcorpus/dedup.hpp"
#include "medcorpus/error.hpp"
#include "medcorpus/hpo.hpp"
#include "medcorpus/metrics.hpp"
#include "medcorpus/pipeline.hpp"
#include "medcorpus/pretrain.hpp"
#include "medcorpus/tokenize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace medcorpus;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

// Writes to `path`, or stdout when the path is empty or "-".
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty() && path != "-") {
            file_.open(path, std::ios::binary);
            if (!file_) throw DataError("cannot write " + path);
        }
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

void write_text(const std::string& path, const std::string& content) {
    Output out(path);
    out.stream() << content;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<corpus::Document> load_all(const std::vector<std::string>& paths, const std::string& source,
                                       bool strict) {
    std::vector<corpus::Document> docs;
    for (const auto& p : paths) {
        auto r = corpus::load_documents(p, source);
        if (!r.report.errors.empty()) {
            for (const auto& e : r.report.errors) std::cerr << p << ":" << e.line << ": " << e.message << "\n";
            if (strict) throw DataError(p + ": " + std::to_string(r.report.errors.size()) + " malformed lines");
        }
        for (auto& d : r.documents) docs.push_back(std::move(d));
    }
    return docs;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

// `--config file.json` expands into flags placed right after the subcommand
// path, so explicit flags given later take precedence.
std::vector<std::string> expand_config(std::vector<std::string> args, const CLI::App& app) {
    auto it = std::find(args.begin(), args.end(), "--config");
    if (it == args.end()) return args;
    if (std::next(it) == args.end()) throw UsageError("--config needs a file");
    const std::string path = *std::next(it);
    args.erase(it, it + 2);

    const CLI::App* cur = &app;
    std::size_t insert_at = 0;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto subs = cur->get_subcommands([&](const CLI::App* s) { return s->get_name() == args[i]; });
        if (!subs.empty()) {
            cur = subs.front();
            insert_at = i + 1;
        }
    }
    const json cfg = read_json_file(path);
    if (!cfg.is_object()) throw UsageError(path + ": config must be a JSON object");
    std::vector<std::string> extra;
    for (const auto& [key, value] : cfg.items()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (value.is_boolean()) {
            if (value.get<bool>()) extra.push_back(flag);
        } else if (value.is_array()) {
            for (const auto& v : value) {
                extra.push_back(flag);
                extra.push_back(v.is_string() ? v.get<std::string>() : v.dump());
            }
        } else if (!value.is_null()) {
            extra.push_back(flag);
            extra.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at), extra.begin(), extra.end());
    return args;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return 1;
        case ErrorKind::data: return 2;
        case ErrorKind::internal: return 3;
    }
    return 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Medical text corpus toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    Globals g;
    app.add_option("--seed", g.seed, "Seed for stochastic steps");
    app.add_option("--jobs", g.jobs, "Maximum worker width")->check(CLI::PositiveNumber);
    std::string config_placeholder;
    app.add_option("--config", config_placeholder, "JSON file of option values; explicit flags win");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Load JSONL documents and apply per-source cleaning");
    std::vector<std::string> ingest_in;
    std::string ingest_source = "other", ingest_out, ingest_report, ingest_rejected, ingest_stopwords;
    bool ingest_no_clean = false, ingest_strict = false, ingest_filter = false;
    std::optional<std::size_t> ingest_min_chars, ingest_min_pages;
    ingest->add_option("inputs", ingest_in)->required();
    ingest->add_option("--source", ingest_source, "Source tag for records without one");
    ingest->add_option("--out", ingest_out);
    ingest->add_option("--report", ingest_report, "Load report (JSON)");
    ingest->add_option("--rejected", ingest_rejected, "Rejected documents (JSONL)");
    ingest->add_flag("--no-clean", ingest_no_clean);
    ingest->add_flag("--strict", ingest_strict, "Fail on malformed lines");
    ingest->add_option("--min-chars", ingest_min_chars);
    ingest->add_option("--min-pages", ingest_min_pages);
    ingest->add_flag("--stopword-filter", ingest_filter);
    ingest->add_option("--stopwords", ingest_stopwords, "Stopword list, one per line");
    ingest->callback([&] {
        std::vector<corpus::Document> docs;
        json reports = json::array();
        for (const auto& p : ingest_in) {
            auto r = corpus::load_documents(p, ingest_source);
            reports.push_back(corpus::to_json(r.report));
            if (ingest_strict && !r.report.errors.empty()) {
                if (!ingest_report.empty()) write_json(ingest_report, reports);
                throw DataError(p + ": " + std::to_string(r.report.errors.size()) + " malformed lines");
            }
            for (auto& d : r.documents) docs.push_back(std::move(d));
        }
        if (!ingest_report.empty()) write_json(ingest_report, reports);
        if (!ingest_no_clean) {
            corpus::CleanPolicies policies;
            const bool custom = ingest_min_chars || ingest_min_pages || ingest_filter || !ingest_stopwords.empty();
            if (custom) {
                std::set<std::string> sources;
                for (const auto& d : docs) sources.insert(d.source);
                for (const auto& s : sources) {
                    auto pol = corpus::CleanPolicy::for_kind(corpus::parse_source_kind(s));
                    if (ingest_min_chars) pol.min_chars = *ingest_min_chars;
                    if (ingest_min_pages) pol.min_pages = *ingest_min_pages;
                    if (ingest_filter) pol.stopword_sentence_filter = true;
                    if (!ingest_stopwords.empty()) {
                        const auto words = read_lines(ingest_stopwords);
                        pol.stopwords = {words.begin(), words.end()};
                    } else if (pol.stopword_sentence_filter && pol.stopwords.empty()) {
                        pol.stopwords = corpus::default_german_stopwords();
                    }
                    policies.by_source[s] = pol;
                }
            }
            auto result = corpus::clean_corpus(docs, policies);
            if (!ingest_rejected.empty()) {
                Output out(ingest_rejected);
                for (const auto& r : result.rejected) out.stream() << corpus::to_json(r).dump() << '\n';
            }
            std::cerr << "kept " << result.kept.size() << ", rejected " << result.rejected.size() << "\n";
            docs = std::move(result.kept);
        }
        Output out(ingest_out);
        corpus::write_documents(out.stream(), docs);
    });

    // stats
    auto* stats = app.add_subcommand("stats", "Per-source corpus statistics");
    std::vector<std::string> stats_in;
    std::string stats_out, stats_json, stats_mb = "decimal";
    stats->add_option("inputs", stats_in)->required();
    stats->add_option("--out", stats_out, "TSV output");
    stats->add_option("--json", stats_json, "JSON output");
    stats->add_option("--mb", stats_mb)->check(CLI::IsMember({"decimal", "binary"}));
    stats->callback([&] {
        const auto docs = load_all(stats_in, "other", true);
        const auto s = corpus::compute_corpus_stats(docs);
        const auto unit = stats_mb == "binary" ? corpus::MegabyteUnit::binary : corpus::MegabyteUnit::decimal;
        write_text(stats_out, corpus::stats_to_tsv(s, unit));
        if (!stats_json.empty()) write_json(stats_json, corpus::stats_to_json(s, unit));
    });

    // dedup
    auto* dd = app.add_subcommand("dedup", "Near-duplicate removal by bag-of-words cosine similarity");
    std::string dd_in, dd_out, dd_report, dd_mode = "representative", dd_cmp = "gt";
    double dd_threshold = 0.75;
    std::uint64_t dd_max_words = 128;
    bool dd_exact = false, dd_include_kept = false;
    dd->add_option("input", dd_in)->required();
    dd->add_option("--threshold", dd_threshold);
    dd->add_option("--mode", dd_mode, "representative | literal");
    dd->add_option("--comparison", dd_cmp, "gt | ge");
    dd->add_option("--max-words", dd_max_words, "Skip documents with more terms (0 = no limit)");
    dd->add_flag("--exact", dd_exact, "All-pairs comparison instead of the index");
    dd->add_option("--out", dd_out);
    dd->add_option("--report", dd_report);
    dd->add_flag("--include-kept", dd_include_kept, "List kept ids in the report");
    dd->callback([&] {
        dedup::DedupConfig cfg;
        cfg.threshold = dd_threshold;
        cfg.mode = dedup::parse_mode(dd_mode);
        cfg.comparison = dedup::parse_comparison(dd_cmp);
        cfg.max_doc_words = dd_max_words == 0 ? std::nullopt : std::optional<std::uint64_t>(dd_max_words);
        cfg.validate();
        const auto docs = load_all({dd_in}, "other", true);
        const auto result = dedup::dedup_corpus(docs, cfg, !dd_exact);
        Output out(dd_out);
        corpus::write_documents(out.stream(), result.kept);
        if (!dd_report.empty()) write_json(dd_report, dedup::to_json(result.report, dd_include_kept));
        std::cerr << "kept " << result.report.n_kept << ", removed " << result.report.n_removed << "\n";
    });

    // anonymize
    auto* an = app.add_subcommand("anonymize", "Redact names and dates");
    std::string an_in, an_gaz, an_out, an_report, an_name = "<NAME>", an_date = "<DATE>";
    bool an_ci = false, an_delete = false;
    an->add_option("input", an_in)->required();
    an->add_option("--gazetteer", an_gaz, "Names, one per line");
    an->add_flag("--case-insensitive", an_ci);
    an->add_option("--name-wildcard", an_name);
    an->add_option("--date-wildcard", an_date);
    an->add_flag("--delete-names", an_delete);
    an->add_option("--out", an_out);
    an->add_option("--report", an_report);
    an->callback([&] {
        std::optional<anonymize::GazetteerRecognizer> rec;
        if (!an_gaz.empty()) {
            rec.emplace(anonymize::Gazetteer::load(
                an_gaz, an_ci ? anonymize::MatchPolicy::case_insensitive : anonymize::MatchPolicy::case_sensitive));
        }
        anonymize::RedactionOptions opts{an_name, an_date, an_delete};
        const auto docs = load_all({an_in}, "other", true);
        const auto result = anonymize::anonymize_corpus(docs, rec ? &*rec : nullptr, opts);
        Output out(an_out);
        corpus::write_documents(out.stream(), result.documents);
        if (!an_report.empty()) write_json(an_report, anonymize::to_json(result.report));
        if (!result.report.passed()) {
            throw DataError(std::to_string(result.report.residuals.size()) + " residual identifiers");
        }
    });

    // vocab build
    auto* vocab = app.add_subcommand("vocab", "Subword vocabulary");
    vocab->require_subcommand(1);
    auto* vb = vocab->add_subcommand("build", "Build a vocabulary from documents");
    std::vector<std::string> vb_in;
    std::string vb_out;
    tokenize::VocabConfig vcfg;
    vb->add_option("inputs", vb_in)->required();
    vb->add_option("--out", vb_out);
    vb->add_option("--vocab-size", vcfg.vocab_size);
    vb->add_option("--min-char-freq", vcfg.min_char_freq);
    vb->add_option("--min-word-freq", vcfg.min_word_freq);
    vb->callback([&] {
        const auto docs = load_all(vb_in, "other", true);
        const auto v = tokenize::build_vocab(docs, vcfg);
        write_text(vb_out, v.to_text());
        std::cerr << v.size() << " tokens\n";
    });

    // tokenize
    auto* tk = app.add_subcommand("tokenize", "Tokenize documents with a vocabulary");
    std::string tk_in, tk_vocab, tk_out;
    bool tk_ids = false;
    tk->add_option("input", tk_in)->required();
    tk->add_option("--vocab", tk_vocab)->required();
    tk->add_option("--out", tk_out);
    tk->add_flag("--ids", tk_ids, "Emit token ids instead of strings");
    tk->callback([&] {
        const auto v = tokenize::Vocabulary::load(tk_vocab);
        const auto docs = load_all({tk_in}, "other", true);
        Output out(tk_out);
        for (const auto& d : docs) {
            const auto ids = tokenize::tokenize_text(d.text, v);
            json toks = json::array();
            for (auto id : ids) toks.push_back(tk_ids ? json(id) : json(v.token(id)));
            out.stream() << json{{"id", d.id}, {"tokens", toks}}.dump() << '\n';
        }
    });

    // fertility
    auto* fe = app.add_subcommand("fertility", "Average subwords per word");
    std::string fe_in, fe_vocab, fe_out;
    bool fe_per_doc = false;
    fe->add_option("input", fe_in)->required();
    fe->add_option("--vocab", fe_vocab)->required();
    fe->add_option("--out", fe_out);
    fe->add_flag("--per-document", fe_per_doc);
    fe->callback([&] {
        const auto v = tokenize::Vocabulary::load(fe_vocab);
        const auto docs = load_all({fe_in}, "other", true);
        write_json(fe_out, tokenize::to_json(tokenize::measure_fertility(docs, v, fe_per_doc)));
    });

    // bench
    auto* bench = app.add_subcommand("bench", "Benchmark datasets");
    bench->require_subcommand(1);
    benchmark::SplitSpec spec;
    bool no_group = false;
    auto add_split_opts = [&](CLI::App* c) {
        c->add_option("--train", spec.n_train);
        c->add_option("--valid", spec.n_valid);
        c->add_option("--test", spec.n_test);
        c->add_option("--min-test-support", spec.min_test_support);
        c->add_flag("--no-patient-grouping", no_group);
    };
    auto* bb = bench->add_subcommand("build", "Assign codes to documents and build a classification task");
    std::string bb_docs, bb_codes, bb_out, bb_policy = "date", bb_chapter, bb_system;
    bb->add_option("documents", bb_docs)->required();
    bb->add_option("--codes", bb_codes)->required();
    bb->add_option("--out", bb_out)->required();
    bb->add_option("--policy", bb_policy, "date | patient")->check(CLI::IsMember({"date", "patient"}));
    bb->add_option("--chapter", bb_chapter, "Keep codes with this prefix, e.g. 5-");
    bb->add_option("--system", bb_system, "icd10 | ops");
    add_split_opts(bb);
    bb->callback([&] {
        spec.seed = g.seed;
        spec.group_by_patient = !no_group;
        benchmark::AssignOptions opts;
        opts.policy = bb_policy == "date" ? benchmark::AssignPolicy::date_matched : benchmark::AssignPolicy::patient_all;
        if (!bb_chapter.empty()) opts.chapter_filter = bb_chapter;
        if (!bb_system.empty()) opts.system = benchmark::parse_code_system(bb_system);
        const auto docs = load_all({bb_docs}, "other", true);
        const auto codes = benchmark::load_code_records(bb_codes);
        auto assigned = benchmark::assign_codes(docs, codes, opts);
        const auto b = benchmark::build_classification_benchmark(std::move(assigned.examples), spec);
        fs::create_directories(bb_out);
        benchmark::export_task(b, bb_out);
        std::cerr << b.labels.size() << " labels, " << b.n_dropped << " examples dropped\n";
    });
    auto* bs = bench->add_subcommand("split", "Split labeled examples (classification or NER JSONL)");
    std::string bs_in, bs_out, bs_format = "jsonl";
    bs->add_option("input", bs_in)->required();
    bs->add_option("--out", bs_out)->required();
    bs->add_option("--format", bs_format, "jsonl | conll (NER only)")->check(CLI::IsMember({"jsonl", "conll"}));
    add_split_opts(bs);
    bs->callback([&] {
        spec.seed = g.seed;
        spec.group_by_patient = !no_group;
        auto set = benchmark::load_example_set(bs_in);
        fs::create_directories(bs_out);
        if (set.is_ner()) {
            const auto b = benchmark::build_ner_benchmark(set.ner, spec);
            benchmark::export_task(b, bs_out,
                                   bs_format == "conll" ? benchmark::ExportFormat::conll : benchmark::ExportFormat::jsonl);
        } else {
            if (bs_format == "conll") throw UsageError("conll export needs token-labeled examples");
            const auto b = benchmark::build_classification_benchmark(std::move(set.classification), spec);
            benchmark::export_task(b, bs_out);
        }
    });

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate predictions");
    ev->require_subcommand(1);
    std::string ev_gold, ev_pred, ev_out, ev_json, ev_labels;
    double ev_threshold = 0.5;
    auto add_eval_opts = [&](CLI::App* c) {
        c->add_option("--gold", ev_gold)->required();
        c->add_option("--pred", ev_pred)->required();
        c->add_option("--out", ev_out, "TSV report");
        c->add_option("--json", ev_json, "JSON report");
        c->add_option("--labels", ev_labels, "Class list, one per line");
    };
    auto classes = [&] { return ev_labels.empty() ? std::vector<std::string>{} : read_lines(ev_labels); };
    auto emit_report = [&](const metrics::MetricReport& r) {
        write_text(ev_out, r.to_tsv());
        if (!ev_json.empty()) write_json(ev_json, metrics::to_json(r));
    };
    auto* ec = ev->add_subcommand("clf", "Multi-label classification");
    add_eval_opts(ec);
    ec->add_option("--threshold", ev_threshold);
    ec->callback([&] {
        const auto gold = benchmark::load_example_set(ev_gold);
        if (gold.is_ner()) throw UsageError("gold file holds NER examples");
        std::ifstream in(ev_pred, std::ios::binary);
        if (!in) throw DataError("cannot open " + ev_pred);
        const auto preds = metrics::parse_classification_predictions(in);
        emit_report(metrics::evaluate_classification(gold.classification, preds, classes(), ev_threshold));
    });
    auto* en = ev->add_subcommand("ner", "Token-level NER");
    add_eval_opts(en);
    en->callback([&] {
        std::vector<benchmark::TokenLabeledExample> gold;
        if (ev_gold.ends_with(".conll")) {
            std::ifstream in(ev_gold, std::ios::binary);
            if (!in) throw DataError("cannot open " + ev_gold);
            gold = benchmark::parse_conll(in);
        } else {
            auto set = benchmark::load_example_set(ev_gold);
            if (!set.is_ner() && !set.classification.empty()) throw UsageError("gold file holds classification examples");
            gold = std::move(set.ner);
        }
        std::ifstream in(ev_pred, std::ios::binary);
        if (!in) throw DataError("cannot open " + ev_pred);
        const auto preds = metrics::parse_ner_predictions(in);
        emit_report(metrics::evaluate_ner(gold, preds, classes()));
    });

    // hpo run
    auto* hp = app.add_subcommand("hpo", "Hyperparameter search");
    hp->require_subcommand(1);
    auto* hr = hp->add_subcommand("run", "Random search with median pruning");
    std::string hr_space, hr_cmd, hr_study = "study.json", hr_direction = "maximize";
    std::size_t hr_trials = 100, hr_startup = 5;
    bool hr_resume = false;
    hr->add_option("--space", hr_space, "Search space JSON");
    hr->add_option("--cmd", hr_cmd, "Objective command")->required();
    hr->add_option("--trials", hr_trials);
    hr->add_option("--startup-trials", hr_startup);
    hr->add_option("--study", hr_study, "Study file, rewritten after every trial");
    hr->add_option("--direction", hr_direction)->check(CLI::IsMember({"maximize", "minimize"}));
    hr->add_flag("--resume", hr_resume, "Continue the study file");
    hr->callback([&] {
        hpo::RunOptions opts;
        opts.n_trials = hr_trials;
        opts.n_startup_trials = hr_startup;
        opts.seed = g.seed;
        opts.jobs = g.jobs;
        opts.direction = hr_direction == "maximize" ? hpo::Direction::maximize : hpo::Direction::minimize;
        opts.on_trial_finished = [&](const hpo::Study& s) {
            hpo::save_study(s, hr_study);
            const auto& t = s.trials.back();
            std::cerr << "trial " << t.id << " " << hpo::to_string(t.state);
            if (t.final_value) std::cerr << " " << *t.final_value;
            std::cerr << "\n";
        };
        const auto objective = hpo::command_objective(hr_cmd);
        hpo::Study study;
        if (hr_resume && fs::exists(hr_study)) {
            study = hpo::resume_study(hpo::load_study(hr_study), objective, opts);
        } else {
            const auto space = hr_space.empty() ? hpo::SearchSpace{} : hpo::search_space_from_json(read_json_file(hr_space));
            study = hpo::run_study(space, objective, opts);
        }
        hpo::save_study(study, hr_study);
        if (study.n_complete() > 0) {
            const auto& best = hpo::best_trial(study);
            std::cout << json{{"trial", best.id},
                              {"value", *best.final_value},
                              {"learning_rate", best.params.learning_rate},
                              {"batch_size", best.params.batch_size},
                              {"warmup_steps", best.params.warmup_steps}}
                             .dump()
                      << "\n";
        }
    });

    // pretrain-config
    auto* pc = app.add_subcommand("pretrain-config", "Emit a pretraining phase configuration");
    int pc_phase = 1;
    std::string pc_out;
    pc->add_option("--phase", pc_phase)->required();
    pc->add_option("--out", pc_out);
    pc->callback([&] {
        const auto c = pretrain::emit_pretrain_config(pc_phase);
        if (c.warning) std::cerr << "warning: " << *c.warning << "\n";
        write_json(pc_out, pretrain::to_json(c));
    });

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "ingest → clean → dedup → anonymize → stats");
    std::string pl_config, pl_out;
    pl->add_option("config", pl_config, "Pipeline config JSON")->required();
    pl->add_option("--out", pl_out, "Output directory (overrides the config)");
    pl->callback([&] {
        const auto m = pipeline::run_pipeline_file(fs::path(pl_config),
                                              pl_out.empty() ? std::nullopt : std::optional<fs::path>(pl_out));
        for (const auto& s : m.stages) {
            std::cerr << s.name << ": " << s.count_in << " → " << s.count_out << "\n";
        }
    });

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(std::move(args), app);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const pipeline::StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
