#include "medcorpus/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "medcorpus/anonymize.hpp"
#include "medcorpus/corpus.hpp"
#include "medcorpus/dedup.hpp"

namespace medcorpus::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out) throw DataError("write failed: " + path.string());
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string documents_jsonl(std::span<const corpus::Document> docs) {
    std::ostringstream s;
    corpus::write_documents(s, docs);
    return s.str();
}

json section(const json& config, const char* key) {
    if (!config.contains(key)) return json::object();
    const auto& v = config.at(key);
    if (!v.is_object()) throw UsageError(std::string("pipeline config: '") + key + "' must be an object");
    return v;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

std::string hash_file(const fs::path& path) { return hex64(fnv1a(read_file(path))); }

json to_json(const PipelineManifest& m) {
    json stages = json::array();
    for (const auto& s : m.stages) {
        json outputs = json::array();
        for (const auto& o : s.outputs) outputs.push_back({{"path", o.path}, {"hash", o.hash}});
        json row = {{"name", s.name},         {"config_hash", s.config_hash}, {"inputs", s.inputs},
                    {"outputs", outputs},     {"count_in", s.count_in},       {"count_out", s.count_out},
                    {"details", s.details},   {"status", s.status}};
        if (s.error) row["error"] = *s.error;
        stages.push_back(std::move(row));
    }
    json j = {{"stages", stages}, {"status", m.status}};
    if (m.failed_stage) j["failed_stage"] = *m.failed_stage;
    return j;
}

namespace {

class Runner {
public:
    Runner(fs::path base, fs::path out) : base_(std::move(base)), out_(std::move(out)) {}

    template <typename F>
    void stage(const std::string& name, const json& stage_config, F&& body) {
        StageRecord rec;
        rec.name = name;
        rec.config_hash = hex64(fnv1a(stage_config.dump()));
        try {
            body(rec);
        } catch (const std::exception& e) {
            rec.status = "failed";
            rec.error = e.what();
            manifest_.stages.push_back(rec);
            manifest_.status = "failed";
            manifest_.failed_stage = name;
            write_manifest();
            const auto* err = dynamic_cast<const Error*>(&e);
            throw StageError(err ? err->kind() : ErrorKind::internal, name, e.what());
        }
        manifest_.stages.push_back(std::move(rec));
    }

    StageOutput emit(const std::string& rel, std::string_view content) {
        write_file(out_ / rel, content);
        return {rel, hex64(fnv1a(content))};
    }

    void write_manifest() const { write_file(out_ / "manifest.json", to_json(manifest_).dump(2) + "\n"); }

    PipelineManifest& manifest() { return manifest_; }
    const fs::path& base() const { return base_; }

private:
    fs::path base_;
    fs::path out_;
    PipelineManifest manifest_;
};

corpus::CleanPolicy policy_from_json(const json& j, const std::string& source, const fs::path& base,
                                     json& resolved) {
    auto p = corpus::CleanPolicy::for_kind(corpus::parse_source_kind(source));
    p.min_chars = get_or<std::size_t>(j, "min_chars", p.min_chars);
    p.min_pages = get_or<std::size_t>(j, "min_pages", p.min_pages);
    p.chars_per_page = get_or<std::size_t>(j, "chars_per_page", p.chars_per_page);
    p.stopword_sentence_filter = get_or<bool>(j, "stopword_filter", p.stopword_sentence_filter);
    if (j.contains("stopwords_file") && !j.at("stopwords_file").is_null()) {
        const auto path = resolve(base, j.at("stopwords_file").get<std::string>());
        const auto content = read_file(path);
        resolved["stopwords_hash"] = hex64(fnv1a(content));
        std::istringstream in(content);
        std::set<std::string> words;
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
            if (!line.empty()) words.insert(line);
        }
        p.stopwords = std::move(words);
    } else if (p.stopword_sentence_filter && p.stopwords.empty()) {
        p.stopwords = corpus::default_german_stopwords();
    }
    p.validate();
    return p;
}

}  // namespace

PipelineManifest run_pipeline(const json& config, const fs::path& base_dir,
                              const std::optional<fs::path>& output_dir) {
    if (!config.is_object()) throw UsageError("pipeline config must be a JSON object");
    fs::path out;
    if (output_dir) {
        out = *output_dir;
    } else {
        out = resolve(base_dir, get_or<std::string>(config, "output_dir", "pipeline-out"));
    }
    fs::create_directories(out);
    Runner run(base_dir, out);

    std::vector<corpus::Document> docs;

    json ingest_cfg = {{"inputs", config.contains("inputs") ? config.at("inputs") : json::array()}};
    run.stage("ingest", ingest_cfg, [&](StageRecord& rec) {
        json errors = json::array();
        std::set<std::string> seen;
        std::size_t n_lines = 0;
        for (const auto& input : ingest_cfg.at("inputs")) {
            const auto rel = input.at("path").get<std::string>();
            const auto source = get_or<std::string>(input, "source", "other");
            rec.inputs.push_back(rel);
            auto result = corpus::load_documents(resolve(run.base(), rel), source);
            n_lines += result.report.n_lines;
            for (const auto& e : result.report.errors) {
                errors.push_back({{"path", rel}, {"line", e.line}, {"message", e.message}});
            }
            for (auto& d : result.documents) {
                if (!seen.insert(d.id).second) throw DataError("duplicate document id '" + d.id + "' in " + rel);
                docs.push_back(std::move(d));
            }
        }
        rec.count_in = n_lines;
        rec.count_out = docs.size();
        rec.details = {{"n_errors", errors.size()}};
        rec.outputs.push_back(run.emit("ingest.jsonl", documents_jsonl(docs)));
        rec.outputs.push_back(run.emit("ingest_errors.json", errors.dump(2) + "\n"));
    });

    const json clean_cfg = section(config, "clean");
    json clean_resolved = clean_cfg;
    corpus::CleanPolicies policies;
    run.stage("clean", clean_resolved, [&](StageRecord& rec) {
        if (clean_cfg.contains("policies")) {
            for (const auto& [source, pj] : clean_cfg.at("policies").items()) {
                policies.by_source[source] =
                    policy_from_json(pj, source, run.base(), clean_resolved["policies"][source]);
            }
        }
        rec.config_hash = hex64(fnv1a(clean_resolved.dump()));
        rec.inputs.push_back("ingest.jsonl");
        rec.count_in = docs.size();
        auto result = corpus::clean_corpus(docs, policies);
        std::ostringstream rejected;
        for (const auto& r : result.rejected) rejected << corpus::to_json(r).dump() << '\n';
        json reasons = json::object();
        for (const auto& r : result.rejected) {
            const std::string key(corpus::to_string(r.reason));
            reasons[key] = reasons.value(key, 0) + 1;
        }
        docs = std::move(result.kept);
        rec.count_out = docs.size();
        rec.details = {{"rejected", rec.count_in - rec.count_out}, {"reasons", reasons}};
        rec.outputs.push_back(run.emit("clean.jsonl", documents_jsonl(docs)));
        rec.outputs.push_back(run.emit("clean_rejected.jsonl", rejected.str()));
    });

    const json dedup_cfg = section(config, "dedup");
    run.stage("dedup", dedup_cfg, [&](StageRecord& rec) {
        dedup::DedupConfig cfg;
        cfg.threshold = get_or<double>(dedup_cfg, "threshold", cfg.threshold);
        cfg.comparison = dedup::parse_comparison(get_or<std::string>(dedup_cfg, "comparison", "gt"));
        cfg.mode = dedup::parse_mode(get_or<std::string>(dedup_cfg, "mode", "representative"));
        if (dedup_cfg.contains("max_doc_words")) {
            const auto& m = dedup_cfg.at("max_doc_words");
            cfg.max_doc_words = m.is_null() ? std::nullopt : std::optional<std::uint64_t>(m.get<std::uint64_t>());
        }
        cfg.validate();
        const bool indexed = get_or<bool>(dedup_cfg, "indexed", true);
        rec.inputs.push_back("clean.jsonl");
        rec.count_in = docs.size();
        auto result = dedup::dedup_corpus(docs, cfg, indexed);
        docs = std::move(result.kept);
        rec.count_out = docs.size();
        rec.details = {{"removed", result.report.n_removed},
                       {"skipped_long", result.report.n_skipped_long},
                       {"skipped_empty", result.report.n_skipped_empty}};
        rec.outputs.push_back(run.emit("dedup.jsonl", documents_jsonl(docs)));
        rec.outputs.push_back(run.emit("dedup_report.json", dedup::to_json(result.report).dump(2) + "\n"));
    });

    const json anon_cfg = section(config, "anonymize");
    json anon_resolved = anon_cfg;
    run.stage("anonymize", anon_resolved, [&](StageRecord& rec) {
        anonymize::RedactionOptions opts;
        opts.name_wildcard = get_or<std::string>(anon_cfg, "name_wildcard", opts.name_wildcard);
        opts.date_wildcard = get_or<std::string>(anon_cfg, "date_wildcard", opts.date_wildcard);
        opts.delete_names = get_or<bool>(anon_cfg, "delete_names", opts.delete_names);
        std::optional<anonymize::GazetteerRecognizer> recognizer;
        if (anon_cfg.contains("gazetteer") && !anon_cfg.at("gazetteer").is_null()) {
            const auto path = resolve(run.base(), anon_cfg.at("gazetteer").get<std::string>());
            anon_resolved["gazetteer_hash"] = hash_file(path);
            const auto policy = get_or<bool>(anon_cfg, "case_insensitive", false)
                                    ? anonymize::MatchPolicy::case_insensitive
                                    : anonymize::MatchPolicy::case_sensitive;
            recognizer.emplace(anonymize::Gazetteer::load(path, policy));
        }
        rec.config_hash = hex64(fnv1a(anon_resolved.dump()));
        rec.inputs.push_back("dedup.jsonl");
        rec.count_in = docs.size();
        auto result = anonymize::anonymize_corpus(docs, recognizer ? &*recognizer : nullptr, opts);
        docs = std::move(result.documents);
        rec.count_out = docs.size();
        rec.details = {{"name_spans", result.report.total_name_spans},
                       {"date_spans", result.report.total_date_spans},
                       {"redacted", result.report.total_name_spans + result.report.total_date_spans},
                       {"residuals", result.report.residuals.size()}};
        rec.outputs.push_back(run.emit("anonymize.jsonl", documents_jsonl(docs)));
        rec.outputs.push_back(
            run.emit("anonymize_report.json", anonymize::to_json(result.report).dump(2) + "\n"));
        if (!result.report.passed()) {
            throw DataError(std::to_string(result.report.residuals.size()) + " residual identifiers after redaction");
        }
    });

    const json stats_cfg = section(config, "stats");
    run.stage("stats", stats_cfg, [&](StageRecord& rec) {
        const auto unit_name = get_or<std::string>(stats_cfg, "megabyte", "decimal");
        if (unit_name != "decimal" && unit_name != "binary") {
            throw UsageError("stats.megabyte must be 'decimal' or 'binary'");
        }
        const auto unit = unit_name == "binary" ? corpus::MegabyteUnit::binary : corpus::MegabyteUnit::decimal;
        rec.inputs.push_back("anonymize.jsonl");
        rec.count_in = docs.size();
        rec.count_out = docs.size();
        const auto stats = corpus::compute_corpus_stats(docs);
        rec.details = {{"sentences", stats.total.n_sentences}, {"words", stats.total.n_words}};
        rec.outputs.push_back(run.emit("stats.tsv", corpus::stats_to_tsv(stats, unit)));
        rec.outputs.push_back(run.emit("stats.json", corpus::stats_to_json(stats, unit).dump(2) + "\n"));
    });

    run.write_manifest();
    return run.manifest();
}

PipelineManifest run_pipeline_file(const fs::path& config_path, const std::optional<fs::path>& output_dir) {
    json config;
    try {
        config = json::parse(read_file(config_path));
    } catch (const json::exception& e) {
        throw UsageError(config_path.string() + ": " + e.what());
    }
    auto base = config_path.parent_path();
    if (base.empty()) base = ".";
    return run_pipeline(config, base, output_dir);
}

}  // namespace medcorpus::pipeline
