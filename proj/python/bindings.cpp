// Python module: documents travel as dicts in the JSONL schema, reports as dicts.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

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

namespace py = pybind11;
using namespace medcorpus;
using nlohmann::json;

namespace {

json to_cpp(const py::handle& obj) {
    return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object to_py(const json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<corpus::Document> docs_from(const py::iterable& items, const std::string& default_source) {
    std::vector<corpus::Document> out;
    for (const auto& item : items) out.push_back(corpus::document_from_json(to_cpp(item), default_source));
    return out;
}

py::list docs_to(std::span<const corpus::Document> docs) {
    py::list out;
    for (const auto& d : docs) out.append(to_py(corpus::to_json(d)));
    return out;
}

py::dict span_dict(const anonymize::RedactionSpan& s) { return to_py(anonymize::to_json(s)); }

// Bools arrive as a Python sequence; a span needs contiguous storage.
struct BoolBuffer {
    std::unique_ptr<bool[]> data;
    std::size_t n;

    explicit BoolBuffer(const std::vector<bool>& v) : data(new bool[v.size()]), n(v.size()) {
        for (std::size_t i = 0; i < n; ++i) data[i] = v[i];
    }
    std::span<const bool> span() const { return {data.get(), n}; }
};

struct PyTrialPruned {};

// Exception types live for the whole process; never released.
PyObject* error_type = nullptr;
PyObject* usage_error_type = nullptr;
PyObject* data_error_type = nullptr;
PyObject* trial_pruned_type = nullptr;

}  // namespace

PYBIND11_MODULE(_medcorpus, m) {
    m.doc() = "Medical text corpus preparation: cleaning, deduplication, anonymization, tokenization, "
              "benchmarks, metrics and hyperparameter search.";

    error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).inc_ref().ptr();
    usage_error_type = py::exception<UsageError>(m, "UsageError", error_type).inc_ref().ptr();
    data_error_type = py::exception<DataError>(m, "DataError", error_type).inc_ref().ptr();
    trial_pruned_type = py::exception<PyTrialPruned>(m, "TrialPruned", PyExc_Exception).inc_ref().ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyObject* type = e.kind() == ErrorKind::usage  ? usage_error_type
                             : e.kind() == ErrorKind::data ? data_error_type
                                                           : error_type;
            PyErr_SetString(type, e.what());
        }
    });

    // corpus
    m.def(
        "load_documents",
        [](const std::filesystem::path& path, const std::string& source) {
            auto r = corpus::load_documents(path, source);
            return py::make_tuple(docs_to(r.documents), to_py(corpus::to_json(r.report)));
        },
        py::arg("path"), py::arg("source") = "other");
    m.def(
        "clean",
        [](const py::iterable& docs, std::optional<std::size_t> min_chars, std::optional<std::size_t> min_pages,
           std::optional<bool> stopword_filter) {
            auto in = docs_from(docs, "other");
            std::vector<corpus::Document> kept;
            py::list rejected;
            for (const auto& d : in) {
                auto p = corpus::CleanPolicy::for_kind(d.kind());
                if (min_chars) p.min_chars = *min_chars;
                if (min_pages) p.min_pages = *min_pages;
                if (stopword_filter) p.stopword_sentence_filter = *stopword_filter;
                p.validate();
                auto o = corpus::clean_document(d, p);
                if (o.kept()) kept.push_back(std::move(o.document));
                else rejected.append(to_py(corpus::to_json(corpus::RejectRecord{o.document, *o.rejection})));
            }
            return py::make_tuple(docs_to(kept), rejected);
        },
        py::arg("documents"), py::arg("min_chars") = py::none(), py::arg("min_pages") = py::none(),
        py::arg("stopword_filter") = py::none());
    m.def(
        "corpus_stats",
        [](const py::iterable& docs, const std::string& megabyte) {
            if (megabyte != "decimal" && megabyte != "binary") throw UsageError("megabyte must be decimal or binary");
            const auto unit = megabyte == "binary" ? corpus::MegabyteUnit::binary : corpus::MegabyteUnit::decimal;
            const auto in = docs_from(docs, "other");
            return to_py(corpus::stats_to_json(corpus::compute_corpus_stats(in), unit));
        },
        py::arg("documents"), py::arg("megabyte") = "decimal");

    // dedup
    m.def(
        "cosine_similarity",
        [](const std::string& a, const std::string& b) {
            corpus::Document da, db;
            da.id = "a";
            da.text = a;
            db.id = "b";
            db.text = b;
            return dedup::cosine_similarity(dedup::vectorize(da), dedup::vectorize(db));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "dedup",
        [](const py::iterable& docs, double threshold, const std::string& comparison, const std::string& mode,
           std::optional<std::uint64_t> max_doc_words, bool indexed) {
            dedup::DedupConfig cfg;
            cfg.threshold = threshold;
            cfg.comparison = dedup::parse_comparison(comparison);
            cfg.mode = dedup::parse_mode(mode);
            cfg.max_doc_words = max_doc_words;
            cfg.validate();
            const auto in = docs_from(docs, "other");
            auto r = dedup::dedup_corpus(in, cfg, indexed);
            return py::make_tuple(docs_to(r.kept), to_py(dedup::to_json(r.report)));
        },
        py::arg("documents"), py::arg("threshold") = 0.75, py::arg("comparison") = "gt",
        py::arg("mode") = "representative", py::arg("max_doc_words") = 128, py::arg("indexed") = true);

    // anonymize
    m.def(
        "detect_dates",
        [](const std::string& text) {
            py::list out;
            for (const auto& s : anonymize::detect_dates(text)) out.append(span_dict(s));
            return out;
        },
        py::arg("text"));
    m.def(
        "anonymize",
        [](const py::iterable& docs, const std::vector<std::string>& names, bool case_insensitive,
           const std::string& name_wildcard, const std::string& date_wildcard, bool delete_names) {
            anonymize::RedactionOptions opt{name_wildcard, date_wildcard, delete_names};
            std::unique_ptr<anonymize::GazetteerRecognizer> rec;
            if (!names.empty()) {
                anonymize::Gazetteer g;
                g.entries = {names.begin(), names.end()};
                g.match_policy = case_insensitive ? anonymize::MatchPolicy::case_insensitive
                                                  : anonymize::MatchPolicy::case_sensitive;
                rec = std::make_unique<anonymize::GazetteerRecognizer>(std::move(g));
            }
            const auto in = docs_from(docs, "other");
            auto r = anonymize::anonymize_corpus(in, rec.get(), opt);
            return py::make_tuple(docs_to(r.documents), to_py(anonymize::to_json(r.report)));
        },
        py::arg("documents"), py::arg("names") = std::vector<std::string>{}, py::arg("case_insensitive") = false,
        py::arg("name_wildcard") = "<NAME>", py::arg("date_wildcard") = "<DATE>", py::arg("delete_names") = false);

    // tokenize
    py::class_<tokenize::Vocabulary>(m, "Vocabulary")
        .def_static(
            "load", [](const std::filesystem::path& p) { return tokenize::Vocabulary::load(p); }, py::arg("path"))
        .def("save", &tokenize::Vocabulary::save, py::arg("path"))
        .def("__len__", &tokenize::Vocabulary::size)
        .def("__contains__", &tokenize::Vocabulary::contains)
        .def_property_readonly("tokens", &tokenize::Vocabulary::tokens)
        .def_property_readonly("unk_id", &tokenize::Vocabulary::unk_id)
        .def("token", &tokenize::Vocabulary::token, py::arg("id"))
        .def(
            "tokenize", [](const tokenize::Vocabulary& v, const std::string& t) { return tokenize::tokenize_text(t, v); },
            py::arg("text"))
        .def(
            "tokenize_word",
            [](const tokenize::Vocabulary& v, const std::string& w) { return tokenize::tokenize_word(w, v); },
            py::arg("word"))
        .def(
            "detokenize_word",
            [](const tokenize::Vocabulary& v, const std::vector<tokenize::TokenId>& ids) {
                return tokenize::detokenize_word(ids, v);
            },
            py::arg("ids"));
    m.def(
        "build_vocab",
        [](const py::iterable& docs, std::size_t vocab_size, std::uint64_t min_char_freq, std::uint64_t min_word_freq) {
            tokenize::VocabConfig cfg;
            cfg.vocab_size = vocab_size;
            cfg.min_char_freq = min_char_freq;
            cfg.min_word_freq = min_word_freq;
            cfg.validate();
            const auto in = docs_from(docs, "other");
            return tokenize::build_vocab(in, cfg);
        },
        py::arg("documents"), py::arg("vocab_size") = 30000, py::arg("min_char_freq") = 3,
        py::arg("min_word_freq") = 20);
    m.def(
        "fertility",
        [](const py::iterable& docs, const tokenize::Vocabulary& v, bool per_document) {
            const auto in = docs_from(docs, "other");
            return to_py(tokenize::to_json(tokenize::measure_fertility(in, v, per_document)));
        },
        py::arg("documents"), py::arg("vocab"), py::arg("per_document") = false);

    // metrics
    m.def(
        "auroc",
        [](const std::vector<double>& scores, const std::vector<bool>& truths) {
            if (scores.size() != truths.size()) throw UsageError("scores and truths differ in length");
            return metrics::auroc(scores, BoolBuffer(truths).span());
        },
        py::arg("scores"), py::arg("truths"));
    m.def(
        "prf",
        [](const std::vector<bool>& predictions, const std::vector<bool>& truths) {
            if (predictions.size() != truths.size()) throw UsageError("predictions and truths differ in length");
            const auto p = metrics::prf(BoolBuffer(predictions).span(), BoolBuffer(truths).span());
            return py::make_tuple(p.precision, p.recall, p.f1);
        },
        py::arg("predictions"), py::arg("truths"));
    m.def(
        "multilabel_report",
        [](const std::vector<std::string>& classes, const std::vector<std::vector<double>>& scores,
           const std::vector<std::vector<bool>>& truths, double threshold) {
            metrics::ScoredPredictions sp{classes, scores, truths};
            sp.validate();
            return to_py(metrics::to_json(metrics::multilabel_report(sp, threshold)));
        },
        py::arg("classes"), py::arg("scores"), py::arg("truths"), py::arg("threshold") = 0.5);

    // benchmark
    m.def(
        "stratified_split",
        [](const std::vector<std::set<std::string>>& labels, const std::vector<std::optional<std::string>>& groups,
           std::size_t n_train, std::size_t n_valid, std::size_t n_test, std::uint64_t seed, bool group_by_patient) {
            if (labels.size() != groups.size()) throw UsageError("labels and groups differ in length");
            benchmark::SplitSpec spec{n_train, n_valid, n_test, seed, 10, group_by_patient};
            const auto s = benchmark::stratified_split(labels, groups, spec);
            py::dict out;
            out["train"] = s.train;
            out["valid"] = s.valid;
            out["test"] = s.test;
            out["pool"] = s.pool;
            return out;
        },
        py::arg("labels"), py::arg("groups"), py::arg("n_train") = 1000, py::arg("n_valid") = 500,
        py::arg("n_test") = 500, py::arg("seed") = 0, py::arg("group_by_patient") = true);

    // hpo
    py::class_<hpo::TrialContext>(m, "TrialContext")
        .def_property_readonly("trial_id", &hpo::TrialContext::trial_id)
        .def_property_readonly("params",
                               [](const hpo::TrialContext& c) {
                                   py::dict d;
                                   d["learning_rate"] = c.params().learning_rate;
                                   d["batch_size"] = c.params().batch_size;
                                   d["warmup_steps"] = c.params().warmup_steps;
                                   return d;
                               })
        .def("report", &hpo::TrialContext::report, py::arg("step"), py::arg("value"))
        .def("should_prune", &hpo::TrialContext::should_prune);
    m.def(
        "run_study",
        [](const py::function& objective, std::size_t n_trials, std::size_t n_startup_trials, std::uint64_t seed,
           const std::string& direction, std::size_t jobs, const py::object& space) {
            hpo::RunOptions opt;
            opt.n_trials = n_trials;
            opt.n_startup_trials = n_startup_trials;
            opt.seed = seed;
            opt.jobs = jobs;
            if (direction == "maximize") opt.direction = hpo::Direction::maximize;
            else if (direction == "minimize") opt.direction = hpo::Direction::minimize;
            else throw UsageError("direction must be maximize or minimize");
            const auto sp = space.is_none() ? hpo::SearchSpace{} : hpo::search_space_from_json(to_cpp(space));
            hpo::Objective obj = [&objective](hpo::TrialContext& ctx) -> double {
                py::gil_scoped_acquire gil;
                try {
                    return objective(py::cast(&ctx, py::return_value_policy::reference)).cast<double>();
                } catch (py::error_already_set& e) {
                    if (e.matches(trial_pruned_type)) throw hpo::TrialPruned{};
                    throw std::runtime_error(e.what());
                }
            };
            hpo::Study study;
            {
                py::gil_scoped_release release;
                study = hpo::run_study(sp, obj, opt);
            }
            return to_py(hpo::to_json(study));
        },
        py::arg("objective"), py::arg("n_trials") = 100, py::arg("n_startup_trials") = 5, py::arg("seed") = 0,
        py::arg("direction") = "maximize", py::arg("jobs") = 1, py::arg("space") = py::none());

    // pretraining schedule and pipeline
    m.def(
        "pretrain_config", [](int phase) { return to_py(pretrain::to_json(pretrain::emit_pretrain_config(phase))); },
        py::arg("phase"));
    m.def(
        "run_pipeline",
        [](const std::filesystem::path& config, std::optional<std::filesystem::path> output_dir) {
            return to_py(pipeline::to_json(pipeline::run_pipeline_file(config, output_dir)));
        },
        py::arg("config"), py::arg("output_dir") = py::none());
}
