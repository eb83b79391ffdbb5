#include "medcorpus/corpus.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

#include "medcorpus/error.hpp"
#include "medcorpus/text.hpp"

namespace medcorpus::corpus {

using nlohmann::json;

namespace {

struct KindName {
    SourceKind kind;
    std::string_view name;
};

constexpr KindName kKindNames[] = {
    {SourceKind::radiology_report, "radiology-report"},
    {SourceKind::thesis, "thesis"},
    {SourceKind::ehr, "ehr"},
    {SourceKind::textbook, "textbook"},
    {SourceKind::wiki, "wiki"},
    {SourceKind::webcrawl, "webcrawl"},
    {SourceKind::abstract, "abstract"},
    {SourceKind::other, "other"},
};

}  // namespace

std::string_view to_string(SourceKind kind) {
    for (const auto& kn : kKindNames) {
        if (kn.kind == kind) return kn.name;
    }
    return "other";
}

SourceKind parse_source_kind(std::string_view tag) {
    for (const auto& kn : kKindNames) {
        if (kn.name == tag) return kn.kind;
    }
    if (tag == "radiology" || tag == "radiology_report") return SourceKind::radiology_report;
    return SourceKind::other;
}

// --- JSONL -----------------------------------------------------------------

Document document_from_json(const json& j, std::string_view default_source) {
    if (!j.is_object()) throw DataError("document must be a JSON object");
    Document doc;
    if (auto it = j.find("text"); it == j.end()) {
        throw DataError("missing required field 'text'");
    } else if (!it->is_string()) {
        throw DataError("field 'text' must be a string");
    } else {
        doc.text = it->get<std::string>();
    }
    if (auto it = j.find("id"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw DataError("field 'id' must be a string");
        doc.id = it->get<std::string>();
        if (doc.id.empty()) throw DataError("field 'id' must be non-empty");
    }
    if (auto it = j.find("source"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw DataError("field 'source' must be a string");
        doc.source = it->get<std::string>();
    } else {
        doc.source = std::string(default_source);
    }
    if (auto it = j.find("date"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw DataError("field 'date' must be an ISO-8601 string");
        auto d = parse_iso_date(it->get<std::string>());
        if (!d) throw DataError("invalid date '" + it->get<std::string>() + "'");
        doc.doc_date = *d;
    }
    if (auto it = j.find("patient_ref"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw DataError("field 'patient_ref' must be a string");
        doc.patient_ref = it->get<std::string>();
    }
    if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw DataError("field 'meta' must be an object");
        for (const auto& [k, v] : it->items()) {
            doc.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
    }
    return doc;
}

json to_json(const Document& doc) {
    json j;
    j["id"] = doc.id;
    j["source"] = doc.source;
    j["text"] = doc.text;
    if (doc.doc_date) j["date"] = format_iso_date(*doc.doc_date);
    if (doc.patient_ref) j["patient_ref"] = *doc.patient_ref;
    if (!doc.metadata.empty()) j["meta"] = doc.metadata;
    return j;
}

LoadResult parse_documents(std::istream& in, std::string_view default_source) {
    LoadResult result;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty()) continue;
        ++result.report.n_lines;
        try {
            auto j = json::parse(line);
            Document doc = document_from_json(j, default_source);
            if (doc.source.empty()) throw DataError("no source tag on line and no default source");
            if (doc.id.empty()) doc.id = doc.source + ":" + std::to_string(lineno);
            if (!seen.insert(doc.id).second) throw DataError("duplicate id '" + doc.id + "'");
            result.documents.push_back(std::move(doc));
        } catch (const json::exception& e) {
            result.report.errors.push_back({lineno, std::string("malformed JSON: ") + e.what()});
        } catch (const DataError& e) {
            result.report.errors.push_back({lineno, e.what()});
        }
    }
    result.report.n_documents = result.documents.size();
    return result;
}

LoadResult load_documents(const std::filesystem::path& path, std::string_view default_source) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    auto result = parse_documents(in, default_source);
    result.report.path = path.string();
    return result;
}

void write_documents(std::ostream& out, std::span<const Document> docs) {
    for (const auto& d : docs) out << to_json(d).dump() << '\n';
}

void write_documents(const std::filesystem::path& path, std::span<const Document> docs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    write_documents(out, docs);
}

json to_json(const LoadReport& report) {
    json errors = json::array();
    for (const auto& e : report.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
    return {{"path", report.path},
            {"n_lines", report.n_lines},
            {"n_documents", report.n_documents},
            {"errors", errors}};
}

// --- Cleaning --------------------------------------------------------------

const std::set<std::string>& default_german_stopwords() {
    static const std::set<std::string> words = [] {
        std::set<std::string> s;
        std::istringstream in(
#include "stopwords_de.inc"
        );
        std::string w;
        while (std::getline(in, w)) {
            auto t = text::trim(w);
            if (!t.empty()) s.insert(text::to_lower(t));
        }
        return s;
    }();
    return words;
}

void CleanPolicy::validate() const {
    if (chars_per_page == 0) throw UsageError("chars_per_page must be positive");
    if (stopword_sentence_filter && stopwords.empty()) {
        throw UsageError("stopword filter enabled with an empty stopword list");
    }
}

CleanPolicy CleanPolicy::radiology() {
    CleanPolicy p;
    p.min_chars = 100;
    return p;
}

CleanPolicy CleanPolicy::thesis() {
    CleanPolicy p;
    p.min_pages = 15;
    p.stopword_sentence_filter = true;
    p.stopwords = default_german_stopwords();
    return p;
}

CleanPolicy CleanPolicy::for_kind(SourceKind kind) {
    switch (kind) {
        case SourceKind::radiology_report: return radiology();
        case SourceKind::thesis: return thesis();
        default: return {};
    }
}

std::string_view to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::too_short: return "too-short";
        case RejectReason::too_few_pages: return "too-few-pages";
        case RejectReason::empty_after_filter: return "empty-after-filter";
    }
    return "unknown";
}

namespace {

bool has_stopword(std::string_view sentence, const std::set<std::string>& stopwords) {
    for (auto w : text::pretokenize(sentence)) {
        if (stopwords.contains(text::to_lower(w))) return true;
    }
    return false;
}

}  // namespace

CleanOutcome clean_document(const Document& doc, const CleanPolicy& policy) {
    policy.validate();
    CleanOutcome out{doc, std::nullopt};

    std::string filtered;
    std::string_view body = doc.text;
    if (policy.stopword_sentence_filter) {
        for (auto sentence : text::split_sentences(doc.text)) {
            if (!has_stopword(sentence, policy.stopwords)) continue;
            if (!filtered.empty()) filtered.push_back(' ');
            filtered.append(sentence);
        }
        if (filtered.empty()) {
            out.rejection = RejectReason::empty_after_filter;
            return out;
        }
        body = filtered;
    }

    const std::size_t n_chars = text::count_code_points(body);
    if (n_chars < policy.min_chars) {
        out.rejection = RejectReason::too_short;
        return out;
    }
    // pages < min_pages  ⇔  chars < min_pages · chars_per_page
    if (n_chars < policy.min_pages * policy.chars_per_page) {
        out.rejection = RejectReason::too_few_pages;
        return out;
    }
    if (policy.stopword_sentence_filter) out.document.text = std::move(filtered);
    return out;
}

CleanPolicy CleanPolicies::for_document(const Document& doc) const {
    if (auto it = by_source.find(doc.source); it != by_source.end()) return it->second;
    return CleanPolicy::for_kind(doc.kind());
}

CleanResult clean_corpus(std::span<const Document> docs, const CleanPolicies& policies) {
    CleanResult result;
    for (const auto& doc : docs) {
        auto outcome = clean_document(doc, policies.for_document(doc));
        if (outcome.kept()) {
            result.kept.push_back(std::move(outcome.document));
        } else {
            result.rejected.push_back({std::move(outcome.document), *outcome.rejection});
        }
    }
    return result;
}

json to_json(const RejectRecord& record) {
    return {{"id", record.document.id},
            {"source", record.document.source},
            {"reason", std::string(to_string(record.reason))},
            {"n_chars", text::count_code_points(record.document.text)}};
}

// --- Statistics ------------------------------------------------------------

SourceStats& SourceStats::operator+=(const SourceStats& other) {
    n_documents += other.n_documents;
    n_sentences += other.n_sentences;
    n_words += other.n_words;
    size_bytes += other.size_bytes;
    return *this;
}

SourceStats document_stats(std::string_view text) {
    SourceStats s;
    s.n_documents = 1;
    s.n_sentences = text::split_sentences(text).size();
    s.n_words = text::whitespace_words(text).size();
    s.size_bytes = text.size();
    return s;
}

CorpusStats compute_corpus_stats(std::span<const Document> docs) {
    CorpusStats stats;
    for (const auto& d : docs) {
        auto s = document_stats(d.text);
        stats.by_source[d.source] += s;
        stats.total += s;
    }
    return stats;
}

std::uint64_t size_in_megabytes(std::uint64_t bytes, MegabyteUnit unit) {
    const double mb = unit == MegabyteUnit::decimal ? 1e6 : 1048576.0;
    return static_cast<std::uint64_t>(std::llround(static_cast<double>(bytes) / mb));
}

std::string stats_to_tsv(const CorpusStats& stats, MegabyteUnit unit) {
    std::ostringstream out;
    out << "Source\tNo. Documents\tNo. Sentences\tNo. Words\tSize (MB)\n";
    auto row = [&](const std::string& name, const SourceStats& s) {
        out << name << '\t' << s.n_documents << '\t' << s.n_sentences << '\t' << s.n_words << '\t'
            << size_in_megabytes(s.size_bytes, unit) << '\n';
    };
    for (const auto& [source, s] : stats.by_source) row(source, s);
    row("Summary", stats.total);
    return out.str();
}

json stats_to_json(const CorpusStats& stats, MegabyteUnit unit) {
    auto row = [&](const SourceStats& s) {
        return json{{"n_documents", s.n_documents},
                    {"n_sentences", s.n_sentences},
                    {"n_words", s.n_words},
                    {"size_bytes", s.size_bytes},
                    {"size_mb", size_in_megabytes(s.size_bytes, unit)}};
    };
    json sources = json::object();
    for (const auto& [source, s] : stats.by_source) sources[source] = row(s);
    return {{"mb_unit", unit == MegabyteUnit::decimal ? "1e6" : "2^20"},
            {"sources", sources},
            {"total", row(stats.total)}};
}

}  // namespace medcorpus::corpus
