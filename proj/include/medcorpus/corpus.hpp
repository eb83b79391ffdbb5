#pragma once

// Document ingestion, per-source cleaning and corpus statistics.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorpus/date.hpp"

namespace medcorpus::corpus {

// Known source kinds. Source tags on documents stay open-ended strings;
// the kind only selects cleaning defaults.
enum class SourceKind { radiology_report, thesis, ehr, textbook, wiki, webcrawl, abstract, other };

std::string_view to_string(SourceKind kind);
SourceKind parse_source_kind(std::string_view tag);  // unknown tags → other

struct Document {
    std::string id;
    std::string source;
    std::string text;
    std::optional<Date> doc_date;
    std::optional<std::string> patient_ref;
    std::map<std::string, std::string> metadata;

    SourceKind kind() const { return parse_source_kind(source); }
    bool operator==(const Document&) const = default;
};

struct LoadError {
    std::size_t line;  // 1-based
    std::string message;
};

struct LoadReport {
    std::string path;
    std::size_t n_lines = 0;
    std::size_t n_documents = 0;
    std::vector<LoadError> errors;
};

struct LoadResult {
    std::vector<Document> documents;
    LoadReport report;
};

// Parses JSONL. Blank lines are skipped; any malformed line becomes a
// LoadError and contributes no document. Missing ids are synthesized as
// `<source>:<line>`; duplicate ids are errors.
LoadResult parse_documents(std::istream& in, std::string_view default_source);

// Throws DataError when the file cannot be opened.
LoadResult load_documents(const std::filesystem::path& path, std::string_view default_source);

nlohmann::json to_json(const Document& doc);
// Throws DataError on schema violations.
Document document_from_json(const nlohmann::json& j, std::string_view default_source);
void write_documents(std::ostream& out, std::span<const Document> docs);
void write_documents(const std::filesystem::path& path, std::span<const Document> docs);
nlohmann::json to_json(const LoadReport& report);

const std::set<std::string>& default_german_stopwords();

struct CleanPolicy {
    std::size_t min_chars = 0;        // code points
    std::size_t min_pages = 0;
    std::size_t chars_per_page = 1800;
    bool stopword_sentence_filter = false;
    std::set<std::string> stopwords;  // lowercase

    // Throws UsageError.
    void validate() const;

    static CleanPolicy radiology();
    static CleanPolicy thesis();
    static CleanPolicy for_kind(SourceKind kind);
};

enum class RejectReason { too_short, too_few_pages, empty_after_filter };

std::string_view to_string(RejectReason reason);

struct CleanOutcome {
    // Filtered text when kept; the untouched input when rejected.
    Document document;
    std::optional<RejectReason> rejection;

    bool kept() const { return !rejection.has_value(); }
};

// Sentence filtering runs first; length thresholds apply to the filtered
// text, which makes cleaning idempotent on kept documents.
CleanOutcome clean_document(const Document& doc, const CleanPolicy& policy);

// Policy lookup: exact source tag first, then the defaults for the tag's
// SourceKind.
struct CleanPolicies {
    std::map<std::string, CleanPolicy> by_source;

    CleanPolicy for_document(const Document& doc) const;
};

struct RejectRecord {
    Document document;
    RejectReason reason;
};

struct CleanResult {
    std::vector<Document> kept;
    std::vector<RejectRecord> rejected;
};

CleanResult clean_corpus(std::span<const Document> docs, const CleanPolicies& policies);

nlohmann::json to_json(const RejectRecord& record);

struct SourceStats {
    std::uint64_t n_documents = 0;
    std::uint64_t n_sentences = 0;
    std::uint64_t n_words = 0;
    std::uint64_t size_bytes = 0;

    SourceStats& operator+=(const SourceStats& other);
    bool operator==(const SourceStats&) const = default;
};

struct CorpusStats {
    std::map<std::string, SourceStats> by_source;
    SourceStats total;

    bool operator==(const CorpusStats&) const = default;
};

SourceStats document_stats(std::string_view text);
CorpusStats compute_corpus_stats(std::span<const Document> docs);

enum class MegabyteUnit { decimal, binary };  // 1e6 or 2^20 bytes

std::uint64_t size_in_megabytes(std::uint64_t bytes, MegabyteUnit unit);

// Columns: Source, No. Documents, No. Sentences, No. Words, Size (MB);
// final row "Summary" holds the totals.
std::string stats_to_tsv(const CorpusStats& stats, MegabyteUnit unit = MegabyteUnit::decimal);
nlohmann::json stats_to_json(const CorpusStats& stats, MegabyteUnit unit = MegabyteUnit::decimal);

}  // namespace medcorpus::corpus
