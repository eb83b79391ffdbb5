#pragma once

// Name and date de-identification with wildcard substitution.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorpus/corpus.hpp"

namespace medcorpus::anonymize {

enum class SpanKind { name, date };

std::string_view to_string(SpanKind kind);

// Byte offsets into UTF-8 text, end exclusive, on code point boundaries.
struct RedactionSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    SpanKind kind = SpanKind::name;
    std::string surface;
    std::string replacement;

    bool operator==(const RedactionSpan&) const = default;
};

enum class MatchPolicy { case_sensitive, case_insensitive };

struct Gazetteer {
    std::set<std::string> entries;
    MatchPolicy match_policy = MatchPolicy::case_sensitive;

    // One name per line, UTF-8; blank lines and surrounding whitespace ignored.
    static Gazetteer load(const std::filesystem::path& path,
                          MatchPolicy policy = MatchPolicy::case_sensitive);
};

class NameRecognizer {
public:
    virtual ~NameRecognizer() = default;
    // Spans of kind `name`, sorted by start, non-overlapping.
    virtual std::vector<RedactionSpan> detect(std::string_view text) const = 0;
};

// Longest gazetteer match at every word start; a match must end on a word
// boundary. Throws UsageError for an empty gazetteer.
class GazetteerRecognizer final : public NameRecognizer {
public:
    explicit GazetteerRecognizer(Gazetteer gazetteer);

    std::vector<RedactionSpan> detect(std::string_view text) const override;
    const Gazetteer& gazetteer() const { return gazetteer_; }

private:
    Gazetteer gazetteer_;
    // Keyed by the (folded) leading alphanumeric run, longest entry first.
    std::unordered_map<std::string, std::vector<std::string>> by_first_word_;
};

std::vector<RedactionSpan> detect_names(std::string_view text, const NameRecognizer& recognizer);

// DD.MM.YYYY, D.M.YYYY (and mixed widths), DD.MM.YY, `D. <Monat> YYYY`,
// `<Monat> YYYY`, ISO YYYY-MM-DD. Calendar validity is checked; German
// month names match case-insensitively.
std::vector<RedactionSpan> detect_dates(std::string_view text);

struct RedactionOptions {
    std::string name_wildcard = "<NAME>";
    std::string date_wildcard = "<DATE>";
    bool delete_names = false;  // replace names with nothing

    std::string replacement_for(SpanKind kind) const;
};

struct RedactionResult {
    std::string text;
    std::vector<RedactionSpan> applied;  // merged spans, in order, offsets into the input
};

// Overlapping spans are merged (kind of the earlier-starting span) and each
// merged span is substituted. Throws DataError("invalid-span ...") for
// out-of-range or non-boundary offsets.
RedactionResult redact(std::string_view text, std::span<const RedactionSpan> spans,
                       const RedactionOptions& options = {});

// Re-runs name and date detection; any hit is a residual identifier.
std::vector<RedactionSpan> verify(std::string_view redacted, const NameRecognizer* recognizer);
std::vector<RedactionSpan> verify(std::string_view redacted, const Gazetteer& gazetteer);

struct DocumentAnonymization {
    std::string doc_id;
    std::size_t n_name_spans = 0;
    std::size_t n_date_spans = 0;
};

struct Residual {
    std::string doc_id;
    RedactionSpan span;
};

struct AnonymizationReport {
    std::vector<DocumentAnonymization> per_document;
    std::size_t total_name_spans = 0;
    std::size_t total_date_spans = 0;
    std::vector<Residual> residuals;

    bool passed() const { return residuals.empty(); }
};

struct AnonymizeResult {
    std::vector<corpus::Document> documents;
    AnonymizationReport report;
};

// `recognizer` may be null, in which case only dates are redacted.
AnonymizeResult anonymize_corpus(std::span<const corpus::Document> docs,
                                 const NameRecognizer* recognizer,
                                 const RedactionOptions& options = {});

nlohmann::json to_json(const RedactionSpan& span);
nlohmann::json to_json(const AnonymizationReport& report);

}  // namespace medcorpus::anonymize
