#pragma once

// Near-duplicate removal over bag-of-words cosine similarity.
//
// Two implementations with identical output: `dedup_exact` compares every
// pair, `dedup_indexed` generates candidates from an inverted index with
// cosine prefix filtering and verifies each candidate exactly.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorpus/corpus.hpp"

namespace medcorpus::dedup {

struct AnalyzerConfig {
    bool lowercase = true;
};

// Terms: maximal alphanumeric runs, optionally case-folded.
std::vector<std::string> analyze(std::string_view text, const AnalyzerConfig& cfg = {});

class BowVector {
public:
    using Entry = std::pair<std::string, std::uint32_t>;

    BowVector() = default;
    // Counts are merged per term; zero counts are dropped.
    BowVector(std::string doc_id, std::vector<Entry> counts);

    const std::string& doc_id() const { return doc_id_; }
    // Sorted by term, all counts positive.
    const std::vector<Entry>& counts() const { return counts_; }
    std::uint64_t squared_norm() const { return squared_norm_; }
    double norm() const { return norm_; }
    std::uint64_t total_count() const { return total_count_; }
    std::uint32_t count(std::string_view term) const;
    bool empty() const { return counts_.empty(); }

    bool operator==(const BowVector&) const = default;

private:
    std::string doc_id_;
    std::vector<Entry> counts_;
    std::uint64_t squared_norm_ = 0;
    std::uint64_t total_count_ = 0;
    double norm_ = 0.0;
};

// Throws DataError("empty-vector: ...") when the text yields no terms.
BowVector vectorize(const corpus::Document& doc, const AnalyzerConfig& cfg = {});

std::uint64_t dot(const BowVector& a, const BowVector& b);

// dot / sqrt(|a|²·|b|²), clamped to [0,1]. Throws UsageError on zero norm.
double cosine_similarity(const BowVector& a, const BowVector& b);

enum class Comparison { strict_greater, greater_or_equal };
enum class Mode { representative_keep, literal_drop };

std::string_view to_string(Comparison c);
std::string_view to_string(Mode m);
Comparison parse_comparison(std::string_view s);
Mode parse_mode(std::string_view s);

struct DedupConfig {
    double threshold = 0.75;
    Comparison comparison = Comparison::strict_greater;
    Mode mode = Mode::representative_keep;
    // Documents with more analyzer terms than this are kept unconditionally
    // and never compared.
    std::optional<std::uint64_t> max_doc_words = 128;

    void validate() const;  // throws UsageError
    bool exceeds(double similarity) const {
        return comparison == Comparison::strict_greater ? similarity > threshold
                                                        : similarity >= threshold;
    }
};

struct Cluster {
    std::string representative;
    std::vector<std::string> members;

    bool operator==(const Cluster&) const = default;
};

struct DedupReport {
    Mode mode = Mode::representative_keep;
    std::size_t n_input = 0;
    std::size_t n_kept = 0;
    std::size_t n_removed = 0;
    std::size_t n_skipped_long = 0;
    std::size_t n_skipped_empty = 0;  // no analyzer terms; kept uncompared
    std::vector<std::string> kept;  // input order
    std::vector<Cluster> clusters;
    std::uint64_t pairs_examined = 0;

    // Equality of everything except pairs_examined.
    bool same_outcome(const DedupReport& other) const;
};

DedupReport dedup_exact(std::span<const BowVector> vectors, const DedupConfig& cfg);
DedupReport dedup_indexed(std::span<const BowVector> vectors, const DedupConfig& cfg);

nlohmann::json to_json(const DedupReport& report, bool include_kept = false);

struct CorpusDedupResult {
    std::vector<corpus::Document> kept;
    DedupReport report;  // aggregated over sources
};

// Deduplicates within each source tag. Documents whose text yields no
// terms bypass comparison and are kept.
CorpusDedupResult dedup_corpus(std::span<const corpus::Document> docs, const DedupConfig& cfg,
                               bool indexed = true, const AnalyzerConfig& analyzer = {});

}  // namespace medcorpus::dedup
