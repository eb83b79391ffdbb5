#pragma once

// Benchmark dataset construction: code assignment, label selection by
// test-set support, iterative multi-label stratification and export.

#include <array>
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

#include "medcorpus/corpus.hpp"
#include "medcorpus/date.hpp"

namespace medcorpus::benchmark {

enum class CodeSystem { icd10, ops };

struct CodeRecord {
    std::string patient_ref;
    std::string code;
    CodeSystem system = CodeSystem::icd10;
    Date code_date;
};

// ICD-10: letter followed by two digits; OPS: digit, dash, digit.
bool code_matches_system(std::string_view code, CodeSystem system);

std::string_view to_string(CodeSystem system);
CodeSystem parse_code_system(std::string_view s);  // "icd10" or "ops"; UsageError otherwise

// CSV with header `patient_ref,code,system,date`. Throws DataError with the
// offending line number on any malformed row.
std::vector<CodeRecord> parse_code_records(std::istream& in);
std::vector<CodeRecord> load_code_records(const std::filesystem::path& path);

struct LabeledExample {
    std::string doc_id;
    std::string text;
    std::set<std::string> labels;
    std::optional<std::string> patient_ref;

    bool operator==(const LabeledExample&) const = default;
};

struct TokenLabeledExample {
    std::string doc_id;
    std::vector<std::string> tokens;
    std::vector<std::string> tags;  // BIO
    std::optional<std::string> patient_ref;

    bool operator==(const TokenLabeledExample&) const = default;
};

// Entity class of a BIO tag, or nullopt for "O". Throws DataError for
// anything that is not O, B-X or I-X.
std::optional<std::string> tag_class(std::string_view tag);

// |tokens| = |tags| and every I-X continues a B-X or I-X of the same class.
bool is_valid_bio(const TokenLabeledExample& ex);

// Entity classes present in the example (from B- and I- tags).
std::set<std::string> entity_classes(const TokenLabeledExample& ex);

enum class AssignPolicy { date_matched, patient_all };

struct AssignOptions {
    AssignPolicy policy = AssignPolicy::date_matched;
    std::optional<CodeSystem> system;           // keep codes of this system only
    std::optional<std::string> chapter_filter;  // keep codes starting with this prefix
    bool truncate_icd = true;                   // ICD codes → 3-character category
};

struct AssignResult {
    std::vector<LabeledExample> examples;
    std::size_t n_dropped = 0;  // documents left without labels
};

// Throws DataError for documents without patient_ref, or without doc_date
// under the date-matched policy.
AssignResult assign_codes(std::span<const corpus::Document> docs, std::span<const CodeRecord> codes,
                          const AssignOptions& options = {});

struct SplitSpec {
    std::size_t n_train = 1000;
    std::size_t n_valid = 500;
    std::size_t n_test = 500;
    std::uint64_t seed = 0;
    std::size_t min_test_support = 10;
    bool group_by_patient = true;

    std::size_t total() const { return n_train + n_valid + n_test; }
};

// Indices into the input, each split sorted ascending. `pool` holds the
// examples that did not fit into any split.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> valid;
    std::vector<std::size_t> test;
    std::vector<std::size_t> pool;

    bool operator==(const SplitIndices&) const = default;
};

// Iterative multi-label stratification with exact split sizes. With patient
// grouping, all examples of one patient land in the same split; multi-example
// patients are placed before single-example ones. Throws DataError when the
// sizes cannot be met.
SplitIndices stratified_split(std::span<const std::set<std::string>> label_sets,
                              std::span<const std::optional<std::string>> groups, const SplitSpec& spec);

SplitIndices stratified_split(std::span<const LabeledExample> examples, const SplitSpec& spec);

struct LabelSelection {
    std::vector<std::string> labels;  // global frequency descending, ties lexicographic
    std::map<std::string, std::size_t> test_support;
    std::size_t n_dropped = 0;
};

// Keeps labels whose test-split count reaches min_test_support, strips the
// others from every example and drops examples left without labels.
// Throws DataError("empty-task") when no label qualifies.
LabelSelection select_labels(std::vector<LabeledExample>& examples, const SplitIndices& split,
                             std::size_t min_test_support);

struct Benchmark {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> valid;
    std::vector<LabeledExample> test;
    std::vector<std::string> labels;
    std::size_t n_dropped = 0;
    std::size_t iterations = 0;
};

// Alternates splitting and label selection until no example is dropped
// (at most 10 rounds), then re-checks every selected label's test support.
Benchmark build_classification_benchmark(std::vector<LabeledExample> examples, const SplitSpec& spec);

struct NerBenchmark {
    std::vector<TokenLabeledExample> train;
    std::vector<TokenLabeledExample> valid;
    std::vector<TokenLabeledExample> test;
    std::vector<std::string> classes;
};

// Stratifies on the entity classes of each document; no label selection.
NerBenchmark build_ner_benchmark(std::span<const TokenLabeledExample> examples, const SplitSpec& spec);

// Class × split counts. For NER, counts are entity mentions (B- tags, plus
// I- tags that open a span).
struct DistributionTable {
    std::vector<std::string> classes;
    std::map<std::string, std::array<std::size_t, 3>> counts;
    std::array<std::size_t, 3> documents{};

    std::string to_tsv() const;
};

DistributionTable class_distribution(const Benchmark& bench);
DistributionTable class_distribution(const NerBenchmark& bench);

nlohmann::json to_json(const LabeledExample& ex);
nlohmann::json to_json(const TokenLabeledExample& ex);
LabeledExample labeled_example_from_json(const nlohmann::json& j);
TokenLabeledExample token_example_from_json(const nlohmann::json& j);

void write_jsonl(std::ostream& out, std::span<const LabeledExample> examples);
void write_jsonl(std::ostream& out, std::span<const TokenLabeledExample> examples);
// token TAB tag per line, blank line after each document. Throws
// DataError for examples violating BIO validity.
void write_conll(std::ostream& out, std::span<const TokenLabeledExample> examples);
std::vector<TokenLabeledExample> parse_conll(std::istream& in);

// A JSONL file of examples holds one kind only: `labels` records for
// classification or `tokens`/`tags` records for NER. Throws DataError for
// mixed or unrecognised records.
struct ExampleSet {
    std::vector<LabeledExample> classification;
    std::vector<TokenLabeledExample> ner;

    bool is_ner() const { return !ner.empty(); }
};

ExampleSet parse_example_set(std::istream& in);
ExampleSet load_example_set(const std::filesystem::path& path);

enum class ExportFormat { jsonl, conll };

// Writes {train,valid,test}.{jsonl|conll}, labels.txt and distribution.tsv.
void export_task(const Benchmark& bench, const std::filesystem::path& dir);
void export_task(const NerBenchmark& bench, const std::filesystem::path& dir, ExportFormat format);

}  // namespace medcorpus::benchmark
