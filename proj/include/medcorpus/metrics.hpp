#pragma once

// Classification and token-level NER metrics in the percent-scaled layout
// of per-class report tables (Class, AUROC, F1, Precision, Recall).

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorpus/benchmark.hpp"

namespace medcorpus::metrics {

// Mann-Whitney AUROC: P(score of a random positive > score of a random
// negative), ties counting one half. nullopt when either class is absent.
std::optional<double> auroc(std::span<const double> scores, std::span<const bool> truths);

struct PrfCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Zero denominators yield 0.
Prf prf_from_counts(const PrfCounts& c);
Prf prf(std::span<const bool> predictions, std::span<const bool> truths);

struct ClassMetrics {
    // Percent scale [0, 100]; undefined values are reported as 0.
    double auroc = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t support = 0;
    bool auroc_defined = false;
    // True when the class had no gold and no predicted positives.
    bool prf_undefined = false;
};

struct MetricReport {
    std::vector<std::string> classes;
    std::map<std::string, ClassMetrics> per_class;
    // Macro: unweighted means over classes with defined values.
    std::optional<double> macro_auroc;
    double macro_f1 = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    // Micro ("global") aggregates over all class decisions.
    double micro_f1 = 0.0;
    double micro_precision = 0.0;
    double micro_recall = 0.0;
    std::vector<std::string> excluded_from_macro_auroc;
    std::vector<std::string> excluded_from_macro_prf;
    bool has_auroc = true;

    std::string to_tsv() const;
};

nlohmann::json to_json(const MetricReport& report);

struct ScoredPredictions {
    std::vector<std::string> classes;
    std::vector<std::vector<double>> scores;  // [class][example]
    std::vector<std::vector<bool>> truths;    // [class][example]

    void validate() const;  // throws UsageError
};

// A score ≥ threshold is a positive prediction.
MetricReport multilabel_report(const ScoredPredictions& scored, double threshold = 0.5);

// Token-level: each token's class comes from its BIO tag (B-X and I-X are X,
// O is no class). `classes` adds classes that may appear in neither side.
// `token_scores`, when given, holds per document per token a class→score map
// and enables per-class token AUROC.
using TokenScores = std::vector<std::vector<std::map<std::string, double>>>;

MetricReport ner_token_report(std::span<const benchmark::TokenLabeledExample> gold,
                              std::span<const benchmark::TokenLabeledExample> predicted,
                              const std::vector<std::string>& classes = {},
                              const TokenScores* token_scores = nullptr);

// Prediction files (JSONL): classification `{id, scores: {class: real}}`,
// NER `{id, tags: [string], scores?: [{class: real}, ...]}`.
struct ClassificationPrediction {
    std::string id;
    std::map<std::string, double> scores;
};

struct NerPrediction {
    std::string id;
    std::vector<std::string> tags;
    std::optional<std::vector<std::map<std::string, double>>> scores;  // per token
};

std::vector<ClassificationPrediction> parse_classification_predictions(std::istream& in);
std::vector<NerPrediction> parse_ner_predictions(std::istream& in);

// Pairs predictions with gold examples by id. Every gold example needs a
// prediction and vice versa (DataError otherwise). Classes default to the
// sorted union of gold labels; absent scores count as 0.
ScoredPredictions align_classification(std::span<const benchmark::LabeledExample> gold,
                                       std::span<const ClassificationPrediction> predictions,
                                       std::vector<std::string> classes = {});

MetricReport evaluate_classification(std::span<const benchmark::LabeledExample> gold,
                                     std::span<const ClassificationPrediction> predictions,
                                     const std::vector<std::string>& classes = {}, double threshold = 0.5);

// Token AUROC is reported when every prediction carries scores.
MetricReport evaluate_ner(std::span<const benchmark::TokenLabeledExample> gold,
                          std::span<const NerPrediction> predictions,
                          const std::vector<std::string>& classes = {});

// Rounds to two decimals for rendering.
double round2(double value);

}  // namespace medcorpus::metrics
