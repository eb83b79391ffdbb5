#include "medcorpus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <istream>
#include <sstream>

#include "medcorpus/error.hpp"

namespace medcorpus::metrics {

using nlohmann::json;

namespace {

// Works over any indexable truth container (std::vector<bool> included).
template <typename Truths>
std::optional<double> auroc_of(std::span<const double> scores, const Truths& truths) {
    if (scores.size() != truths.size()) throw UsageError("auroc: scores and truths differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of (1-based, tie-averaged) ranks of the positives.
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (truths[order[k]]) {
                rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    const double np = static_cast<double>(n_pos);
    const double u = rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

}  // namespace

std::optional<double> auroc(std::span<const double> scores, std::span<const bool> truths) {
    return auroc_of(scores, truths);
}

Prf prf_from_counts(const PrfCounts& c) {
    Prf r;
    if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (r.precision + r.recall > 0) r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

Prf prf(std::span<const bool> predictions, std::span<const bool> truths) {
    if (predictions.size() != truths.size()) throw UsageError("prf: predictions and truths differ in length");
    PrfCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] && truths[i]) ++c.tp;
        else if (predictions[i]) ++c.fp;
        else if (truths[i]) ++c.fn;
    }
    return prf_from_counts(c);
}

double round2(double value) { return std::round(value * 100.0) / 100.0; }

void ScoredPredictions::validate() const {
    if (classes.empty()) throw UsageError("scored predictions need at least one class");
    if (scores.size() != classes.size() || truths.size() != classes.size()) {
        throw UsageError("scored predictions: per-class arrays do not match the class list");
    }
    for (std::size_t c = 0; c < classes.size(); ++c) {
        if (scores[c].size() != truths[c].size()) {
            throw UsageError("scored predictions: class '" + classes[c] + "' has mismatched lengths");
        }
    }
}

namespace {

struct Accumulator {
    double auroc = 0.0, f1 = 0.0, precision = 0.0, recall = 0.0;
    std::size_t n_auroc = 0, n_prf = 0;
};

ClassMetrics make_class_metrics(const PrfCounts& counts, std::optional<double> au, std::size_t support) {
    ClassMetrics m;
    const auto p = prf_from_counts(counts);
    m.precision = 100.0 * p.precision;
    m.recall = 100.0 * p.recall;
    m.f1 = 100.0 * p.f1;
    m.support = support;
    m.auroc_defined = au.has_value();
    m.auroc = au ? 100.0 * *au : 0.0;
    m.prf_undefined = counts.tp + counts.fp + counts.fn == 0;
    return m;
}

void finish_macro(MetricReport& r, const PrfCounts& micro) {
    Accumulator acc;
    for (const auto& c : r.classes) {
        const auto& m = r.per_class.at(c);
        if (m.auroc_defined) {
            acc.auroc += m.auroc;
            ++acc.n_auroc;
        } else if (r.has_auroc) {
            r.excluded_from_macro_auroc.push_back(c);
        }
        if (!m.prf_undefined) {
            acc.f1 += m.f1;
            acc.precision += m.precision;
            acc.recall += m.recall;
            ++acc.n_prf;
        } else {
            r.excluded_from_macro_prf.push_back(c);
        }
    }
    if (r.has_auroc && acc.n_auroc > 0) r.macro_auroc = acc.auroc / static_cast<double>(acc.n_auroc);
    if (acc.n_prf > 0) {
        const auto n = static_cast<double>(acc.n_prf);
        r.macro_f1 = acc.f1 / n;
        r.macro_precision = acc.precision / n;
        r.macro_recall = acc.recall / n;
    }
    const auto p = prf_from_counts(micro);
    r.micro_precision = 100.0 * p.precision;
    r.micro_recall = 100.0 * p.recall;
    r.micro_f1 = 100.0 * p.f1;
}

}  // namespace

MetricReport multilabel_report(const ScoredPredictions& scored, double threshold) {
    scored.validate();
    MetricReport r;
    r.classes = scored.classes;
    PrfCounts micro;
    for (std::size_t c = 0; c < scored.classes.size(); ++c) {
        const auto& s = scored.scores[c];
        const auto& t = scored.truths[c];
        PrfCounts counts;
        std::size_t support = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const bool pred = s[i] >= threshold;
            if (t[i]) ++support;
            if (pred && t[i]) ++counts.tp;
            else if (pred) ++counts.fp;
            else if (t[i]) ++counts.fn;
        }
        micro.tp += counts.tp;
        micro.fp += counts.fp;
        micro.fn += counts.fn;
        auto au = auroc_of(s, t);
        r.per_class[scored.classes[c]] = make_class_metrics(counts, au, support);
    }
    finish_macro(r, micro);
    return r;
}

MetricReport ner_token_report(std::span<const benchmark::TokenLabeledExample> gold,
                              std::span<const benchmark::TokenLabeledExample> predicted,
                              const std::vector<std::string>& classes, const TokenScores* token_scores) {
    if (gold.size() != predicted.size()) {
        throw DataError("ner_token_report: " + std::to_string(gold.size()) + " gold vs " +
                        std::to_string(predicted.size()) + " predicted documents");
    }
    if (token_scores && token_scores->size() != gold.size()) {
        throw DataError("ner_token_report: token scores do not cover every document");
    }

    std::set<std::string> class_set(classes.begin(), classes.end());
    std::vector<std::vector<std::optional<std::string>>> gold_cls, pred_cls;
    for (std::size_t d = 0; d < gold.size(); ++d) {
        const auto& g = gold[d];
        const auto& p = predicted[d];
        if (g.tags.size() != p.tags.size()) {
            throw DataError("ner_token_report: document " + std::to_string(d) + " ('" + g.doc_id +
                            "') has " + std::to_string(g.tags.size()) + " gold and " +
                            std::to_string(p.tags.size()) + " predicted tags");
        }
        if (token_scores && (*token_scores)[d].size() != g.tags.size()) {
            throw DataError("ner_token_report: token scores misaligned in document '" + g.doc_id + "'");
        }
        auto& gc = gold_cls.emplace_back();
        auto& pc = pred_cls.emplace_back();
        for (std::size_t t = 0; t < g.tags.size(); ++t) {
            gc.push_back(benchmark::tag_class(g.tags[t]));
            pc.push_back(benchmark::tag_class(p.tags[t]));
            if (gc.back()) class_set.insert(*gc.back());
            if (pc.back()) class_set.insert(*pc.back());
        }
    }

    MetricReport r;
    r.classes.assign(class_set.begin(), class_set.end());
    r.has_auroc = token_scores != nullptr;
    PrfCounts micro;
    for (std::size_t d = 0; d < gold_cls.size(); ++d) {
        for (std::size_t t = 0; t < gold_cls[d].size(); ++t) {
            const auto& g = gold_cls[d][t];
            const auto& p = pred_cls[d][t];
            if (g && p && *g == *p) {
                ++micro.tp;
            } else {
                if (p) ++micro.fp;
                if (g) ++micro.fn;
            }
        }
    }
    for (const auto& cls : r.classes) {
        PrfCounts counts;
        std::size_t support = 0;
        std::vector<double> scores;
        std::vector<bool> truths;
        for (std::size_t d = 0; d < gold_cls.size(); ++d) {
            for (std::size_t t = 0; t < gold_cls[d].size(); ++t) {
                const bool is_g = gold_cls[d][t] == cls;
                const bool is_p = pred_cls[d][t] == cls;
                if (is_g) ++support;
                if (is_g && is_p) ++counts.tp;
                else if (is_p) ++counts.fp;
                else if (is_g) ++counts.fn;
                if (token_scores) {
                    const auto& m = (*token_scores)[d][t];
                    auto it = m.find(cls);
                    scores.push_back(it == m.end() ? 0.0 : it->second);
                    truths.push_back(is_g);
                }
            }
        }
        std::optional<double> au;
        if (token_scores) au = auroc_of(scores, truths);
        r.per_class[cls] = make_class_metrics(counts, au, support);
    }
    finish_macro(r, micro);
    return r;
}

namespace {

std::string fmt2(double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << round2(v);
    return s.str();
}

}  // namespace

std::string MetricReport::to_tsv() const {
    std::ostringstream out;
    out << "Class\tAUROC\tF1\tPrecision\tRecall\n";
    for (const auto& c : classes) {
        const auto& m = per_class.at(c);
        out << c << '\t' << (has_auroc ? fmt2(m.auroc) : "-") << '\t' << fmt2(m.f1) << '\t'
            << fmt2(m.precision) << '\t' << fmt2(m.recall) << '\n';
    }
    out << "Macro\t" << (macro_auroc ? fmt2(*macro_auroc) : "-") << '\t' << fmt2(macro_f1) << '\t'
        << fmt2(macro_precision) << '\t' << fmt2(macro_recall) << '\n';
    out << "Micro\t-\t" << fmt2(micro_f1) << '\t' << fmt2(micro_precision) << '\t' << fmt2(micro_recall)
        << '\n';
    return out.str();
}

json to_json(const MetricReport& r) {
    json classes = json::array();
    for (const auto& c : r.classes) {
        const auto& m = r.per_class.at(c);
        json row = {{"class", c},
                    {"f1", round2(m.f1)},
                    {"precision", round2(m.precision)},
                    {"recall", round2(m.recall)},
                    {"support", m.support}};
        row["auroc"] = r.has_auroc ? json(round2(m.auroc)) : json(nullptr);
        classes.push_back(std::move(row));
    }
    return {{"classes", classes},
            {"macro",
             {{"auroc", r.macro_auroc ? json(round2(*r.macro_auroc)) : json(nullptr)},
              {"f1", round2(r.macro_f1)},
              {"precision", round2(r.macro_precision)},
              {"recall", round2(r.macro_recall)}}},
            {"micro",
             {{"f1", round2(r.micro_f1)},
              {"precision", round2(r.micro_precision)},
              {"recall", round2(r.micro_recall)}}},
            {"excluded_from_macro_auroc", r.excluded_from_macro_auroc},
            {"excluded_from_macro_prf", r.excluded_from_macro_prf}};
}

}  // namespace medcorpus::metrics

namespace medcorpus::metrics {

namespace {

template <typename F>
void for_each_jsonl(std::istream& in, const char* what, F&& f) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            f(json::parse(line));
        } catch (const json::exception& e) {
            throw DataError(std::string(what) + " line " + std::to_string(n) + ": " + e.what());
        }
    }
}

template <typename Gold, typename Pred>
std::vector<const Pred*> match_by_id(std::span<const Gold> gold, std::span<const Pred> preds) {
    std::map<std::string, const Pred*> by_id;
    for (const auto& p : preds) {
        if (!by_id.emplace(p.id, &p).second) throw DataError("duplicate prediction id '" + p.id + "'");
    }
    std::vector<const Pred*> out;
    for (const auto& g : gold) {
        auto it = by_id.find(g.doc_id);
        if (it == by_id.end()) throw DataError("no prediction for '" + g.doc_id + "'");
        out.push_back(it->second);
        by_id.erase(it);
    }
    if (!by_id.empty()) throw DataError("prediction '" + by_id.begin()->first + "' has no gold example");
    return out;
}

}  // namespace

std::vector<ClassificationPrediction> parse_classification_predictions(std::istream& in) {
    std::vector<ClassificationPrediction> out;
    for_each_jsonl(in, "predictions", [&](const json& j) {
        ClassificationPrediction p;
        p.id = j.at("id").get<std::string>();
        p.scores = j.at("scores").get<std::map<std::string, double>>();
        out.push_back(std::move(p));
    });
    return out;
}

std::vector<NerPrediction> parse_ner_predictions(std::istream& in) {
    std::vector<NerPrediction> out;
    for_each_jsonl(in, "predictions", [&](const json& j) {
        NerPrediction p;
        p.id = j.at("id").get<std::string>();
        p.tags = j.at("tags").get<std::vector<std::string>>();
        if (j.contains("scores") && !j.at("scores").is_null()) {
            p.scores = j.at("scores").get<std::vector<std::map<std::string, double>>>();
        }
        out.push_back(std::move(p));
    });
    return out;
}

ScoredPredictions align_classification(std::span<const benchmark::LabeledExample> gold,
                                       std::span<const ClassificationPrediction> predictions,
                                       std::vector<std::string> classes) {
    const auto matched = match_by_id(gold, predictions);
    if (classes.empty()) {
        std::set<std::string> all;
        for (const auto& g : gold) all.insert(g.labels.begin(), g.labels.end());
        classes.assign(all.begin(), all.end());
    }
    ScoredPredictions sp;
    sp.classes = std::move(classes);
    sp.scores.assign(sp.classes.size(), std::vector<double>(gold.size(), 0.0));
    sp.truths.assign(sp.classes.size(), std::vector<bool>(gold.size(), false));
    for (std::size_t c = 0; c < sp.classes.size(); ++c) {
        for (std::size_t i = 0; i < gold.size(); ++i) {
            const auto& m = matched[i]->scores;
            auto it = m.find(sp.classes[c]);
            if (it != m.end()) sp.scores[c][i] = it->second;
            sp.truths[c][i] = gold[i].labels.count(sp.classes[c]) > 0;
        }
    }
    return sp;
}

MetricReport evaluate_classification(std::span<const benchmark::LabeledExample> gold,
                                     std::span<const ClassificationPrediction> predictions,
                                     const std::vector<std::string>& classes, double threshold) {
    return multilabel_report(align_classification(gold, predictions, classes), threshold);
}

MetricReport evaluate_ner(std::span<const benchmark::TokenLabeledExample> gold,
                          std::span<const NerPrediction> predictions, const std::vector<std::string>& classes) {
    const auto matched = match_by_id(gold, predictions);
    std::vector<benchmark::TokenLabeledExample> pred;
    TokenScores scores;
    bool all_scored = !matched.empty();
    for (std::size_t i = 0; i < gold.size(); ++i) {
        benchmark::TokenLabeledExample p;
        p.doc_id = gold[i].doc_id;
        p.tokens = gold[i].tokens;
        p.tags = matched[i]->tags;
        pred.push_back(std::move(p));
        if (matched[i]->scores) scores.push_back(*matched[i]->scores);
        else all_scored = false;
    }
    return ner_token_report(gold, pred, classes, all_scored ? &scores : nullptr);
}

}  // namespace medcorpus::metrics
