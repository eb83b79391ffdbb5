#include "medcorpus/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "medcorpus/error.hpp"
#include "medcorpus/text.hpp"

namespace medcorpus::dedup {

using nlohmann::json;

std::vector<std::string> analyze(std::string_view text, const AnalyzerConfig& cfg) {
    std::vector<std::string> terms;
    std::size_t start = std::string_view::npos;
    auto flush = [&](std::size_t end) {
        if (start == std::string_view::npos) return;
        auto term = text.substr(start, end - start);
        terms.push_back(cfg.lowercase ? text::to_lower(term) : std::string(term));
        start = std::string_view::npos;
    };
    for (std::size_t i = 0; i < text.size();) {
        auto cp = text::decode_at(text, i);
        if (text::is_alnum(cp.value)) {
            if (start == std::string_view::npos) start = i;
        } else {
            flush(i);
        }
        i += cp.length;
    }
    flush(text.size());
    return terms;
}

BowVector::BowVector(std::string doc_id, std::vector<Entry> counts) : doc_id_(std::move(doc_id)) {
    std::sort(counts.begin(), counts.end(),
              [](const Entry& a, const Entry& b) { return a.first < b.first; });
    for (auto& e : counts) {
        if (e.second == 0) continue;
        if (!counts_.empty() && counts_.back().first == e.first) {
            counts_.back().second += e.second;
        } else {
            counts_.push_back(std::move(e));
        }
    }
    for (const auto& [term, c] : counts_) {
        squared_norm_ += static_cast<std::uint64_t>(c) * c;
        total_count_ += c;
    }
    norm_ = std::sqrt(static_cast<double>(squared_norm_));
}

std::uint32_t BowVector::count(std::string_view term) const {
    auto it = std::lower_bound(counts_.begin(), counts_.end(), term,
                               [](const Entry& e, std::string_view t) { return e.first < t; });
    return (it != counts_.end() && it->first == term) ? it->second : 0;
}

BowVector vectorize(const corpus::Document& doc, const AnalyzerConfig& cfg) {
    std::map<std::string, std::uint32_t> counts;
    for (auto& t : analyze(doc.text, cfg)) ++counts[std::move(t)];
    if (counts.empty()) throw DataError("empty-vector: document '" + doc.id + "' has no terms");
    return BowVector(doc.id, {counts.begin(), counts.end()});
}

std::uint64_t dot(const BowVector& a, const BowVector& b) {
    const auto& x = a.counts();
    const auto& y = b.counts();
    std::uint64_t sum = 0;
    std::size_t i = 0, j = 0;
    while (i < x.size() && j < y.size()) {
        if (x[i].first < y[j].first) {
            ++i;
        } else if (y[j].first < x[i].first) {
            ++j;
        } else {
            sum += static_cast<std::uint64_t>(x[i].second) * y[j].second;
            ++i;
            ++j;
        }
    }
    return sum;
}

namespace {

// Shared by both dedup paths so that their decisions agree bit for bit.
double cosine_from(std::uint64_t dot_product, std::uint64_t sq_a, std::uint64_t sq_b) {
    const double denom = std::sqrt(static_cast<double>(sq_a) * static_cast<double>(sq_b));
    return std::min(1.0, static_cast<double>(dot_product) / denom);
}

}  // namespace

double cosine_similarity(const BowVector& a, const BowVector& b) {
    if (a.squared_norm() == 0 || b.squared_norm() == 0) {
        throw UsageError("cosine_similarity: zero-norm vector");
    }
    return cosine_from(dot(a, b), a.squared_norm(), b.squared_norm());
}

std::string_view to_string(Comparison c) {
    return c == Comparison::strict_greater ? "strict-greater" : "greater-or-equal";
}

std::string_view to_string(Mode m) {
    return m == Mode::representative_keep ? "representative-keep" : "literal-drop";
}

Comparison parse_comparison(std::string_view s) {
    if (s == "strict-greater" || s == "gt") return Comparison::strict_greater;
    if (s == "greater-or-equal" || s == "ge") return Comparison::greater_or_equal;
    throw UsageError("unknown comparison '" + std::string(s) + "'");
}

Mode parse_mode(std::string_view s) {
    if (s == "representative-keep" || s == "representative") return Mode::representative_keep;
    if (s == "literal-drop" || s == "literal") return Mode::literal_drop;
    throw UsageError("unknown dedup mode '" + std::string(s) + "'");
}

void DedupConfig::validate() const {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw UsageError("threshold must lie in (0, 1]");
}

bool DedupReport::same_outcome(const DedupReport& o) const {
    return mode == o.mode && n_input == o.n_input && n_kept == o.n_kept &&
           n_removed == o.n_removed && n_skipped_long == o.n_skipped_long &&
           n_skipped_empty == o.n_skipped_empty && kept == o.kept &&
           clusters == o.clusters;
}

namespace {

struct Eligibility {
    std::vector<bool> eligible;
    std::size_t n_skipped = 0;
};

Eligibility check_inputs(std::span<const BowVector> vectors, const DedupConfig& cfg) {
    cfg.validate();
    Eligibility e;
    e.eligible.resize(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].empty()) {
            throw UsageError("empty-vector: '" + vectors[i].doc_id() + "' cannot take part in dedup");
        }
        e.eligible[i] = !cfg.max_doc_words || vectors[i].total_count() <= *cfg.max_doc_words;
        if (!e.eligible[i]) ++e.n_skipped;
    }
    return e;
}

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent_[b] = a;  // smallest index becomes the root
    }

private:
    std::vector<std::size_t> parent_;
};

DedupReport finish_representative(std::span<const BowVector> vectors,
                                  const std::vector<std::ptrdiff_t>& assigned_to,
                                  std::size_t n_skipped, std::uint64_t pairs) {
    DedupReport r;
    r.mode = Mode::representative_keep;
    r.n_input = vectors.size();
    r.n_skipped_long = n_skipped;
    r.pairs_examined = pairs;
    std::map<std::size_t, std::vector<std::string>> members;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (assigned_to[i] < 0) {
            r.kept.push_back(vectors[i].doc_id());
        } else {
            members[static_cast<std::size_t>(assigned_to[i])].push_back(vectors[i].doc_id());
        }
    }
    for (auto& [rep, ids] : members) r.clusters.push_back({vectors[rep].doc_id(), std::move(ids)});
    r.n_kept = r.kept.size();
    r.n_removed = r.n_input - r.n_kept;
    return r;
}

DedupReport finish_literal(std::span<const BowVector> vectors, DisjointSets& sets,
                           const std::vector<bool>& removed, std::size_t n_skipped,
                           std::uint64_t pairs) {
    DedupReport r;
    r.mode = Mode::literal_drop;
    r.n_input = vectors.size();
    r.n_skipped_long = n_skipped;
    r.pairs_examined = pairs;
    std::map<std::size_t, Cluster> clusters;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (!removed[i]) {
            r.kept.push_back(vectors[i].doc_id());
            continue;
        }
        const std::size_t root = sets.find(i);
        if (root == i) {
            clusters[root].representative = vectors[i].doc_id();
        } else {
            clusters[root].members.push_back(vectors[i].doc_id());
        }
    }
    for (auto& [root, c] : clusters) r.clusters.push_back(std::move(c));
    r.n_kept = r.kept.size();
    r.n_removed = r.n_input - r.n_kept;
    return r;
}

}  // namespace

DedupReport dedup_exact(std::span<const BowVector> vectors, const DedupConfig& cfg) {
    auto elig = check_inputs(vectors, cfg);
    std::uint64_t pairs = 0;

    if (cfg.mode == Mode::representative_keep) {
        std::vector<std::ptrdiff_t> assigned_to(vectors.size(), -1);
        std::vector<std::size_t> kept;
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            if (!elig.eligible[i]) continue;
            for (std::size_t k : kept) {
                ++pairs;
                if (cfg.exceeds(cosine_similarity(vectors[i], vectors[k]))) {
                    assigned_to[i] = static_cast<std::ptrdiff_t>(k);
                    break;
                }
            }
            if (assigned_to[i] < 0) kept.push_back(i);
        }
        return finish_representative(vectors, assigned_to, elig.n_skipped, pairs);
    }

    DisjointSets sets(vectors.size());
    std::vector<bool> removed(vectors.size(), false);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (!elig.eligible[i]) continue;
        for (std::size_t j = i + 1; j < vectors.size(); ++j) {
            if (!elig.eligible[j]) continue;
            ++pairs;
            if (cfg.exceeds(cosine_similarity(vectors[i], vectors[j]))) {
                removed[i] = removed[j] = true;
                sets.unite(i, j);
            }
        }
    }
    return finish_literal(vectors, sets, removed, elig.n_skipped, pairs);
}

namespace {

// Interned view of the eligible vectors. Terms are ranked by ascending
// document frequency so that each document's prefix holds its rarest terms.
struct InternedCorpus {
    struct Doc {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> terms;  // (rank, count), by rank
        std::uint64_t squared_norm = 0;
        std::size_t prefix_len = 0;
    };
    std::vector<Doc> docs;  // parallel to the input span
    std::size_t n_terms = 0;
};

InternedCorpus intern(std::span<const BowVector> vectors, const std::vector<bool>& eligible,
                      double threshold) {
    std::unordered_map<std::string_view, std::uint32_t> ids;
    std::vector<std::string_view> names;
    std::vector<std::uint32_t> df;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (!eligible[i]) continue;
        for (const auto& [term, c] : vectors[i].counts()) {
            auto [it, inserted] = ids.try_emplace(term, static_cast<std::uint32_t>(names.size()));
            if (inserted) {
                names.push_back(term);
                df.push_back(0);
            }
            ++df[it->second];
        }
    }
    std::vector<std::uint32_t> order(names.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return df[a] != df[b] ? df[a] < df[b] : names[a] < names[b];
    });
    std::vector<std::uint32_t> rank(names.size());
    for (std::uint32_t r = 0; r < order.size(); ++r) rank[order[r]] = r;

    InternedCorpus ic;
    ic.n_terms = names.size();
    ic.docs.resize(vectors.size());
    // A document y can only exceed the threshold against x if x contains one
    // of y's prefix terms: otherwise cos ≤ ‖y_suffix‖/‖y‖ < threshold. The
    // (1 - 1e-9) factor keeps the bound conservative under rounding.
    const double bound_factor = threshold * threshold * (1.0 - 1e-9);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (!eligible[i]) continue;
        auto& d = ic.docs[i];
        for (const auto& [term, c] : vectors[i].counts()) d.terms.emplace_back(rank[ids.at(term)], c);
        std::sort(d.terms.begin(), d.terms.end());
        d.squared_norm = vectors[i].squared_norm();
        const double bound = bound_factor * static_cast<double>(d.squared_norm);
        double suffix = 0.0;
        std::size_t p = d.terms.size();
        while (p > 0) {
            const double c = d.terms[p - 1].second;
            if (suffix + c * c >= bound) break;
            suffix += c * c;
            --p;
        }
        d.prefix_len = p;
    }
    return ic;
}

std::uint64_t interned_dot(const InternedCorpus::Doc& a, const InternedCorpus::Doc& b) {
    std::uint64_t sum = 0;
    std::size_t i = 0, j = 0;
    while (i < a.terms.size() && j < b.terms.size()) {
        if (a.terms[i].first < b.terms[j].first) {
            ++i;
        } else if (b.terms[j].first < a.terms[i].first) {
            ++j;
        } else {
            sum += static_cast<std::uint64_t>(a.terms[i].second) * b.terms[j].second;
            ++i;
            ++j;
        }
    }
    return sum;
}

class CandidateCollector {
public:
    explicit CandidateCollector(std::size_t n) : stamp_(n, SIZE_MAX) {}

    // Documents indexed under any term of `query`, in ascending input order.
    const std::vector<std::size_t>& collect(std::size_t query_index, const InternedCorpus::Doc& query,
                                            const std::vector<std::vector<std::size_t>>& postings) {
        out_.clear();
        for (const auto& [rank, c] : query.terms) {
            for (std::size_t y : postings[rank]) {
                if (stamp_[y] == query_index || y == query_index) continue;
                stamp_[y] = query_index;
                out_.push_back(y);
            }
        }
        std::sort(out_.begin(), out_.end());
        return out_;
    }

private:
    std::vector<std::size_t> stamp_;
    std::vector<std::size_t> out_;
};

}  // namespace

DedupReport dedup_indexed(std::span<const BowVector> vectors, const DedupConfig& cfg) {
    auto elig = check_inputs(vectors, cfg);
    auto ic = intern(vectors, elig.eligible, cfg.threshold);
    std::vector<std::vector<std::size_t>> postings(ic.n_terms);
    CandidateCollector collector(vectors.size());
    std::uint64_t pairs = 0;

    auto exceeds = [&](std::size_t x, std::size_t y) {
        ++pairs;
        const auto& a = ic.docs[x];
        const auto& b = ic.docs[y];
        return cfg.exceeds(cosine_from(interned_dot(a, b), a.squared_norm, b.squared_norm));
    };
    auto index_prefix = [&](std::size_t i) {
        const auto& d = ic.docs[i];
        for (std::size_t k = 0; k < d.prefix_len; ++k) postings[d.terms[k].first].push_back(i);
    };

    if (cfg.mode == Mode::representative_keep) {
        std::vector<std::ptrdiff_t> assigned_to(vectors.size(), -1);
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            if (!elig.eligible[i]) continue;
            // Postings only hold kept documents, so ascending input order is
            // the order in which the exact scan visits them.
            for (std::size_t k : collector.collect(i, ic.docs[i], postings)) {
                if (exceeds(i, k)) {
                    assigned_to[i] = static_cast<std::ptrdiff_t>(k);
                    break;
                }
            }
            if (assigned_to[i] < 0) index_prefix(i);
        }
        return finish_representative(vectors, assigned_to, elig.n_skipped, pairs);
    }

    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (elig.eligible[i]) index_prefix(i);
    }
    DisjointSets sets(vectors.size());
    std::vector<bool> removed(vectors.size(), false);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (!elig.eligible[i]) continue;
        for (std::size_t j : collector.collect(i, ic.docs[i], postings)) {
            if (j < i) continue;
            if (exceeds(i, j)) {
                removed[i] = removed[j] = true;
                sets.unite(i, j);
            }
        }
    }
    return finish_literal(vectors, sets, removed, elig.n_skipped, pairs);
}

json to_json(const DedupReport& r, bool include_kept) {
    json clusters = json::array();
    for (const auto& c : r.clusters) {
        clusters.push_back({{"representative", c.representative}, {"members", c.members}});
    }
    json j = {{"mode", std::string(to_string(r.mode))},
              {"n_input", r.n_input},
              {"n_kept", r.n_kept},
              {"n_removed", r.n_removed},
              {"n_skipped_long", r.n_skipped_long},
              {"n_skipped_empty", r.n_skipped_empty},
              {"pairs_examined", r.pairs_examined},
              {"clusters", clusters}};
    if (include_kept) j["kept"] = r.kept;
    return j;
}

CorpusDedupResult dedup_corpus(std::span<const corpus::Document> docs, const DedupConfig& cfg,
                               bool indexed, const AnalyzerConfig& analyzer) {
    cfg.validate();
    std::vector<std::string> source_order;
    std::map<std::string, std::vector<std::size_t>> by_source;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto [it, inserted] = by_source.try_emplace(docs[i].source);
        if (inserted) source_order.push_back(docs[i].source);
        it->second.push_back(i);
    }

    CorpusDedupResult result;
    result.report.mode = cfg.mode;
    result.report.n_input = docs.size();
    std::vector<bool> keep(docs.size(), true);

    for (const auto& source : source_order) {
        std::vector<BowVector> vectors;
        std::vector<std::size_t> positions;
        for (std::size_t i : by_source[source]) {
            auto terms = analyze(docs[i].text, analyzer);
            if (terms.empty()) {
                ++result.report.n_skipped_empty;
                continue;
            }
            std::vector<BowVector::Entry> entries;
            entries.reserve(terms.size());
            for (auto& t : terms) entries.emplace_back(std::move(t), 1);
            vectors.emplace_back(docs[i].id, std::move(entries));
            positions.push_back(i);
        }
        auto rep = indexed ? dedup_indexed(vectors, cfg) : dedup_exact(vectors, cfg);
        result.report.n_skipped_long += rep.n_skipped_long;
        result.report.pairs_examined += rep.pairs_examined;
        for (auto& c : rep.clusters) result.report.clusters.push_back(std::move(c));
        std::size_t next_kept = 0;
        for (std::size_t k = 0; k < vectors.size(); ++k) {
            if (next_kept < rep.kept.size() && rep.kept[next_kept] == vectors[k].doc_id()) {
                ++next_kept;
            } else {
                keep[positions[k]] = false;
            }
        }
    }
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (keep[i]) {
            result.kept.push_back(docs[i]);
            result.report.kept.push_back(docs[i].id);
        }
    }
    result.report.n_kept = result.kept.size();
    result.report.n_removed = result.report.n_input - result.report.n_kept;
    return result;
}

}  // namespace medcorpus::dedup
