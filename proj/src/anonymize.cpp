#include "medcorpus/anonymize.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>
#include <optional>

#include "medcorpus/error.hpp"
#include "medcorpus/text.hpp"

namespace medcorpus::anonymize {

using nlohmann::json;

std::string_view to_string(SpanKind kind) { return kind == SpanKind::name ? "name" : "date"; }

Gazetteer Gazetteer::load(const std::filesystem::path& path, MatchPolicy policy) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open gazetteer '" + path.string() + "'");
    Gazetteer g;
    g.match_policy = policy;
    std::string line;
    while (std::getline(in, line)) {
        auto name = text::trim(line);
        if (!name.empty()) g.entries.emplace(name);
    }
    return g;
}

namespace {

bool alnum_before(std::string_view s, std::size_t pos) {
    if (pos == 0) return false;
    std::size_t p = pos - 1;
    while (p > 0 && !text::is_char_boundary(s, p)) --p;
    return text::is_alnum(text::decode_at(s, p).value);
}

bool alnum_at(std::string_view s, std::size_t pos) {
    return pos < s.size() && text::is_alnum(text::decode_at(s, pos).value);
}

// Length in bytes of the alphanumeric run starting at `pos`.
std::size_t alnum_run(std::string_view s, std::size_t pos) {
    std::size_t e = pos;
    while (e < s.size()) {
        auto cp = text::decode_at(s, e);
        if (!text::is_alnum(cp.value)) break;
        e += cp.length;
    }
    return e - pos;
}

}  // namespace

GazetteerRecognizer::GazetteerRecognizer(Gazetteer gazetteer) : gazetteer_(std::move(gazetteer)) {
    if (gazetteer_.entries.empty()) throw UsageError("gazetteer has no entries");
    const bool fold = gazetteer_.match_policy == MatchPolicy::case_insensitive;
    for (const auto& entry : gazetteer_.entries) {
        std::string key = fold ? text::to_lower(entry) : entry;
        const std::size_t head = alnum_run(key, 0);
        if (head == 0) continue;  // cannot start on a word boundary
        by_first_word_[key.substr(0, head)].push_back(key);
    }
    for (auto& [head, list] : by_first_word_) {
        std::sort(list.begin(), list.end(), [](const std::string& a, const std::string& b) {
            return a.size() != b.size() ? a.size() > b.size() : a < b;
        });
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
}

std::vector<RedactionSpan> GazetteerRecognizer::detect(std::string_view original) const {
    const bool fold = gazetteer_.match_policy == MatchPolicy::case_insensitive;
    const std::string folded = fold ? text::to_lower(original) : std::string();
    const std::string_view s = fold ? std::string_view(folded) : original;

    std::vector<RedactionSpan> spans;
    std::size_t i = 0;
    while (i < s.size()) {
        const std::size_t run = alnum_run(s, i);
        if (run == 0) {
            i += text::decode_at(s, i).length;
            continue;
        }
        bool matched = false;
        if (!alnum_before(s, i)) {
            auto it = by_first_word_.find(std::string(s.substr(i, run)));
            if (it != by_first_word_.end()) {
                for (const auto& entry : it->second) {
                    if (s.compare(i, entry.size(), entry) != 0) continue;
                    const std::size_t end = i + entry.size();
                    if (alnum_at(s, end)) continue;
                    spans.push_back({i, end, SpanKind::name, std::string(original.substr(i, end - i)), {}});
                    i = end;
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) i += run;
    }
    return spans;
}

std::vector<RedactionSpan> detect_names(std::string_view text, const NameRecognizer& recognizer) {
    return recognizer.detect(text);
}

// --- Dates -----------------------------------------------------------------

namespace {

constexpr std::array<std::pair<std::string_view, unsigned>, 16> kMonths{{
    {"januar", 1}, {"jänner", 1}, {"februar", 2}, {"feber", 2}, {"märz", 3}, {"maerz", 3},
    {"april", 4}, {"mai", 5}, {"juni", 6}, {"juli", 7}, {"august", 8}, {"september", 9},
    {"oktober", 10}, {"november", 11}, {"dezember", 12}, {"jaenner", 1},
}};

bool digit(std::string_view s, std::size_t i) { return i < s.size() && s[i] >= '0' && s[i] <= '9'; }

// Reads between min and max digits; returns value and advances `i`.
std::optional<int> read_digits(std::string_view s, std::size_t& i, std::size_t min, std::size_t max) {
    std::size_t j = i;
    int v = 0;
    while (j < s.size() && j - i < max && digit(s, j)) v = v * 10 + (s[j++] - '0');
    if (j - i < min || digit(s, j)) return std::nullopt;
    i = j;
    return v;
}

bool valid_date(int y, unsigned m, unsigned d) {
    return std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}.ok();
}

std::size_t skip_spaces(std::string_view s, std::size_t i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n')) ++i;
    return i;
}

// Month name at `i` in folded text, followed by a non-alphanumeric char.
std::optional<std::pair<unsigned, std::size_t>> read_month(std::string_view folded, std::size_t i) {
    for (const auto& [name, month] : kMonths) {
        if (folded.compare(i, name.size(), name) == 0 && !alnum_at(folded, i + name.size())) {
            return std::make_pair(month, i + name.size());
        }
    }
    return std::nullopt;
}

// Each matcher returns the end offset of a match starting at `i`.
std::optional<std::size_t> match_numeric(std::string_view s, std::size_t i) {
    std::size_t j = i;
    const std::size_t day_start = j;
    auto day = read_digits(s, j, 1, 2);
    if (!day || j >= s.size() || s[j] != '.') return std::nullopt;
    const std::size_t day_len = j - day_start;
    ++j;
    const std::size_t month_start = j;
    auto month = read_digits(s, j, 1, 2);
    if (!month || j >= s.size() || s[j] != '.') return std::nullopt;
    const std::size_t month_len = j - month_start;
    ++j;
    const std::size_t year_start = j;
    auto year = read_digits(s, j, 2, 4);
    if (!year) return std::nullopt;
    const std::size_t year_len = j - year_start;
    int full_year = *year;
    if (year_len == 2) {
        if (day_len != 2 || month_len != 2) return std::nullopt;
        full_year += 2000;
    } else if (year_len != 4) {
        return std::nullopt;
    }
    if (alnum_at(s, j)) return std::nullopt;
    if (!valid_date(full_year, static_cast<unsigned>(*month), static_cast<unsigned>(*day))) return std::nullopt;
    return j;
}

std::optional<std::size_t> match_month_year(std::string_view folded, std::size_t i,
                                            std::optional<unsigned> day) {
    auto month = read_month(folded, i);
    if (!month) return std::nullopt;
    std::size_t j = skip_spaces(folded, month->second);
    if (j == month->second) return std::nullopt;
    auto year = read_digits(folded, j, 4, 4);
    if (!year || alnum_at(folded, j)) return std::nullopt;
    if (day && !valid_date(*year, month->first, *day)) return std::nullopt;
    return j;
}

std::optional<std::size_t> match_day_month_name(std::string_view folded, std::size_t i) {
    std::size_t j = i;
    auto day = read_digits(folded, j, 1, 2);
    if (!day || j >= folded.size() || folded[j] != '.') return std::nullopt;
    ++j;
    const std::size_t k = skip_spaces(folded, j);
    if (k == j) return std::nullopt;
    return match_month_year(folded, k, static_cast<unsigned>(*day));
}

std::optional<std::size_t> match_iso(std::string_view s, std::size_t i) {
    std::size_t j = i;
    auto year = read_digits(s, j, 4, 4);
    if (!year || j >= s.size() || s[j] != '-') return std::nullopt;
    ++j;
    auto month = read_digits(s, j, 2, 2);
    if (!month || j >= s.size() || s[j] != '-') return std::nullopt;
    ++j;
    auto day = read_digits(s, j, 2, 2);
    if (!day || alnum_at(s, j)) return std::nullopt;
    if (!valid_date(*year, static_cast<unsigned>(*month), static_cast<unsigned>(*day))) return std::nullopt;
    return j;
}

}  // namespace

std::vector<RedactionSpan> detect_dates(std::string_view original) {
    const std::string folded = text::to_lower(original);
    const std::string_view s = folded;
    std::vector<RedactionSpan> spans;
    std::size_t i = 0;
    while (i < s.size()) {
        const std::size_t run = alnum_run(s, i);
        if (run == 0) {
            i += text::decode_at(s, i).length;
            continue;
        }
        std::optional<std::size_t> end;
        if (!alnum_before(s, i)) {
            for (auto candidate : {match_numeric(s, i), match_day_month_name(s, i), match_iso(s, i),
                                   match_month_year(s, i, std::nullopt)}) {
                if (candidate && (!end || *candidate > *end)) end = candidate;
            }
        }
        if (end) {
            spans.push_back({i, *end, SpanKind::date, std::string(original.substr(i, *end - i)), {}});
            i = *end;
        } else {
            i += run;
        }
    }
    return spans;
}

// --- Redaction -------------------------------------------------------------

std::string RedactionOptions::replacement_for(SpanKind kind) const {
    if (kind == SpanKind::date) return date_wildcard;
    return delete_names ? std::string() : name_wildcard;
}

RedactionResult redact(std::string_view text, std::span<const RedactionSpan> spans,
                       const RedactionOptions& options) {
    for (const auto& sp : spans) {
        if (sp.start >= sp.end || sp.end > text.size() || !text::is_char_boundary(text, sp.start) ||
            !text::is_char_boundary(text, sp.end)) {
            throw DataError("invalid-span [" + std::to_string(sp.start) + ", " +
                            std::to_string(sp.end) + ") for text of " +
                            std::to_string(text.size()) + " bytes");
        }
    }
    std::vector<const RedactionSpan*> order;
    order.reserve(spans.size());
    for (const auto& sp : spans) order.push_back(&sp);
    std::stable_sort(order.begin(), order.end(),
                     [](const RedactionSpan* a, const RedactionSpan* b) { return a->start < b->start; });

    std::vector<RedactionSpan> merged;
    for (const auto* sp : order) {
        if (!merged.empty() && sp->start < merged.back().end) {
            merged.back().end = std::max(merged.back().end, sp->end);
        } else {
            merged.push_back({sp->start, sp->end, sp->kind, {}, {}});
        }
    }

    RedactionResult result;
    result.text.reserve(text.size());
    std::size_t cursor = 0;
    for (auto& m : merged) {
        m.surface = std::string(text.substr(m.start, m.end - m.start));
        m.replacement = options.replacement_for(m.kind);
        result.text.append(text.substr(cursor, m.start - cursor));
        result.text.append(m.replacement);
        cursor = m.end;
    }
    result.text.append(text.substr(cursor));
    result.applied = std::move(merged);
    return result;
}

std::vector<RedactionSpan> verify(std::string_view redacted, const NameRecognizer* recognizer) {
    std::vector<RedactionSpan> residual;
    if (recognizer) residual = recognizer->detect(redacted);
    auto dates = detect_dates(redacted);
    residual.insert(residual.end(), dates.begin(), dates.end());
    std::stable_sort(residual.begin(), residual.end(),
                     [](const RedactionSpan& a, const RedactionSpan& b) { return a.start < b.start; });
    return residual;
}

std::vector<RedactionSpan> verify(std::string_view redacted, const Gazetteer& gazetteer) {
    if (gazetteer.entries.empty()) return verify(redacted, nullptr);
    GazetteerRecognizer recognizer(gazetteer);
    return verify(redacted, &recognizer);
}

AnonymizeResult anonymize_corpus(std::span<const corpus::Document> docs,
                                 const NameRecognizer* recognizer, const RedactionOptions& options) {
    AnonymizeResult result;
    result.documents.reserve(docs.size());
    for (const auto& doc : docs) {
        std::vector<RedactionSpan> spans;
        if (recognizer) spans = recognizer->detect(doc.text);
        auto dates = detect_dates(doc.text);
        spans.insert(spans.end(), dates.begin(), dates.end());

        auto redacted = redact(doc.text, spans, options);
        DocumentAnonymization entry{doc.id, 0, 0};
        for (const auto& sp : redacted.applied) {
            (sp.kind == SpanKind::name ? entry.n_name_spans : entry.n_date_spans)++;
        }
        result.report.total_name_spans += entry.n_name_spans;
        result.report.total_date_spans += entry.n_date_spans;
        result.report.per_document.push_back(std::move(entry));

        for (auto& sp : verify(redacted.text, recognizer)) {
            result.report.residuals.push_back({doc.id, std::move(sp)});
        }
        corpus::Document out = doc;
        out.text = std::move(redacted.text);
        result.documents.push_back(std::move(out));
    }
    return result;
}

json to_json(const RedactionSpan& span) {
    return {{"start", span.start},
            {"end", span.end},
            {"kind", std::string(to_string(span.kind))},
            {"surface", span.surface},
            {"replacement", span.replacement}};
}

json to_json(const AnonymizationReport& report) {
    json docs = json::array();
    for (const auto& d : report.per_document) {
        docs.push_back({{"id", d.doc_id}, {"n_name_spans", d.n_name_spans}, {"n_date_spans", d.n_date_spans}});
    }
    json residuals = json::array();
    for (const auto& r : report.residuals) {
        auto j = to_json(r.span);
        j["id"] = r.doc_id;
        residuals.push_back(std::move(j));
    }
    return {{"documents", docs},
            {"total_name_spans", report.total_name_spans},
            {"total_date_spans", report.total_date_spans},
            {"residuals", residuals},
            {"passed", report.passed()}};
}

}  // namespace medcorpus::anonymize
