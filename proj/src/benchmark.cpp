#include "medcorpus/benchmark.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "medcorpus/error.hpp"
#include "medcorpus/rng.hpp"
#include "medcorpus/text.hpp"

namespace medcorpus::benchmark {

using nlohmann::json;

// --- Code records ----------------------------------------------------------

bool code_matches_system(std::string_view code, CodeSystem system) {
    auto is_d = [](char c) { return c >= '0' && c <= '9'; };
    if (system == CodeSystem::icd10) {
        return code.size() >= 3 && code[0] >= 'A' && code[0] <= 'Z' && is_d(code[1]) && is_d(code[2]);
    }
    return code.size() >= 3 && is_d(code[0]) && code[1] == '-' && is_d(code[2]);
}

std::string_view to_string(CodeSystem system) { return system == CodeSystem::icd10 ? "icd10" : "ops"; }

CodeSystem parse_code_system(std::string_view s) {
    const auto l = text::to_lower(s);
    if (l == "icd10" || l == "icd-10" || l == "icd") return CodeSystem::icd10;
    if (l == "ops") return CodeSystem::ops;
    throw UsageError("unknown code system '" + std::string(s) + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::string(text::trim(field)));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    fields.push_back(std::string(text::trim(field)));
    return fields;
}

CodeSystem parse_system(const std::string& s) {
    try {
        return parse_code_system(s);
    } catch (const UsageError& e) {
        throw DataError(e.what());
    }
}

}  // namespace

std::vector<CodeRecord> parse_code_records(std::istream& in) {
    std::vector<CodeRecord> records;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (!header_seen) {
            header_seen = true;
            const std::vector<std::string> expected{"patient_ref", "code", "system", "date"};
            if (fields != expected) {
                throw DataError("codes CSV line 1: expected header patient_ref,code,system,date");
            }
            continue;
        }
        const auto where = "codes CSV line " + std::to_string(lineno) + ": ";
        if (fields.size() != 4) throw DataError(where + "expected 4 fields");
        CodeRecord r;
        r.patient_ref = fields[0];
        r.code = fields[1];
        try {
            r.system = parse_system(fields[2]);
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
        auto d = parse_iso_date(fields[3]);
        if (r.patient_ref.empty()) throw DataError(where + "empty patient_ref");
        if (r.code.empty()) throw DataError(where + "empty code");
        if (!code_matches_system(r.code, r.system)) {
            throw DataError(where + "code '" + r.code + "' does not match its system");
        }
        if (!d) throw DataError(where + "invalid date '" + fields[3] + "'");
        r.code_date = *d;
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<CodeRecord> load_code_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return parse_code_records(in);
}

// --- BIO -------------------------------------------------------------------

std::optional<std::string> tag_class(std::string_view tag) {
    if (tag == "O") return std::nullopt;
    if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
        return std::string(tag.substr(2));
    }
    throw DataError("invalid BIO tag '" + std::string(tag) + "'");
}

bool is_valid_bio(const TokenLabeledExample& ex) {
    if (ex.tokens.size() != ex.tags.size()) return false;
    std::optional<std::string> prev;
    for (const auto& tag : ex.tags) {
        std::optional<std::string> cls;
        try {
            cls = tag_class(tag);
        } catch (const DataError&) {
            return false;
        }
        if (cls && tag[0] == 'I' && prev != cls) return false;
        prev = cls;
    }
    return true;
}

std::set<std::string> entity_classes(const TokenLabeledExample& ex) {
    std::set<std::string> out;
    for (const auto& tag : ex.tags) {
        if (auto c = tag_class(tag)) out.insert(*c);
    }
    return out;
}

// --- Code assignment -------------------------------------------------------

AssignResult assign_codes(std::span<const corpus::Document> docs, std::span<const CodeRecord> codes,
                          const AssignOptions& options) {
    std::unordered_map<std::string, std::vector<const CodeRecord*>> by_patient;
    for (const auto& c : codes) by_patient[c.patient_ref].push_back(&c);

    AssignResult result;
    for (const auto& doc : docs) {
        if (!doc.patient_ref) throw DataError("document '" + doc.id + "' has no patient_ref");
        if (options.policy == AssignPolicy::date_matched && !doc.doc_date) {
            throw DataError("document '" + doc.id + "' has no date (date-matched policy)");
        }
        LabeledExample ex{doc.id, doc.text, {}, doc.patient_ref};
        if (auto it = by_patient.find(*doc.patient_ref); it != by_patient.end()) {
            for (const auto* c : it->second) {
                if (options.policy == AssignPolicy::date_matched && c->code_date != *doc.doc_date) continue;
                if (options.system && c->system != *options.system) continue;
                std::string label = c->code;
                if (c->system == CodeSystem::icd10 && options.truncate_icd) label = label.substr(0, 3);
                if (options.chapter_filter && !label.starts_with(*options.chapter_filter)) continue;
                ex.labels.insert(std::move(label));
            }
        }
        if (ex.labels.empty()) {
            ++result.n_dropped;
        } else {
            result.examples.push_back(std::move(ex));
        }
    }
    return result;
}

// --- Stratification --------------------------------------------------------

namespace {

constexpr std::size_t kBins = 4;  // train, valid, test, pool

struct Unit {
    std::vector<std::size_t> members;
    std::map<std::string, std::size_t> label_counts;
};

}  // namespace

SplitIndices stratified_split(std::span<const std::set<std::string>> label_sets,
                              std::span<const std::optional<std::string>> groups, const SplitSpec& spec) {
    const std::size_t n = label_sets.size();
    if (groups.size() != n) throw UsageError("stratified_split: groups and labels differ in length");
    if (spec.n_train == 0 || spec.n_valid == 0 || spec.n_test == 0) {
        throw UsageError("split sizes must be positive");
    }
    if (spec.total() > n) {
        throw DataError("infeasible split: " + std::to_string(spec.total()) + " examples requested, " +
                        std::to_string(n) + " available");
    }

    // Units: one per patient when grouping, else one per example.
    std::vector<Unit> units;
    {
        std::map<std::string, std::size_t> unit_of_group;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t u;
            if (spec.group_by_patient && groups[i]) {
                auto [it, inserted] = unit_of_group.try_emplace(*groups[i], units.size());
                if (inserted) units.emplace_back();
                u = it->second;
            } else {
                u = units.size();
                units.emplace_back();
            }
            units[u].members.push_back(i);
            for (const auto& l : label_sets[i]) ++units[u].label_counts[l];
        }
    }

    Rng rng(spec.seed);
    std::vector<std::size_t> unit_order(units.size());
    std::iota(unit_order.begin(), unit_order.end(), 0);
    rng.shuffle(std::span(unit_order));

    std::map<std::string, std::size_t> label_totals;
    for (const auto& u : units) {
        for (const auto& [l, c] : u.label_counts) label_totals[l] += c;
    }
    std::vector<std::string> label_order;
    for (const auto& [l, c] : label_totals) label_order.push_back(l);
    rng.shuffle(std::span(label_order));
    std::map<std::string, std::size_t> label_rank;
    for (std::size_t r = 0; r < label_order.size(); ++r) label_rank[label_order[r]] = r;

    const std::array<std::size_t, kBins> capacity{spec.n_train, spec.n_valid, spec.n_test, n - spec.total()};
    std::array<std::size_t, kBins> remaining = capacity;
    std::array<std::map<std::string, double>, kBins> demand;
    for (std::size_t b = 0; b < kBins; ++b) {
        for (const auto& [l, c] : label_totals) {
            demand[b][l] = static_cast<double>(c) * static_cast<double>(capacity[b]) / static_cast<double>(n);
        }
    }
    std::vector<int> bin_of_unit(units.size(), -1);

    auto place = [&](std::size_t u, const std::string* label) {
        const std::size_t size = units[u].members.size();
        int best = -1;
        for (std::size_t b = 0; b < kBins; ++b) {
            if (remaining[b] < size) continue;
            if (best < 0) {
                best = static_cast<int>(b);
                continue;
            }
            const auto bb = static_cast<std::size_t>(best);
            if (label) {
                const double d = demand[b][*label];
                const double db = demand[bb][*label];
                if (d != db) {
                    if (d > db) best = static_cast<int>(b);
                    continue;
                }
            }
            if (remaining[b] > remaining[bb]) best = static_cast<int>(b);
        }
        if (best < 0) {
            throw DataError("infeasible split: a patient group of " + std::to_string(size) +
                            " examples fits no split");
        }
        const auto b = static_cast<std::size_t>(best);
        bin_of_unit[u] = best;
        remaining[b] -= size;
        for (const auto& [l, c] : units[u].label_counts) demand[b][l] -= static_cast<double>(c);
    };

    // Multi-example units first so that exact sizes stay reachable.
    for (int pass = 0; pass < 2; ++pass) {
        std::vector<std::size_t> pending;
        for (std::size_t u : unit_order) {
            const bool multi = units[u].members.size() > 1;
            if ((pass == 0) == multi) pending.push_back(u);
        }
        std::map<std::string, std::size_t> left;
        std::map<std::string, std::vector<std::size_t>> units_with;
        for (std::size_t u : pending) {
            for (const auto& [l, c] : units[u].label_counts) {
                left[l] += c;
                units_with[l].push_back(u);
            }
        }
        while (true) {
            const std::string* rarest = nullptr;
            for (const auto& [l, c] : left) {
                if (c == 0) continue;
                if (!rarest || c < left[*rarest] || (c == left[*rarest] && label_rank[l] < label_rank[*rarest])) {
                    rarest = &l;
                }
            }
            if (!rarest) break;
            const std::string label = *rarest;
            for (std::size_t u : units_with[label]) {
                if (bin_of_unit[u] >= 0) continue;
                place(u, &label);
                for (const auto& [l, c] : units[u].label_counts) left[l] -= c;
            }
        }
        for (std::size_t u : pending) {
            if (bin_of_unit[u] < 0) place(u, nullptr);  // unlabeled units
        }
    }

    SplitIndices out;
    std::array<std::vector<std::size_t>*, kBins> bins{&out.train, &out.valid, &out.test, &out.pool};
    for (std::size_t u = 0; u < units.size(); ++u) {
        auto& dest = *bins[static_cast<std::size_t>(bin_of_unit[u])];
        dest.insert(dest.end(), units[u].members.begin(), units[u].members.end());
    }
    for (auto* b : bins) std::sort(b->begin(), b->end());
    return out;
}

SplitIndices stratified_split(std::span<const LabeledExample> examples, const SplitSpec& spec) {
    std::vector<std::set<std::string>> labels;
    std::vector<std::optional<std::string>> groups;
    for (const auto& ex : examples) {
        labels.push_back(ex.labels);
        groups.push_back(ex.patient_ref);
    }
    return stratified_split(labels, groups, spec);
}

// --- Label selection -------------------------------------------------------

LabelSelection select_labels(std::vector<LabeledExample>& examples, const SplitIndices& split,
                             std::size_t min_test_support) {
    std::map<std::string, std::size_t> global;
    for (const auto& ex : examples) {
        for (const auto& l : ex.labels) ++global[l];
    }
    LabelSelection sel;
    for (const auto& [l, c] : global) sel.test_support[l] = 0;
    for (std::size_t i : split.test) {
        for (const auto& l : examples.at(i).labels) ++sel.test_support[l];
    }

    std::vector<std::pair<std::string, std::size_t>> ranked(global.begin(), global.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::set<std::string> keep;
    for (const auto& [l, c] : ranked) {
        if (sel.test_support[l] >= min_test_support) {
            sel.labels.push_back(l);
            keep.insert(l);
        }
    }
    if (sel.labels.empty()) {
        throw DataError("empty-task: no label has " + std::to_string(min_test_support) + " test examples");
    }

    std::vector<LabeledExample> kept;
    kept.reserve(examples.size());
    for (auto& ex : examples) {
        std::erase_if(ex.labels, [&](const std::string& l) { return !keep.contains(l); });
        if (ex.labels.empty()) {
            ++sel.n_dropped;
        } else {
            kept.push_back(std::move(ex));
        }
    }
    examples = std::move(kept);
    return sel;
}

namespace {

template <typename T>
std::vector<T> gather(std::span<const T> items, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(items[i]);
    return out;
}

}  // namespace

Benchmark build_classification_benchmark(std::vector<LabeledExample> examples, const SplitSpec& spec) {
    Benchmark bench;
    std::erase_if(examples, [&](const LabeledExample& ex) {
        if (!ex.labels.empty()) return false;
        ++bench.n_dropped;
        return true;
    });

    constexpr std::size_t kMaxRounds = 10;
    for (std::size_t round = 1; round <= kMaxRounds; ++round) {
        auto split = stratified_split(std::span<const LabeledExample>(examples), spec);
        auto sel = select_labels(examples, split, spec.min_test_support);
        bench.n_dropped += sel.n_dropped;
        if (sel.n_dropped > 0) continue;

        // Nothing was dropped, so the split indices still refer to `examples`.
        std::span<const LabeledExample> all(examples);
        bench.train = gather(all, split.train);
        bench.valid = gather(all, split.valid);
        bench.test = gather(all, split.test);
        bench.labels = sel.labels;
        bench.iterations = round;

        std::map<std::string, std::size_t> support;
        for (const auto& ex : bench.test) {
            for (const auto& l : ex.labels) ++support[l];
        }
        for (const auto& l : bench.labels) {
            if (support[l] < spec.min_test_support) {
                throw Error(ErrorKind::internal, "label '" + l + "' lost test support after selection");
            }
        }
        return bench;
    }
    throw DataError("label selection did not reach a fixed point within 10 rounds");
}

NerBenchmark build_ner_benchmark(std::span<const TokenLabeledExample> examples, const SplitSpec& spec) {
    std::vector<std::set<std::string>> labels;
    std::vector<std::optional<std::string>> groups;
    std::set<std::string> classes;
    for (const auto& ex : examples) {
        if (!is_valid_bio(ex)) throw DataError("example '" + ex.doc_id + "' violates BIO tagging");
        labels.push_back(entity_classes(ex));
        classes.insert(labels.back().begin(), labels.back().end());
        groups.push_back(ex.patient_ref);
    }
    auto split = stratified_split(labels, groups, spec);
    NerBenchmark bench;
    bench.train = gather(examples, split.train);
    bench.valid = gather(examples, split.valid);
    bench.test = gather(examples, split.test);
    bench.classes.assign(classes.begin(), classes.end());
    return bench;
}

// --- Distribution ----------------------------------------------------------

std::string DistributionTable::to_tsv() const {
    std::ostringstream out;
    out << "Class\tTrain\tValid\tTest\n";
    std::array<std::size_t, 3> total{};
    for (const auto& c : classes) {
        const auto& row = counts.at(c);
        out << c << '\t' << row[0] << '\t' << row[1] << '\t' << row[2] << '\n';
        for (std::size_t k = 0; k < 3; ++k) total[k] += row[k];
    }
    out << "Total\t" << total[0] << '\t' << total[1] << '\t' << total[2] << '\n';
    out << "Documents\t" << documents[0] << '\t' << documents[1] << '\t' << documents[2] << '\n';
    return out.str();
}

DistributionTable class_distribution(const Benchmark& bench) {
    DistributionTable t;
    t.classes = bench.labels;
    for (const auto& c : t.classes) t.counts[c] = {};
    const std::array<const std::vector<LabeledExample>*, 3> splits{&bench.train, &bench.valid, &bench.test};
    for (std::size_t k = 0; k < 3; ++k) {
        t.documents[k] = splits[k]->size();
        for (const auto& ex : *splits[k]) {
            for (const auto& l : ex.labels) ++t.counts[l][k];
        }
    }
    return t;
}

DistributionTable class_distribution(const NerBenchmark& bench) {
    DistributionTable t;
    t.classes = bench.classes;
    for (const auto& c : t.classes) t.counts[c] = {};
    const std::array<const std::vector<TokenLabeledExample>*, 3> splits{&bench.train, &bench.valid, &bench.test};
    for (std::size_t k = 0; k < 3; ++k) {
        t.documents[k] = splits[k]->size();
        for (const auto& ex : *splits[k]) {
            for (const auto& tag : ex.tags) {
                if (tag.starts_with("B-")) ++t.counts[tag.substr(2)][k];
            }
        }
    }
    return t;
}

// --- Serialization ---------------------------------------------------------

json to_json(const LabeledExample& ex) {
    json j = {{"id", ex.doc_id}, {"text", ex.text}, {"labels", ex.labels}};
    if (ex.patient_ref) j["patient_ref"] = *ex.patient_ref;
    return j;
}

json to_json(const TokenLabeledExample& ex) {
    json j = {{"id", ex.doc_id}, {"tokens", ex.tokens}, {"tags", ex.tags}};
    if (ex.patient_ref) j["patient_ref"] = *ex.patient_ref;
    return j;
}

namespace {

std::optional<std::string> optional_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw DataError(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

}  // namespace

LabeledExample labeled_example_from_json(const json& j) {
    try {
        LabeledExample ex;
        ex.doc_id = j.at("id").get<std::string>();
        ex.text = j.value("text", std::string());
        for (const auto& l : j.at("labels")) ex.labels.insert(l.get<std::string>());
        ex.patient_ref = optional_string(j, "patient_ref");
        return ex;
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid classification example: ") + e.what());
    }
}

TokenLabeledExample token_example_from_json(const json& j) {
    try {
        TokenLabeledExample ex;
        ex.doc_id = j.at("id").get<std::string>();
        ex.tokens = j.at("tokens").get<std::vector<std::string>>();
        ex.tags = j.at("tags").get<std::vector<std::string>>();
        ex.patient_ref = optional_string(j, "patient_ref");
        if (ex.tokens.size() != ex.tags.size()) {
            throw DataError("example '" + ex.doc_id + "': tokens and tags differ in length");
        }
        return ex;
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid NER example: ") + e.what());
    }
}

void write_jsonl(std::ostream& out, std::span<const LabeledExample> examples) {
    for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

void write_jsonl(std::ostream& out, std::span<const TokenLabeledExample> examples) {
    for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

void write_conll(std::ostream& out, std::span<const TokenLabeledExample> examples) {
    for (const auto& ex : examples) {
        if (!is_valid_bio(ex)) throw DataError("example '" + ex.doc_id + "' violates BIO tagging");
        for (std::size_t i = 0; i < ex.tokens.size(); ++i) out << ex.tokens[i] << '\t' << ex.tags[i] << '\n';
        out << '\n';
    }
}

std::vector<TokenLabeledExample> parse_conll(std::istream& in) {
    std::vector<TokenLabeledExample> docs;
    TokenLabeledExample cur;
    std::string line;
    std::size_t lineno = 0;
    auto flush = [&] {
        if (cur.tokens.empty()) return;
        cur.doc_id = "doc-" + std::to_string(docs.size() + 1);
        docs.push_back(std::move(cur));
        cur = {};
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("CoNLL line " + std::to_string(lineno) + ": expected token<TAB>tag");
        }
        cur.tokens.push_back(line.substr(0, tab));
        cur.tags.push_back(line.substr(tab + 1));
    }
    flush();
    return docs;
}

ExampleSet parse_example_set(std::istream& in) {
    ExampleSet set;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        const auto where = "examples line " + std::to_string(lineno) + ": ";
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(where + "malformed JSON");
        }
        const bool ner = j.contains("tags");
        const bool clf = j.contains("labels");
        if (ner == clf) throw DataError(where + "record must carry either 'labels' or 'tags'");
        if ((ner && !set.classification.empty()) || (clf && !set.ner.empty())) {
            throw DataError(where + "mixed classification and NER examples");
        }
        if (ner) {
            set.ner.push_back(token_example_from_json(j));
        } else {
            set.classification.push_back(labeled_example_from_json(j));
        }
    }
    return set;
}

ExampleSet load_example_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return parse_example_set(in);
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write '" + p.string() + "'");
    return out;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
    auto out = open_out(p);
    for (const auto& l : lines) out << l << '\n';
}

}  // namespace

void export_task(const Benchmark& bench, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::array<std::pair<const char*, const std::vector<LabeledExample>*>, 3> splits{
        {{"train", &bench.train}, {"valid", &bench.valid}, {"test", &bench.test}}};
    for (const auto& [name, items] : splits) {
        auto out = open_out(dir / (std::string(name) + ".jsonl"));
        write_jsonl(out, *items);
    }
    write_lines(dir / "labels.txt", bench.labels);
    open_out(dir / "distribution.tsv") << class_distribution(bench).to_tsv();
}

void export_task(const NerBenchmark& bench, const std::filesystem::path& dir, ExportFormat format) {
    std::filesystem::create_directories(dir);
    const std::array<std::pair<const char*, const std::vector<TokenLabeledExample>*>, 3> splits{
        {{"train", &bench.train}, {"valid", &bench.valid}, {"test", &bench.test}}};
    for (const auto& [name, items] : splits) {
        if (format == ExportFormat::conll) {
            auto out = open_out(dir / (std::string(name) + ".conll"));
            write_conll(out, *items);
        } else {
            for (const auto& ex : *items) {
                if (!is_valid_bio(ex)) throw DataError("example '" + ex.doc_id + "' violates BIO tagging");
            }
            auto out = open_out(dir / (std::string(name) + ".jsonl"));
            write_jsonl(out, *items);
        }
    }
    write_lines(dir / "labels.txt", bench.classes);
    open_out(dir / "distribution.tsv") << class_distribution(bench).to_tsv();
}

}  // namespace medcorpus::benchmark
