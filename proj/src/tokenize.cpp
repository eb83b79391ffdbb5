#include "medcorpus/tokenize.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>

#include "medcorpus/error.hpp"
#include "medcorpus/text.hpp"

namespace medcorpus::tokenize {

using nlohmann::json;

void VocabConfig::validate() const {
    if (min_char_freq < 1 || min_word_freq < 1) throw UsageError("frequency thresholds must be >= 1");
    if (continuation_prefix.empty()) throw UsageError("continuation prefix must be non-empty");
    std::set<std::string> unique(special_tokens.begin(), special_tokens.end());
    if (unique.size() != special_tokens.size()) throw UsageError("special tokens must be unique");
    if (vocab_size <= special_tokens.size()) throw UsageError("vocab_size too small for special tokens");
}

// --- Vocabulary ------------------------------------------------------------

void Vocabulary::add(std::string token, TokenKind kind) {
    if (index_.contains(token)) throw DataError("duplicate vocabulary token '" + token + "'");
    const auto id = static_cast<TokenId>(tokens_.size());
    if (token == "[UNK]") {
        unk_id_ = id;
        has_unk_ = true;
    }
    index_.emplace(token, id);
    tokens_.push_back(std::move(token));
    kinds_.push_back(kind);
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens,
                                   const std::vector<std::string>& special_tokens,
                                   std::string continuation_prefix) {
    Vocabulary v;
    v.prefix_ = std::move(continuation_prefix);
    const std::set<std::string> specials(special_tokens.begin(), special_tokens.end());
    for (auto& t : tokens) {
        TokenKind kind = TokenKind::merged;
        if (specials.contains(t)) {
            kind = TokenKind::special;
        } else if (t.starts_with(v.prefix_) && text::count_code_points(t.substr(v.prefix_.size())) == 1) {
            kind = TokenKind::continuation_char;
        } else if (text::count_code_points(t) == 1) {
            kind = TokenKind::alphabet;
        }
        v.add(std::move(t), kind);
    }
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, const VocabConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary '" + path.string() + "'");
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return from_tokens(std::move(tokens), cfg.special_tokens, cfg.continuation_prefix);
}

std::string Vocabulary::to_text() const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary '" + path.string() + "'");
    out << to_text();
}

// --- Character filter ------------------------------------------------------

CharFilterResult filter_rare_chars(std::span<const corpus::Document> docs, std::uint64_t min_char_freq) {
    if (docs.empty()) throw DataError("filter_rare_chars: empty corpus");
    std::map<char32_t, std::uint64_t> counts;
    for (const auto& d : docs) {
        for (const auto& cp : text::decode(d.text)) ++counts[cp.value];
    }
    CharFilterResult result;
    for (const auto& [cp, n] : counts) {
        if (n < min_char_freq) result.removed.insert(cp);
    }
    result.documents.reserve(docs.size());
    for (const auto& d : docs) {
        corpus::Document out = d;
        if (!result.removed.empty()) {
            out.text.clear();
            for (const auto& cp : text::decode(d.text)) {
                if (result.removed.contains(cp.value)) continue;
                out.text.append(d.text, cp.offset, cp.length);
            }
        }
        result.documents.push_back(std::move(out));
    }
    return result;
}

// --- Vocabulary construction ----------------------------------------------

namespace {

class MergeLearner {
public:
    MergeLearner(const std::map<std::string, std::uint64_t>& words, const std::string& prefix,
                 std::set<std::string> forbidden)
        : prefix_(prefix), forbidden_(std::move(forbidden)) {
        for (const auto& [word, freq] : words) {
            Word w{{}, freq};
            bool first = true;
            for (const auto& cp : text::decode(word)) {
                std::string sym = first ? std::string() : prefix_;
                sym.append(word, cp.offset, cp.length);
                w.symbols.push_back(intern(sym));
                first = false;
            }
            words_.push_back(std::move(w));
        }
        for (std::size_t wi = 0; wi < words_.size(); ++wi) {
            add_pairs(wi, +1);
        }
        for (const auto& [key, count] : counts_) push(key);
    }

    // Next merged token, or nullopt when no pair is left.
    std::optional<std::string> next() {
        while (!heap_.empty()) {
            Candidate top = heap_.top();
            heap_.pop();
            auto it = counts_.find(top.key);
            if (it == counts_.end() || it->second != top.count || top.count == 0) continue;
            if (blocked_.contains(top.key)) continue;

            const auto [a, b] = split(top.key);
            std::string merged = symbols_[a] + symbols_[b].substr(prefix_.size());
            if (forbidden_.contains(merged)) {
                blocked_.insert(top.key);
                continue;
            }
            apply(top.key, intern(merged));
            return merged;
        }
        return std::nullopt;
    }

private:
    struct Word {
        std::vector<std::uint32_t> symbols;
        std::uint64_t freq;
    };

    struct Candidate {
        std::uint64_t count;
        std::uint64_t key;
        const std::vector<std::string>* names;

        // Max-heap on count; among equal counts the lexicographically
        // smallest (left, right) pair wins.
        bool operator<(const Candidate& o) const {
            if (count != o.count) return count < o.count;
            const auto& l = (*names)[key >> 32];
            const auto& ol = (*names)[o.key >> 32];
            if (l != ol) return l > ol;
            return (*names)[key & 0xFFFFFFFFu] > (*names)[o.key & 0xFFFFFFFFu];
        }
    };

    static std::uint64_t make_key(std::uint32_t a, std::uint32_t b) {
        return (static_cast<std::uint64_t>(a) << 32) | b;
    }
    static std::pair<std::uint32_t, std::uint32_t> split(std::uint64_t key) {
        return {static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key & 0xFFFFFFFFu)};
    }

    std::uint32_t intern(const std::string& sym) {
        auto [it, inserted] = symbol_ids_.try_emplace(sym, static_cast<std::uint32_t>(symbols_.size()));
        if (inserted) symbols_.push_back(sym);
        return it->second;
    }

    void push(std::uint64_t key) { heap_.push({counts_[key], key, &symbols_}); }

    void add_pairs(std::size_t wi, int sign) {
        const auto& w = words_[wi];
        for (std::size_t k = 0; k + 1 < w.symbols.size(); ++k) {
            const auto key = make_key(w.symbols[k], w.symbols[k + 1]);
            auto& c = counts_[key];
            if (sign > 0) {
                c += w.freq;
                occurrences_[key].push_back(wi);
            } else {
                c -= w.freq;
            }
            touched_.push_back(key);
        }
    }

    void apply(std::uint64_t key, std::uint32_t merged) {
        const auto [a, b] = split(key);
        auto words = occurrences_[key];
        std::sort(words.begin(), words.end());
        words.erase(std::unique(words.begin(), words.end()), words.end());
        touched_.clear();
        for (std::size_t wi : words) {
            auto& syms = words_[wi].symbols;
            bool present = false;
            for (std::size_t k = 0; k + 1 < syms.size(); ++k) {
                if (syms[k] == a && syms[k + 1] == b) {
                    present = true;
                    break;
                }
            }
            if (!present) continue;
            add_pairs(wi, -1);
            std::vector<std::uint32_t> next;
            next.reserve(syms.size());
            for (std::size_t k = 0; k < syms.size(); ++k) {
                if (k + 1 < syms.size() && syms[k] == a && syms[k + 1] == b) {
                    next.push_back(merged);
                    ++k;
                } else {
                    next.push_back(syms[k]);
                }
            }
            syms = std::move(next);
            add_pairs(wi, +1);
        }
        std::sort(touched_.begin(), touched_.end());
        touched_.erase(std::unique(touched_.begin(), touched_.end()), touched_.end());
        for (auto k : touched_) push(k);
    }

    std::string prefix_;
    std::set<std::string> forbidden_;
    std::vector<Word> words_;
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, std::uint32_t> symbol_ids_;
    std::unordered_map<std::uint64_t, std::uint64_t> counts_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> occurrences_;
    std::set<std::uint64_t> blocked_;
    std::vector<std::uint64_t> touched_;
    std::priority_queue<Candidate> heap_;
};

}  // namespace

Vocabulary build_vocab(std::span<const corpus::Document> docs, const VocabConfig& cfg) {
    cfg.validate();
    if (docs.empty()) throw DataError("build_vocab: empty corpus");

    std::map<char32_t, std::uint64_t> char_counts;
    for (const auto& d : docs) {
        for (const auto& cp : text::decode(d.text)) ++char_counts[cp.value];
    }
    auto rare = [&](char32_t cp) { return char_counts[cp] < cfg.min_char_freq; };

    std::map<std::string, std::uint64_t> word_freqs;
    std::set<char32_t> alphabet;
    for (const auto& d : docs) {
        for (auto w : text::pretokenize(d.text)) {
            auto cps = text::decode(w);
            if (std::any_of(cps.begin(), cps.end(), [&](const auto& cp) { return rare(cp.value); })) continue;
            ++word_freqs[std::string(w)];
            for (const auto& cp : cps) alphabet.insert(cp.value);
        }
    }
    if (word_freqs.empty()) throw DataError("build_vocab: corpus has no usable words");

    const std::size_t base = cfg.special_tokens.size() + 2 * alphabet.size();
    if (cfg.vocab_size < base) {
        throw UsageError("vocab_size " + std::to_string(cfg.vocab_size) + " cannot hold " +
                         std::to_string(cfg.special_tokens.size()) + " special tokens and " +
                         std::to_string(2 * alphabet.size()) + " alphabet tokens");
    }

    Vocabulary vocab;
    vocab.prefix_ = cfg.continuation_prefix;
    for (const auto& s : cfg.special_tokens) vocab.add(s, TokenKind::special);
    for (char32_t cp : alphabet) {
        auto ch = text::encode(cp);
        if (!vocab.contains(ch)) vocab.add(ch, TokenKind::alphabet);
    }
    for (char32_t cp : alphabet) {
        auto ch = cfg.continuation_prefix + text::encode(cp);
        if (!vocab.contains(ch)) vocab.add(ch, TokenKind::continuation_char);
    }

    std::vector<std::pair<std::string, std::uint64_t>> frequent;
    std::set<std::string> rare_words;
    for (const auto& [w, f] : word_freqs) {
        if (f >= cfg.min_word_freq) {
            frequent.emplace_back(w, f);
        } else {
            rare_words.insert(w);
        }
    }
    std::stable_sort(frequent.begin(), frequent.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    std::map<std::string, std::uint64_t> merge_words;
    for (const auto& [w, f] : frequent) {
        if (vocab.contains(w)) continue;
        if (vocab.size() >= cfg.vocab_size) {
            merge_words.emplace(w, f);
            continue;
        }
        vocab.add(w, TokenKind::whole_word);
    }
    for (const auto& w : rare_words) merge_words.emplace(w, word_freqs[w]);

    MergeLearner learner(merge_words, cfg.continuation_prefix, rare_words);
    while (vocab.size() < cfg.vocab_size) {
        auto token = learner.next();
        if (!token) break;
        if (!vocab.contains(*token)) vocab.add(std::move(*token), TokenKind::merged);
    }
    vocab.set_word_freqs(std::move(word_freqs));
    return vocab;
}

// --- Tokenization ----------------------------------------------------------

std::vector<TokenId> tokenize_word(std::string_view word, const Vocabulary& vocab) {
    std::vector<TokenId> ids;
    if (word.empty()) return ids;
    const auto cps = text::decode(word);
    std::size_t start = 0;  // index into cps
    std::string candidate;
    while (start < cps.size()) {
        std::optional<TokenId> match;
        std::size_t end = cps.size();
        for (; end > start; --end) {
            const std::size_t b = cps[start].offset;
            const std::size_t e = end == cps.size() ? word.size() : cps[end].offset;
            candidate.assign(start == 0 ? "" : vocab.continuation_prefix());
            candidate.append(word.substr(b, e - b));
            match = vocab.find(candidate);
            if (match) break;
        }
        if (!match) {
            if (!vocab.contains("[UNK]")) throw UsageError("vocabulary has no [UNK] token");
            return {vocab.unk_id()};
        }
        ids.push_back(*match);
        start = end;
    }
    return ids;
}

std::vector<TokenId> tokenize_text(std::string_view text, const Vocabulary& vocab) {
    std::vector<TokenId> ids;
    for (auto w : text::pretokenize(text)) {
        auto piece = tokenize_word(w, vocab);
        ids.insert(ids.end(), piece.begin(), piece.end());
    }
    return ids;
}

std::string detokenize_word(std::span<const TokenId> ids, const Vocabulary& vocab) {
    std::string out;
    const auto& prefix = vocab.continuation_prefix();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& t = vocab.token(ids[i]);
        if (i > 0 && t.starts_with(prefix)) {
            out.append(t, prefix.size());
        } else {
            out.append(t);
        }
    }
    return out;
}

// --- Fertility -------------------------------------------------------------

FertilityReport measure_fertility(std::span<const corpus::Document> docs, const Vocabulary& vocab,
                                  bool per_document) {
    FertilityReport report;
    for (const auto& d : docs) {
        DocumentFertility df{d.id, 0, 0};
        for (auto w : text::pretokenize(d.text)) {
            auto ids = tokenize_word(w, vocab);
            ++df.n_words;
            df.n_subwords += ids.size();
            if (ids.size() == 1 && ids[0] == vocab.unk_id() && vocab.contains("[UNK]")) ++report.n_unk_words;
        }
        report.n_words += df.n_words;
        report.n_subwords += df.n_subwords;
        if (per_document) report.per_document.push_back(std::move(df));
    }
    if (report.n_words == 0) throw DataError("measure_fertility: corpus contains no words");
    report.fertility = static_cast<double>(report.n_subwords) / static_cast<double>(report.n_words);
    return report;
}

json to_json(const FertilityReport& r) {
    json j = {{"n_words", r.n_words},
              {"n_subwords", r.n_subwords},
              {"n_unk_words", r.n_unk_words},
              {"fertility", r.fertility}};
    if (!r.per_document.empty()) {
        json docs = json::array();
        for (const auto& d : r.per_document) {
            docs.push_back({{"id", d.doc_id}, {"n_words", d.n_words}, {"n_subwords", d.n_subwords}});
        }
        j["per_document"] = docs;
    }
    return j;
}

}  // namespace medcorpus::tokenize
