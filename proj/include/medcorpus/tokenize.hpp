#pragma once

// Frequency-thresholded subword vocabulary, greedy longest-match
// tokenization and fertility measurement.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorpus/corpus.hpp"

namespace medcorpus::tokenize {

using TokenId = std::uint32_t;

struct VocabConfig {
    std::uint64_t min_char_freq = 3;   // characters seen fewer times are dropped
    std::uint64_t min_word_freq = 20;  // whole-word tokens need at least this many occurrences
    std::size_t vocab_size = 30000;
    std::vector<std::string> special_tokens{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    std::string continuation_prefix = "##";

    void validate() const;  // throws UsageError
};

enum class TokenKind { special, alphabet, continuation_char, whole_word, merged };

class Vocabulary {
public:
    Vocabulary() = default;

    // Tokens in id order; kinds are inferred (specials by `special_tokens`,
    // single characters as alphabet, prefixed single characters as
    // continuation characters, everything else as merged).
    static Vocabulary from_tokens(std::vector<std::string> tokens,
                                  const std::vector<std::string>& special_tokens,
                                  std::string continuation_prefix = "##");
    // One token per line; line index = id.
    static Vocabulary load(const std::filesystem::path& path, const VocabConfig& cfg = {});
    void save(const std::filesystem::path& path) const;
    std::string to_text() const;

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(TokenId id) const { return tokens_.at(id); }
    TokenKind kind(TokenId id) const { return kinds_.at(id); }
    std::optional<TokenId> find(std::string_view token) const;
    bool contains(std::string_view token) const { return find(token).has_value(); }
    TokenId unk_id() const { return unk_id_; }
    const std::string& continuation_prefix() const { return prefix_; }

    // Corpus word frequencies seen during construction (audit only).
    const std::map<std::string, std::uint64_t>& word_freqs() const { return word_freqs_; }

    // Builder interface.
    void add(std::string token, TokenKind kind);
    void set_word_freqs(std::map<std::string, std::uint64_t> freqs) { word_freqs_ = std::move(freqs); }

private:
    std::vector<std::string> tokens_;
    std::vector<TokenKind> kinds_;
    std::unordered_map<std::string, TokenId> index_;
    std::map<std::string, std::uint64_t> word_freqs_;
    std::string prefix_ = "##";
    TokenId unk_id_ = 0;
    bool has_unk_ = false;

    friend Vocabulary build_vocab(std::span<const corpus::Document>, const VocabConfig&);
};

struct CharFilterResult {
    std::vector<corpus::Document> documents;
    std::set<char32_t> removed;
};

// Removes every code point with corpus-wide count < min_char_freq.
// Throws DataError for an empty corpus.
CharFilterResult filter_rare_chars(std::span<const corpus::Document> docs, std::uint64_t min_char_freq);

// Specials, then the alphabet (each surviving character plain and with the
// continuation prefix), then whole words with frequency ≥ min_word_freq
// (most frequent first, ties lexicographic), then BPE merges learned over
// the remaining words until vocab_size is reached or no pair is left.
// A merge whose word-initial result would spell out a complete corpus word
// below min_word_freq is never added.
Vocabulary build_vocab(std::span<const corpus::Document> docs, const VocabConfig& cfg);

// Greedy longest-match-first; the whole word becomes [UNK] if any position
// cannot be matched.
std::vector<TokenId> tokenize_word(std::string_view word, const Vocabulary& vocab);

std::vector<TokenId> tokenize_text(std::string_view text, const Vocabulary& vocab);

// Surface reconstruction: strips continuation prefixes and concatenates.
std::string detokenize_word(std::span<const TokenId> ids, const Vocabulary& vocab);

struct DocumentFertility {
    std::string doc_id;
    std::uint64_t n_words = 0;
    std::uint64_t n_subwords = 0;
};

struct FertilityReport {
    std::uint64_t n_words = 0;
    std::uint64_t n_subwords = 0;
    std::uint64_t n_unk_words = 0;
    double fertility = 0.0;
    std::vector<DocumentFertility> per_document;
};

// Words come from `text::pretokenize`; [UNK] counts as one subword.
// Throws DataError when the corpus has no words.
FertilityReport measure_fertility(std::span<const corpus::Document> docs, const Vocabulary& vocab,
                                  bool per_document = false);

nlohmann::json to_json(const FertilityReport& report);

}  // namespace medcorpus::tokenize
