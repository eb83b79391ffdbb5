#pragma once

// UTF-8 helpers shared by every text-processing module. Character classes
// cover ASCII, Latin-1, Latin Extended-A/B, Greek and Cyrillic, which is
// what German clinical text needs; everything else above U+007F is treated
// as a letter unless it sits in a known punctuation/symbol block.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace medcorpus::text {

struct CodePoint {
    char32_t value;
    std::size_t offset;  // byte offset of the first byte
    std::size_t length;  // encoded length in bytes (1..4)
};

// Decodes one code point at `offset`. Invalid sequences decode as U+FFFD
// with length 1 so callers always make progress.
CodePoint decode_at(std::string_view s, std::size_t offset);

std::vector<CodePoint> decode(std::string_view s);

void append_utf8(std::string& out, char32_t cp);
std::string encode(char32_t cp);

std::size_t count_code_points(std::string_view s);

// True when `offset` is a code point boundary (not a continuation byte).
bool is_char_boundary(std::string_view s, std::size_t offset);

bool is_space(char32_t cp);
bool is_digit(char32_t cp);
bool is_alnum(char32_t cp);
bool is_upper(char32_t cp);

// Case folding preserves the UTF-8 encoded length of every code point, so
// byte offsets computed on the folded string are valid on the original.
char32_t to_lower(char32_t cp);
std::string to_lower(std::string_view s);

// Maximal runs of non-whitespace.
std::vector<std::string_view> whitespace_words(std::string_view s);

// Rule-based splitter: a segment ends at one of . ! ? ; when followed by
// whitespace and an uppercase letter, or by optional whitespace and the end
// of the text. Segments are trimmed; empty segments are dropped.
std::vector<std::string_view> split_sentences(std::string_view s);

// Whitespace words with leading/trailing punctuation split off, one
// punctuation character per word ("Lunge." → "Lunge", ".").
std::vector<std::string_view> pretokenize(std::string_view s);

std::string_view trim(std::string_view s);

}  // namespace medcorpus::text
