#include "medcorpus/text.hpp"

namespace medcorpus::text {

CodePoint decode_at(std::string_view s, std::size_t offset) {
    const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
    const unsigned char b0 = byte(offset);
    if (b0 < 0x80) return {b0, offset, 1};

    std::size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return {0xFFFD, offset, 1};
    }
    if (offset + len > s.size()) return {0xFFFD, offset, 1};
    for (std::size_t i = 1; i < len; ++i) {
        const unsigned char b = byte(offset + i);
        if ((b & 0xC0) != 0x80) return {0xFFFD, offset, 1};
        cp = (cp << 6) | (b & 0x3F);
    }
    // Overlong encodings and surrogates.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
        return {0xFFFD, offset, 1};
    }
    return {cp, offset, len};
}

std::vector<CodePoint> decode(std::string_view s) {
    std::vector<CodePoint> out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        auto cp = decode_at(s, i);
        out.push_back(cp);
        i += cp.length;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode(char32_t cp) {
    std::string out;
    append_utf8(out, cp);
    return out;
}

std::size_t count_code_points(std::string_view s) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); i += decode_at(s, i).length) ++n;
    return n;
}

bool is_char_boundary(std::string_view s, std::size_t offset) {
    if (offset == 0 || offset == s.size()) return true;
    if (offset > s.size()) return false;
    return (static_cast<unsigned char>(s[offset]) & 0xC0) != 0x80;
}

bool is_space(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' ||
           cp == 0xA0 || cp == 0x2028 || cp == 0x2029;
}

bool is_digit(char32_t cp) { return cp >= '0' && cp <= '9'; }

bool is_alnum(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    }
    if (cp < 0xC0) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
    if (cp == 0xD7 || cp == 0xF7) return false;
    if (cp <= 0x24F) return true;                     // Latin-1 letters, Extended-A/B
    if (cp >= 0x370 && cp <= 0x52F) return cp != 0x37E && cp != 0x387;  // Greek, Cyrillic
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;   // punctuation, symbols, arrows
    if (cp >= 0x3000 && cp <= 0x303F) return false;   // CJK punctuation
    if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
    if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
    if (cp == 0xFFFD) return false;
    if (cp >= 0x1F000) return false;                  // emoji and pictographs
    return !is_space(cp);
}

char32_t to_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp < 0xC0) return cp;
    if (cp <= 0xDE && cp != 0xD7) return cp + 32;
    if (cp >= 0x100 && cp <= 0x17F) {
        // Latin Extended-A alternates upper/lower in pairs, with two shifted runs.
        if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) {
            return (cp % 2 == 1) ? cp + 1 : cp;
        }
        if (cp == 0x178) return 0xFF;
        if (cp == 0x130 || cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
        return (cp % 2 == 0) ? cp + 1 : cp;
    }
    if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;  // Greek
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;                  // Cyrillic
    return cp;
}

std::string to_lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        auto cp = decode_at(s, i);
        if (cp.value == 0xFFFD && cp.length == 1) {
            out.push_back(s[i]);  // keep invalid bytes verbatim
        } else {
            append_utf8(out, to_lower(cp.value));
        }
        i += cp.length;
    }
    return out;
}

bool is_upper(char32_t cp) { return to_lower(cp) != cp; }

std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    while (b < s.size()) {
        auto cp = decode_at(s, b);
        if (!is_space(cp.value)) break;
        b += cp.length;
    }
    std::size_t e = s.size();
    while (e > b) {
        std::size_t p = e - 1;
        while (p > b && !is_char_boundary(s, p)) --p;
        if (!is_space(decode_at(s, p).value)) break;
        e = p;
    }
    return s.substr(b, e - b);
}

std::vector<std::string_view> whitespace_words(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = std::string_view::npos;
    for (std::size_t i = 0; i < s.size();) {
        auto cp = decode_at(s, i);
        if (is_space(cp.value)) {
            if (start != std::string_view::npos) {
                out.push_back(s.substr(start, i - start));
                start = std::string_view::npos;
            }
        } else if (start == std::string_view::npos) {
            start = i;
        }
        i += cp.length;
    }
    if (start != std::string_view::npos) out.push_back(s.substr(start));
    return out;
}

namespace {

bool is_terminator(char32_t cp) { return cp == '.' || cp == '!' || cp == '?' || cp == ';'; }

}  // namespace

std::vector<std::string_view> split_sentences(std::string_view s) {
    std::vector<std::string_view> out;
    auto push = [&](std::size_t b, std::size_t e) {
        auto seg = trim(s.substr(b, e - b));
        if (!seg.empty()) out.push_back(seg);
    };

    std::size_t seg_start = 0;
    for (std::size_t i = 0; i < s.size();) {
        auto cp = decode_at(s, i);
        std::size_t next = i + cp.length;
        if (is_terminator(cp.value)) {
            std::size_t j = next;
            bool saw_space = false;
            while (j < s.size()) {
                auto w = decode_at(s, j);
                if (!is_space(w.value)) break;
                saw_space = true;
                j += w.length;
            }
            if (j == s.size() || (saw_space && is_upper(decode_at(s, j).value))) {
                push(seg_start, next);
                seg_start = j;
                i = j;
                continue;
            }
        }
        i = next;
    }
    if (seg_start < s.size()) push(seg_start, s.size());
    return out;
}

std::vector<std::string_view> pretokenize(std::string_view s) {
    std::vector<std::string_view> out;
    for (auto word : whitespace_words(s)) {
        auto cps = decode(word);
        std::size_t lo = 0;
        std::size_t hi = cps.size();
        while (lo < hi && !is_alnum(cps[lo].value)) ++lo;
        if (lo == hi) {
            for (const auto& cp : cps) out.push_back(word.substr(cp.offset, cp.length));
            continue;
        }
        while (hi > lo && !is_alnum(cps[hi - 1].value)) --hi;
        for (std::size_t k = 0; k < lo; ++k) out.push_back(word.substr(cps[k].offset, cps[k].length));
        std::size_t core_begin = cps[lo].offset;
        std::size_t core_end = cps[hi - 1].offset + cps[hi - 1].length;
        out.push_back(word.substr(core_begin, core_end - core_begin));
        for (std::size_t k = hi; k < cps.size(); ++k) out.push_back(word.substr(cps[k].offset, cps[k].length));
    }
    return out;
}

}  // namespace medcorpus::text
