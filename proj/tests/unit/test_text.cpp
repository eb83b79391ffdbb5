#include <doctest.h>

#include <string>
#include <vector>

#include "medcorpus/date.hpp"
#include "medcorpus/rng.hpp"
#include "medcorpus/text.hpp"

using namespace medcorpus;

namespace {

std::vector<std::string> strs(const std::vector<std::string_view>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("utf8 decode and encode round trip") {
    const std::string s = "Größe ✚ Ärztin";
    std::string back;
    for (const auto& cp : text::decode(s)) text::append_utf8(back, cp.value);
    CHECK(back == s);
    CHECK(text::count_code_points(s) == 14);
    CHECK(text::encode(U'✚') == "\xE2\x9C\x9A");
    CHECK(text::is_char_boundary(s, 0));
    CHECK_FALSE(text::is_char_boundary(s, 3));
}

TEST_CASE("lowercasing keeps byte length") {
    const std::string s = "ÄÖÜ STRASSE ŸÉ ΑΒΓ ЖЗ";
    const auto l = text::to_lower(s);
    CHECK(l.size() == s.size());
    CHECK(l == "äöü strasse ÿé αβγ жз");
}

TEST_CASE("sentence splitting") {
    CHECK(strs(text::split_sentences("Ab c. De f.")) == std::vector<std::string>{"Ab c.", "De f."});
    CHECK(strs(text::split_sentences("Wert 3.5 mm. Keine Fraktur!")) ==
          std::vector<std::string>{"Wert 3.5 mm.", "Keine Fraktur!"});
    // lowercase continuation does not split
    CHECK(text::split_sentences("z. b. hier. Dort").size() == 2);
    CHECK(text::split_sentences("").empty());
    CHECK(strs(text::split_sentences("Ohne Punkt")) == std::vector<std::string>{"Ohne Punkt"});
    CHECK(text::split_sentences("Eins; Zwei? Drei").size() == 3);
}

TEST_CASE("pretokenize splits edge punctuation") {
    CHECK(strs(text::pretokenize("Lunge.")) == std::vector<std::string>{"Lunge", "."});
    CHECK(strs(text::pretokenize("(rechts), ok")) == std::vector<std::string>{"(", "rechts", ")", ",", "ok"});
    CHECK(strs(text::pretokenize("...")) == std::vector<std::string>{".", ".", "."});
    CHECK(strs(text::pretokenize("3,5cm")) == std::vector<std::string>{"3,5cm"});
}

TEST_CASE("whitespace words include non-breaking space") {
    CHECK(text::whitespace_words("a\xC2\xA0" "b  c\n").size() == 3);
}

TEST_CASE("iso dates") {
    auto d = parse_iso_date("2021-03-01");
    REQUIRE(d);
    CHECK(format_iso_date(*d) == "2021-03-01");
    CHECK(parse_iso_date("2021-03-01T10:00:00"));
    CHECK_FALSE(parse_iso_date("2021-02-30"));
    CHECK_FALSE(parse_iso_date("21-02-03"));
    CHECK_FALSE(parse_iso_date("2021-3-01"));
}

TEST_CASE("rng is reproducible and unbiased in range") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng r(1);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[r.below(7)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}
