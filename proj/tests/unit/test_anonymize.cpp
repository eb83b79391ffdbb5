#include <doctest.h>

#include <fstream>

#include "medcorpus/anonymize.hpp"
#include "medcorpus/error.hpp"
#include "medcorpus/rng.hpp"

using namespace medcorpus;
using namespace medcorpus::anonymize;

namespace {

GazetteerRecognizer recognizer(std::set<std::string> names, MatchPolicy p = MatchPolicy::case_sensitive) {
    return GazetteerRecognizer(Gazetteer{std::move(names), p});
}

std::vector<std::string> surfaces(const std::vector<RedactionSpan>& spans) {
    std::vector<std::string> out;
    for (const auto& s : spans) out.push_back(s.surface);
    return out;
}

}  // namespace

TEST_CASE("gazetteer name detection") {
    auto r = recognizer({"Müller"});
    auto spans = detect_names("Herr Müller kam.", r);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].start == 5);
    CHECK(spans[0].end == 5 + std::string("Müller").size());
    CHECK(spans[0].kind == SpanKind::name);

    CHECK(detect_names("Keine Namen hier.", r).empty());
    // word boundaries on both sides
    CHECK(detect_names("Müllerstraße", r).empty());
    CHECK(detect_names("XMüller", r).empty());

    auto longest = recognizer({"Anna", "Anna Schmidt"});
    CHECK(surfaces(detect_names("Anna Schmidt und Anna.", longest)) ==
          std::vector<std::string>{"Anna Schmidt", "Anna"});

    CHECK(detect_names("herr müller", r).empty());
    auto ci = recognizer({"Müller"}, MatchPolicy::case_insensitive);
    CHECK(surfaces(detect_names("herr MÜLLER", ci)) == std::vector<std::string>{"MÜLLER"});

    CHECK_THROWS_AS(GazetteerRecognizer(Gazetteer{}), UsageError);
}

TEST_CASE("gazetteer file") {
    const std::string path = "gazetteer_test.txt";
    {
        std::ofstream out(path);
        out << "  Müller \n\nAnna Schmidt\n";
    }
    auto g = Gazetteer::load(path);
    CHECK(g.entries == std::set<std::string>{"Müller", "Anna Schmidt"});
    std::remove(path.c_str());
    CHECK_THROWS_AS(Gazetteer::load("/nonexistent/g.txt"), DataError);
}

TEST_CASE("date detection") {
    CHECK(surfaces(detect_dates("am 01.02.2021 erfolgte")) == std::vector<std::string>{"01.02.2021"});
    CHECK(surfaces(detect_dates("1. Januar 2022")) == std::vector<std::string>{"1. Januar 2022"});
    CHECK(detect_dates("Seriennummer 12.34").empty());
    CHECK(surfaces(detect_dates("vom 1.2.2021 und 3.12.2020")) == std::vector<std::string>{"1.2.2021", "3.12.2020"});
    CHECK(surfaces(detect_dates("Kontrolle 05.06.21.")) == std::vector<std::string>{"05.06.21"});
    CHECK(detect_dates("Kontrolle 5.6.21").empty());
    CHECK(surfaces(detect_dates("seit März 2019")) == std::vector<std::string>{"März 2019"});
    CHECK(surfaces(detect_dates("seit MÄRZ 2019")) == std::vector<std::string>{"MÄRZ 2019"});
    CHECK(surfaces(detect_dates("seit Jänner 2019")) == std::vector<std::string>{"Jänner 2019"});
    CHECK(surfaces(detect_dates("ISO 2020-02-29 ok")) == std::vector<std::string>{"2020-02-29"});
    CHECK(detect_dates("2021-02-29").empty());
    CHECK(detect_dates("31.04.2021").empty());
    // an impossible day leaves the month-year part
    CHECK(surfaces(detect_dates("30. Februar 2020")) == std::vector<std::string>{"Februar 2020"});
    CHECK(detect_dates("Version 1.2.20211").empty());
    CHECK(detect_dates("A12.03.2021").empty());
    CHECK(detect_dates("Mai").empty());
    CHECK(detect_dates("").empty());
}

TEST_CASE("redaction") {
    const std::string t = "Herr Müller am 01.02.2021.";
    CHECK(redact(t, {}).text == t);

    auto dates = detect_dates(t);
    auto r = redact(t, dates);
    CHECK(r.text == "Herr Müller am <DATE>.");
    REQUIRE(r.applied.size() == 1);
    CHECK(r.applied[0].surface == "01.02.2021");
    CHECK(r.applied[0].replacement == "<DATE>");

    std::vector<RedactionSpan> overlapping{{5, 10, SpanKind::name, {}, {}}, {8, 12, SpanKind::name, {}, {}}};
    CHECK(redact(t, overlapping).text == "Herr <NAME> am 01.02.2021.");

    RedactionOptions del;
    del.delete_names = true;
    std::vector<RedactionSpan> name{{5, 12, SpanKind::name, {}, {}}};
    CHECK(redact(t, name, del).text == "Herr  am 01.02.2021.");

    std::vector<RedactionSpan> bad{{7, 9, SpanKind::name, {}, {}}};  // starts inside the ü
    CHECK_THROWS_AS(redact(t, bad), DataError);
    std::vector<RedactionSpan> out_of_range{{3, 300, SpanKind::name, {}, {}}};
    CHECK_THROWS_AS(redact(t, out_of_range), DataError);
    std::vector<RedactionSpan> empty_span{{3, 3, SpanKind::name, {}, {}}};
    CHECK_THROWS_AS(redact(t, empty_span), DataError);
}

TEST_CASE("verification") {
    Gazetteer g{{"Müller"}, MatchPolicy::case_sensitive};
    CHECK(verify("", g).empty());
    auto rec = GazetteerRecognizer(g);
    const std::string t = "Herr Müller am 01.02.2021 und 03.04.2020.";
    std::vector<RedactionSpan> spans = detect_names(t, rec);
    auto d = detect_dates(t);
    spans.insert(spans.end(), d.begin(), d.end());
    CHECK(verify(redact(t, spans).text, g).empty());

    // leave the second date in place
    spans.pop_back();
    auto residual = verify(redact(t, spans).text, g);
    REQUIRE(residual.size() == 1);
    CHECK(residual[0].surface == "03.04.2020");
}

TEST_CASE("redaction properties on random texts") {
    Rng rng(17);
    const std::vector<std::string> names{"Müller", "Anna Schmidt", "Özdemir", "Jean-Luc Meier"};
    auto rec = recognizer({names.begin(), names.end()});
    const std::vector<std::string> fillers{"Befund", "ohne", "Erguss", "am", "vom", "12.34", "Nr.", "3,5", "cm", "(li)"};
    for (int trial = 0; trial < 300; ++trial) {
        std::string t;
        const auto n = rng.below(25);
        for (std::uint64_t k = 0; k < n; ++k) {
            if (!t.empty()) t += ' ';
            switch (rng.below(4)) {
                case 0: t += names[rng.below(names.size())]; break;
                case 1: {
                    const auto day = 1 + rng.below(28), month = 1 + rng.below(12), year = 1990 + rng.below(40);
                    t += std::to_string(day) + "." + std::to_string(month) + "." + std::to_string(year);
                    break;
                }
                default: t += fillers[rng.below(fillers.size())];
            }
        }
        auto spans = detect_names(t, rec);
        auto dates = detect_dates(t);
        spans.insert(spans.end(), dates.begin(), dates.end());
        auto r = redact(t, spans);
        CHECK(verify(r.text, &rec).empty());

        std::size_t expected = t.size();
        std::size_t cursor = 0, out_pos = 0;
        for (const auto& a : r.applied) {
            expected = expected - (a.end - a.start) + a.replacement.size();
            // untouched bytes before the span are copied verbatim
            CHECK(r.text.compare(out_pos, a.start - cursor, t, cursor, a.start - cursor) == 0);
            out_pos += a.start - cursor + a.replacement.size();
            cursor = a.end;
        }
        CHECK(r.text.compare(out_pos, std::string::npos, t, cursor, std::string::npos) == 0);
        CHECK(r.text.size() == expected);
        CHECK(redact(t, spans).text == r.text);
    }
}

TEST_CASE("corpus anonymization report") {
    std::vector<corpus::Document> docs(2);
    docs[0].id = "a";
    docs[0].text = "Patient Müller, Aufnahme 01.02.2021.";
    docs[1].id = "b";
    docs[1].text = "Keine Identifikatoren.";
    auto rec = recognizer({"Müller"});
    auto r = anonymize_corpus(docs, &rec);
    CHECK(r.documents[0].text == "Patient <NAME>, Aufnahme <DATE>.");
    CHECK(r.documents[1].text == docs[1].text);
    CHECK(r.report.total_name_spans == 1);
    CHECK(r.report.total_date_spans == 1);
    CHECK(r.report.passed());
    auto j = to_json(r.report);
    CHECK(j["residuals"].empty());

    auto dates_only = anonymize_corpus(docs, nullptr);
    CHECK(dates_only.documents[0].text == "Patient Müller, Aufnahme <DATE>.");
}
