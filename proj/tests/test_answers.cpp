#include "ppcv/answers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>
#include <vector>

using namespace ppcv;

TEST_CASE("normalize_answer numeric forms") {
    CHECK(normalize_answer("$51", AnswerKind::numeric) == "51");
    CHECK(normalize_answer("007", AnswerKind::numeric) == "7");
    CHECK(normalize_answer("1,234.50", AnswerKind::numeric) == "1234.5");
    CHECK(normalize_answer(" 42 ", AnswerKind::numeric) == "42");
    CHECK(normalize_answer("51.", AnswerKind::numeric) == "51");
    CHECK(normalize_answer("-0", AnswerKind::numeric) == "0");
    CHECK(normalize_answer("+17", AnswerKind::numeric) == "17");
    CHECK(normalize_answer(".5", AnswerKind::numeric) == "0.5");
    CHECK(normalize_answer("3/4", AnswerKind::numeric) == "3/4");
    CHECK(normalize_answer("-02/4", AnswerKind::numeric) == "-2/4");
    CHECK(normalize_answer("$1,000,000", AnswerKind::numeric) == "1000000");
    CHECK_FALSE(normalize_answer("forty-two", AnswerKind::numeric).has_value());
    CHECK_FALSE(normalize_answer("3/0", AnswerKind::numeric).has_value());
}

TEST_CASE("normalize_answer multiple choice forms") {
    CHECK(normalize_answer("(B)", AnswerKind::multiple_choice) == "B");
    CHECK(normalize_answer("b", AnswerKind::multiple_choice) == "B");
    CHECK(normalize_answer(" C. ", AnswerKind::multiple_choice) == "C");
    CHECK_FALSE(normalize_answer("BC", AnswerKind::multiple_choice).has_value());
    CHECK_FALSE(normalize_answer("(7)", AnswerKind::multiple_choice).has_value());
}

TEST_CASE("normalize_answer is idempotent") {
    std::mt19937_64 rng(20250810);
    const std::vector<std::string> pool = {"$51",   "1,234.50", "007", "-0",  "3/4",  "0.5000",
                                           "-12.",  "+9",       ".25", "1e3", "  8 ", "100/25",
                                           "(B)",   "c.",       "$0.30"};
    for (const auto& raw : pool) {
        for (auto kind : {AnswerKind::numeric, AnswerKind::multiple_choice}) {
            auto once = normalize_answer(raw, kind);
            if (!once) continue;
            auto twice = normalize_answer(*once, kind);
            REQUIRE(twice.has_value());
            CHECK(*twice == *once);
        }
    }
    // random decimal strings round-trip too
    for (int i = 0; i < 200; ++i) {
        std::string s = std::to_string(static_cast<long>(rng() % 100000));
        if (rng() % 2) s += "." + std::to_string(rng() % 1000);
        if (rng() % 3 == 0) s.insert(s.begin(), '-');
        auto once = normalize_answer(s, AnswerKind::numeric);
        REQUIRE(once.has_value());
        CHECK(normalize_answer(*once, AnswerKind::numeric) == *once);
    }
}

TEST_CASE("answers_equal on numeric values") {
    CHECK(answers_equal("51", "51.0", AnswerKind::numeric));
    CHECK(answers_equal("2/4", "0.5", AnswerKind::numeric));
    CHECK(answers_equal("-3", "-3.000", AnswerKind::numeric));
    CHECK_FALSE(answers_equal("51", "52", AnswerKind::numeric));
    // exact rational comparison: a 10-digit truncation of 1/3 is not 1/3
    CHECK_FALSE(answers_equal("1/3", "0.3333333333", AnswerKind::numeric));
    // GSM-Hard style large integers never merge
    CHECK_FALSE(answers_equal("123456789123456789", "123456789123456788", AnswerKind::numeric));
    // float-only forms get the relative tolerance
    CHECK(answers_equal("1e3", "1000", AnswerKind::numeric));
    CHECK_FALSE(answers_equal("1e3", "1001", AnswerKind::numeric));
    CHECK_FALSE(answers_equal("51", "fifty-one", AnswerKind::numeric));
}

TEST_CASE("answers_equal on choice letters") {
    CHECK(answers_equal("B", "B", AnswerKind::multiple_choice));
    CHECK_FALSE(answers_equal("B", "C", AnswerKind::multiple_choice));
}

TEST_CASE("answers_equal is reflexive and symmetric") {
    std::mt19937_64 rng(99);
    std::vector<std::string> values = {"51", "51.0", "2/4", "0.5", "-3", "1e3", "7", "0"};
    for (int i = 0; i < 200; ++i) {
        values.push_back(std::to_string(static_cast<long>(rng() % 1000)));
    }
    for (const auto& a : values) {
        CHECK(answers_equal(a, a, AnswerKind::numeric));
        for (const auto& b : values) {
            CHECK(answers_equal(a, b, AnswerKind::numeric) ==
                  answers_equal(b, a, AnswerKind::numeric));
        }
    }
}
