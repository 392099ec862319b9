#include "ppcv/paraphrase.hpp"
#include "ppcv/toy_backend.hpp"

#include "support/fixtures.hpp"
#include "support/scripted_backend.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

using namespace ppcv;
using namespace ppcv::testsupport;

namespace {

Question hand_question() {
    Question q;
    q.id = "hand0";
    q.text = "What is 5 plus 3 ?";
    q.gold = {"8", "8"};
    q.kind = AnswerKind::numeric;
    return q;
}

Question clean_question() {
    Question q;
    q.id = "hand1";
    q.text = "What is 7 plus 2 ?";
    q.gold = {"9", "9"};
    q.kind = AnswerKind::numeric;
    return q;
}

}  // namespace

TEST_CASE("bracketed list parsing") {
    using paraphrase::parse_bracketed_list;
    CHECK(parse_bracketed_list("[1] A\n[2] B\n[3] C") ==
          std::vector<std::string>{"A", "B", "C"});
    CHECK(parse_bracketed_list("preamble [1] first one [2] second one") ==
          std::vector<std::string>{"first one", "second one"});
    CHECK(parse_bracketed_list("no brackets here").empty());
    // serials must start at 1 and ascend
    CHECK(parse_bracketed_list("[2] B [3] C").empty());
    CHECK(parse_bracketed_list("[1] A [3] C") == std::vector<std::string>{"A"});
    // an empty entry ends the parse
    CHECK(parse_bracketed_list("[1] [2] B").empty());
}

TEST_CASE("toy backend paraphrases come from the fixture table") {
    toy::ToyBackend backend(hand_world());
    const auto instr = paraphrase::ParaphraseInstruction::from_text(prompts::kParaphraseMath);
    const auto set = paraphrase::generate_paraphrases(hand_question(), 3, instr, backend);
    REQUIRE(set.items.size() == 3);
    CHECK(set.items[0].text == "Compute the sum of 5 and 3 .");
    CHECK(set.items[1].text == "How much is 5 and 3 together ?");
    CHECK(set.items[2].text == "Work out the value of 5 + 3 .");
    CHECK_FALSE(set.degraded);
    CHECK(set.embedder_id == paraphrase::kLexicalEmbedderId);
    for (int i = 0; i < 3; ++i) {
        CHECK(set.items[static_cast<std::size_t>(i)].index == i + 1);
        CHECK(set.items[static_cast<std::size_t>(i)].text != hand_question().text);
        CHECK(set.items[static_cast<std::size_t>(i)].similarity > 0.0);
        CHECK(set.items[static_cast<std::size_t>(i)].similarity < 1.0);
    }
}

TEST_CASE("similarity is symmetric, 1 on identical text, 0 on disjoint vocabulary") {
    toy::ToyBackend backend(hand_world());
    CHECK(paraphrase::similarity("add 5 and 3", "add 5 and 3", backend) ==
          Catch::Approx(1.0).epsilon(1e-12));
    CHECK(paraphrase::similarity("alpha beta", "gamma delta", backend) == 0.0);
    const double ab = paraphrase::similarity("What is 5 plus 3 ?", "Compute the sum of 5 and 3 .", backend);
    const double ba = paraphrase::similarity("Compute the sum of 5 and 3 .", "What is 5 plus 3 ?", backend);
    CHECK(ab == Catch::Approx(ba).margin(1e-15));
}

TEST_CASE("short responses earn one reformat retry") {
    ScriptedBackend backend({"[1] Sum 5 and 3 .", "[1] Sum 5 and 3 . [2] Add 5 to 3 . [3] Total of 5 and 3 ."});
    const auto instr = paraphrase::ParaphraseInstruction::from_text("rewrite it");
    const auto set = paraphrase::generate_paraphrases(hand_question(), 3, instr, backend);
    REQUIRE(set.items.size() == 3);
    CHECK_FALSE(set.degraded);
    CHECK(backend.calls == 2);
    CHECK(set.items[2].text == "Total of 5 and 3 .");
}

TEST_CASE("persistently short responses pad from the last valid variant") {
    ScriptedBackend backend({"[1] Sum 5 and 3 . [2] Add 5 to 3 .", "[1] Sum 5 and 3 ."});
    const auto instr = paraphrase::ParaphraseInstruction::from_text("rewrite it");
    const auto set = paraphrase::generate_paraphrases(hand_question(), 4, instr, backend);
    REQUIRE(set.items.size() == 4);
    CHECK(set.degraded);
    CHECK(set.items[2].text == "Add 5 to 3 .");
    CHECK(set.items[3].text == "Add 5 to 3 .");
}

TEST_CASE("a verbatim copy of the original is regenerated once then tolerated") {
    const std::string original = hand_question().text;
    SECTION("retry fixes it") {
        ScriptedBackend backend({"[1] " + original + " [2] Add 5 to 3 .",
                                 "[1] Sum 5 and 3 . [2] Add 5 to 3 ."});
        const auto instr = paraphrase::ParaphraseInstruction::from_text("rewrite it");
        const auto set = paraphrase::generate_paraphrases(hand_question(), 2, instr, backend);
        CHECK(set.items[0].text == "Sum 5 and 3 .");
        CHECK(backend.calls == 2);
    }
    SECTION("persistent copy is kept with similarity 1") {
        ScriptedBackend backend({"[1] " + original + " [2] Add 5 to 3 .",
                                 "[1] " + original + " [2] Add 5 to 3 ."});
        const auto instr = paraphrase::ParaphraseInstruction::from_text("rewrite it");
        const auto set = paraphrase::generate_paraphrases(hand_question(), 2, instr, backend);
        CHECK(set.items[0].text == original);
        CHECK(set.items[0].similarity == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("zero parseable variants is an error") {
    ScriptedBackend backend({"nothing useful", "still nothing"});
    const auto instr = paraphrase::ParaphraseInstruction::from_text("rewrite it");
    CHECK_THROWS_AS(paraphrase::generate_paraphrases(hand_question(), 2, instr, backend), DataError);
}

TEST_CASE("paraphrase store round-trips") {
    const auto path = (std::filesystem::temp_directory_path() /
                       ("ppcv-store-" + to_hex(std::random_device{}()) + ".jsonl"))
                          .string();
    std::map<std::string, paraphrase::ParaphraseSet> sets;
    paraphrase::ParaphraseSet s;
    s.question_id = "q1";
    s.instruction_id = "abc";
    s.items = {{1, "first", 0.5}, {2, "second", 0.25}};
    s.embedder_id = paraphrase::kLexicalEmbedderId;
    sets["q1"] = s;
    paraphrase::save_store(sets, path);
    const auto loaded = paraphrase::load_store(path);
    REQUIRE(loaded.count("q1") == 1);
    CHECK(loaded.at("q1").instruction_id == "abc");
    REQUIRE(loaded.at("q1").items.size() == 2);
    CHECK(loaded.at("q1").items[1].text == "second");
    CHECK(loaded.at("q1").items[1].similarity == 0.25);
    std::filesystem::remove(path);
}

// Oracle for the optimization test, walking the fixture tables by hand:
// the original phrasing fails (wrong value, sticky carry). Variant 1
// solves by ranking the correct value first; variant 2 solves because its
// carry slot repairs the wrong value; variant 3 is sticky and fails. With
// 2 paraphrases per set, instruction offsets select:
//   offset 0 -> {v1, v2}: solve rate 1.0
//   offset 1 -> {v2, v3}: solve rate 0.5
//   offset 2 -> {v3, v1}: solve rate 0.5
TEST_CASE("instruction optimization keeps the argmax-fitness instruction") {
    toy::ToyBackend backend(hand_world());
    const std::vector<Question> dev = {hand_question()};
    paraphrase::ApeOptions opts;
    opts.n_paraphrases = 2;

    const auto& pool = backend.world().instruction_pool;
    const auto seed = paraphrase::ParaphraseInstruction::from_text(pool[1].text);  // offset 1

    const auto best = paraphrase::ape_optimize(seed, dev, 1, 3, backend, opts);
    CHECK(best.text == pool[0].text);  // the offset-0 candidate reaches every solvable variant
    REQUIRE(best.fitness.has_value());
    CHECK(*best.fitness == Catch::Approx(1.0).margin(1e-12));

    // monotone: never worse than the seed (fitness 0) on the same dev split
    CHECK(*best.fitness >= 0.0);
}

TEST_CASE("all-solved dev split gives zero fitness and retains the incumbent") {
    toy::ToyBackend backend(hand_world());
    const std::vector<Question> dev = {clean_question()};
    paraphrase::ApeOptions opts;
    opts.n_paraphrases = 2;
    const auto& pool = backend.world().instruction_pool;
    const auto seed = paraphrase::ParaphraseInstruction::from_text(pool[1].text);
    const auto best = paraphrase::ape_optimize(seed, dev, 2, 3, backend, opts);
    CHECK(best.text == seed.text);
    REQUIRE(best.fitness.has_value());
    CHECK(*best.fitness == Catch::Approx(0.0).margin(1e-12));
}
