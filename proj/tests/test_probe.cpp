#include "ppcv/probe.hpp"
#include "ppcv/toy_backend.hpp"

#include "support/fixtures.hpp"
#include "support/toy_enumeration.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

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

PromptConfig cot_cfg() {
    PromptConfig cfg;
    cfg.instruction_prefix = prompts::kMathCot;
    cfg.instruction_id = prompts::kMathCotId;
    cfg.max_new_tokens = 64;
    return cfg;
}

paraphrase::ParaphraseSet hand_paraphrases(toy::ToyBackend& backend) {
    const auto instr = paraphrase::ParaphraseInstruction::from_text(prompts::kParaphraseMath);
    return paraphrase::generate_paraphrases(hand_question(), 3, instr, backend);
}

}  // namespace

TEST_CASE("delta is top1 minus expected probability") {
    DistributionSlice s;
    s.top1_prob = 0.6;
    s.forced_prob = 0.1;
    CHECK(probe::delta_score(s) == Catch::Approx(0.5).margin(1e-15));
    s.forced_prob = s.top1_prob;  // expected token attains the max
    CHECK(probe::delta_score(s) == 0.0);
    s.top1_prob = 0.9;
    s.forced_prob = 1e-6;
    s.forced_prob_floored = true;
    CHECK(probe::delta_score(s) == Catch::Approx(0.899999).margin(1e-9));
}

// Expectations read straight off the hand fixture's tables:
//   position 10 flagged by paraphrase 2 (synonym flip), delta 0.2
//   position 11 flagged by paraphrase 1 (value flip),   delta 0.45
//   position 17 flagged by paraphrases 1 and 2 (carry), delta 0.29
TEST_CASE("probing the hand fixture finds the injected position") {
    toy::ToyBackend backend(hand_world());
    const auto q = hand_question();
    const auto trace = backend.generate(q.text, cot_cfg());
    const auto paraphrases = hand_paraphrases(backend);
    const auto report =
        probe::probe_positions(q, trace, paraphrases, cot_cfg(), {0.0, 1.0}, backend);

    CHECK(report.question_id == "hand0");
    CHECK(report.window == std::pair<int, int>{0, 20});
    CHECK_FALSE(report.fallback);
    CHECK(report.failed_paraphrases.empty());
    CHECK_FALSE(report.any_floored);

    REQUIRE(report.candidates.size() == 3);
    CHECK(report.candidates[0].position == 10);
    CHECK(report.candidates[0].delta_max == Catch::Approx(0.2).margin(1e-12));
    REQUIRE(report.candidates[0].per_paraphrase.size() == 1);
    CHECK(report.candidates[0].per_paraphrase[0].paraphrase_index == 2);

    CHECK(report.candidates[1].position == 11);
    CHECK(report.candidates[1].delta_max == Catch::Approx(0.45).margin(1e-12));
    REQUIRE(report.candidates[1].per_paraphrase.size() == 1);
    CHECK(report.candidates[1].per_paraphrase[0].paraphrase_index == 1);
    CHECK(report.candidates[1].per_paraphrase[0].top1_token_id == token_id_of("8"));

    CHECK(report.candidates[2].position == 17);
    CHECK(report.candidates[2].delta_max == Catch::Approx(0.29).margin(1e-12));
    CHECK(report.candidates[2].per_paraphrase.size() == 2);

    REQUIRE(report.critical.has_value());
    CHECK(report.critical->position == 11);
    CHECK(report.critical->token_id == token_id_of("9"));
    CHECK(report.critical->delta_max == Catch::Approx(0.45).margin(1e-12));

    // candidacy soundness: every entry's top-1 differs from the trace token
    for (const auto& cand : report.candidates) {
        CHECK_FALSE(cand.per_paraphrase.empty());
        for (const auto& e : cand.per_paraphrase) {
            CHECK(e.top1_token_id != cand.expected_token_id);
            CHECK(e.delta >= 0.0);
        }
    }
}

TEST_CASE("a paraphrase identical to the original contributes no candidates") {
    toy::ToyBackend backend(hand_world());
    const auto q = hand_question();
    const auto trace = backend.generate(q.text, cot_cfg());
    paraphrase::ParaphraseSet set;
    set.question_id = q.id;
    set.items = {{1, q.text, 1.0}};
    const auto report = probe::probe_positions(q, trace, set, cot_cfg(), {0.0, 1.0}, backend);
    CHECK(report.candidates.empty());
    CHECK(report.fallback);
    CHECK_FALSE(report.critical.has_value());
}

TEST_CASE("a window that excludes every divergent position forces fallback") {
    toy::ToyBackend backend(hand_world());
    const auto q = hand_question();
    const auto trace = backend.generate(q.text, cot_cfg());
    const auto paraphrases = hand_paraphrases(backend);
    const auto report =
        probe::probe_positions(q, trace, paraphrases, cot_cfg(), {0.0, 0.4}, backend);
    CHECK(report.window == std::pair<int, int>{0, 8});
    CHECK(report.fallback);
}

TEST_CASE("select_critical picks the max-delta candidate, ties to the smallest position") {
    using probe::ProbeCandidate;
    auto mk = [](int pos, std::vector<double> deltas) {
        ProbeCandidate c;
        c.position = pos;
        c.expected_token_id = token_id_of("t" + std::to_string(pos));
        for (double d : deltas) {
            probe::PerParaphraseEntry e;
            e.delta = d;
            c.per_paraphrase.push_back(e);
            c.delta_max = std::max(c.delta_max, d);
        }
        return c;
    };

    SECTION("max over paraphrases then argmax over positions") {
        const auto sel = probe::select_critical({mk(7, {0.2, 0.5}), mk(12, {0.4, 0.3})});
        REQUIRE(sel.has_value());
        CHECK(sel->position == 7);
        CHECK(sel->delta_max == 0.5);
    }
    SECTION("equal delta_max goes to the smaller position") {
        const auto sel = probe::select_critical({mk(12, {0.5}), mk(7, {0.5})});
        REQUIRE(sel.has_value());
        CHECK(sel->position == 7);
    }
    SECTION("single candidate wins") {
        const auto sel = probe::select_critical({mk(3, {0.1})});
        REQUIRE(sel.has_value());
        CHECK(sel->position == 3);
    }
    SECTION("empty candidates signal NoCandidates") {
        CHECK_FALSE(probe::select_critical({}).has_value());
    }
    SECTION("argmax stability: adding a strictly smaller candidate never changes the pick") {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<ProbeCandidate> cands;
            const int n = 1 + static_cast<int>(rng() % 6);
            for (int i = 0; i < n; ++i)
                cands.push_back(mk(static_cast<int>(rng() % 40),
                                   {static_cast<double>(rng() % 1000) / 1000.0 + 0.001}));
            const auto before = probe::select_critical(cands);
            REQUIRE(before.has_value());
            cands.push_back(mk(static_cast<int>(rng() % 40), {before->delta_max / 2.0}));
            const auto after = probe::select_critical(cands);
            REQUIRE(after.has_value());
            CHECK(after->position == before->position);
            CHECK(after->delta_max == before->delta_max);
        }
    }
}

TEST_CASE("criticality oracle at the injected position") {
    toy::ToyBackend backend(hand_world());
    const auto q = hand_question();
    const auto trace = backend.generate(q.text, cot_cfg());

    SECTION("rollouts from the wrong token almost never recover") {
        // exact probability of recovery after emitting the wrong value is
        // the carry slot's fix mass: 0.02
        std::vector<std::string> words;
        for (int i = 0; i <= 11; ++i) words.push_back(trace.tokens[static_cast<std::size_t>(i)].token_text);
        CHECK(exact_correctness(hand_template(), 0, words) == Catch::Approx(0.02).margin(1e-12));

        const auto stats = probe::oracle_criticality(q, trace, 11, 32, backend, 77);
        CHECK(stats.position == 11);
        CHECK(stats.rollouts == 32);
        CHECK(stats.correctness_at < 0.05);
        // sampled estimate agrees with the exact enumeration within 3 sigma
        CHECK(std::abs(stats.correctness_at - 0.02) <= 3.0 * std::sqrt(0.02 * 0.98 / 32.0) + 1e-9);
        // subsequent positions stay degraded
        for (double f : stats.correctness_following) CHECK(f < 0.10);
        CHECK(stats.correctness_following.size() == 6);
    }

    SECTION("positions after the boxed answer are exactly 0 or 1") {
        const auto stats = probe::oracle_criticality(q, trace, 19, 8, backend, 5);
        CHECK(stats.correctness_at == 0.0);  // boxed{9} is wrong and already fixed
        CHECK(stats.correctness_following.empty());
    }

    SECTION("early positions can still recover") {
        const auto stats = probe::oracle_criticality(q, trace, 5, 64, backend, 19);
        CHECK(stats.correctness_at > 0.2);  // exact mass is ~0.40
    }

    SECTION("zero rollouts is a precondition violation") {
        CHECK_THROWS_AS(probe::oracle_criticality(q, trace, 11, 0, backend, 1), ConfigError);
    }
}
