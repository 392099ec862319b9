#pragma once

// Hand-built toy fixtures with expectations derived on paper. The
// "5 plus 3" template is used across the probe/verify tests:
//
//   greedy (original phrasing):
//     We solve step by step . Take 5 plus 3 giving 9 . The final answer
//     is 9 . boxed{9}
//   value slot at position 11 (wrong "9" ranked over correct "8"),
//   carry slot at position 17, boxed at 19.
//
//   variant 1 flips the value slot (top-1 becomes "8", delta 0.45) and
//   repairs a wrong carried value; variant 2 only flips the benign
//   synonym slot (position 10, delta 0.2) but also repairs; variant 3 is
//   "sticky": it inherits wrong values at the carry slot.

#include "ppcv/toy_world.hpp"

#include <string>
#include <vector>

namespace ppcv::testsupport {

inline toy::Template hand_template() {
    using namespace ppcv::toy;
    Template t;
    t.id = "hand0";
    t.op = "add";
    t.a = 5;
    t.b = 3;
    t.gold = "8";
    t.variants = {
        "What is 5 plus 3 ?",
        "Compute the sum of 5 and 3 .",
        "How much is 5 and 3 together ?",
        "Work out the value of 5 + 3 .",
    };

    SlotChoice syn;
    syn.id = "s0";
    syn.per_variant = {
        {{"giving", 0.7}, {"yielding", 0.3}},
        {{"giving", 0.7}, {"yielding", 0.3}},
        {{"giving", 0.4}, {"yielding", 0.6}},
        {{"giving", 0.7}, {"yielding", 0.3}},
    };

    SlotChoice value;
    value.id = "v0";
    value.per_variant = {
        {{"9", 0.55}, {"8", 0.40}, {"12", 0.03}, {"6", 0.02}},
        {{"8", 0.70}, {"9", 0.25}, {"12", 0.03}, {"6", 0.02}},
        {{"9", 0.55}, {"8", 0.40}, {"12", 0.03}, {"6", 0.02}},
        {{"9", 0.55}, {"8", 0.40}, {"12", 0.03}, {"6", 0.02}},
    };

    SlotCarry carry;
    carry.id = "f0";
    carry.of = "v0";
    carry.correct = "8";
    carry.drift = "18";
    carry.per_variant = {
        {0.97, 0.96, 0.02},
        {0.97, 0.33, 0.62},
        {0.97, 0.33, 0.62},
        {0.97, 0.96, 0.02},
    };

    t.script = {
        SlotLit{"We"},    SlotLit{"solve"}, SlotLit{"step"},  SlotLit{"by"},  SlotLit{"step"},
        SlotLit{"."},     SlotLit{"Take"},  SlotLit{"5"},     SlotLit{"plus"}, SlotLit{"3"},
        syn,              value,            SlotLit{"."},     SlotLit{"The"}, SlotLit{"final"},
        SlotLit{"answer"}, SlotLit{"is"},   carry,            SlotLit{"."},   SlotBoxed{"f0"},
    };
    t.injection = toy::Injection{11, "9", "8", {1}};
    return t;
}

// A clean companion template (no injection) whose variant 1 flips only the
// synonym slot, so probing finds a benign candidate and stage 2 still
// returns the gold answer.
inline toy::Template hand_clean_template() {
    using namespace ppcv::toy;
    Template t;
    t.id = "hand1";
    t.op = "add";
    t.a = 7;
    t.b = 2;
    t.gold = "9";
    t.variants = {
        "What is 7 plus 2 ?",
        "Compute the sum of 7 and 2 .",
        "How much is 7 and 2 together ?",
        "Work out the value of 7 + 2 .",
    };
    SlotChoice syn;
    syn.id = "s0";
    syn.per_variant = {
        {{"giving", 0.7}, {"yielding", 0.3}},
        {{"giving", 0.4}, {"yielding", 0.6}},
        {{"giving", 0.7}, {"yielding", 0.3}},
        {{"giving", 0.7}, {"yielding", 0.3}},
    };
    SlotChoice value;
    value.id = "v0";
    value.per_variant = {
        {{"9", 0.97}, {"10", 0.015}, {"11", 0.015}},
        {{"9", 0.97}, {"10", 0.015}, {"11", 0.015}},
        {{"9", 0.97}, {"10", 0.015}, {"11", 0.015}},
        {{"9", 0.97}, {"10", 0.015}, {"11", 0.015}},
    };
    SlotCarry carry;
    carry.id = "f0";
    carry.of = "v0";
    carry.correct = "9";
    carry.drift = "19";
    carry.per_variant = {
        {0.97, 0.96, 0.02},
        {0.97, 0.33, 0.62},
        {0.97, 0.33, 0.62},
        {0.97, 0.33, 0.62},
    };
    t.script = {
        SlotLit{"We"},    SlotLit{"solve"}, SlotLit{"step"},  SlotLit{"by"},  SlotLit{"step"},
        SlotLit{"."},     SlotLit{"Take"},  SlotLit{"7"},     SlotLit{"plus"}, SlotLit{"2"},
        syn,              value,            SlotLit{"."},     SlotLit{"The"}, SlotLit{"final"},
        SlotLit{"answer"}, SlotLit{"is"},   carry,            SlotLit{"."},   SlotBoxed{"f0"},
    };
    return t;
}

// A fully uniform clean template: no slot distribution differs across
// variants, so probing finds no candidates and the pipeline takes the
// no-candidate fallback.
inline toy::Template hand_uniform_template() {
    using namespace ppcv::toy;
    Template t;
    t.id = "hand2";
    t.op = "add";
    t.a = 6;
    t.b = 2;
    t.gold = "8";
    t.variants = {
        "What is 6 plus 2 ?",
        "Compute the sum of 6 and 2 .",
        "How much is 6 and 2 together ?",
    };
    SlotChoice syn;
    syn.id = "s0";
    syn.per_variant.assign(3, {{"giving", 0.7}, {"yielding", 0.3}});
    SlotChoice value;
    value.id = "v0";
    value.per_variant.assign(3, {{"8", 0.97}, {"9", 0.015}, {"10", 0.015}});
    SlotCarry carry;
    carry.id = "f0";
    carry.of = "v0";
    carry.correct = "8";
    carry.drift = "18";
    carry.per_variant.assign(3, {0.97, 0.96, 0.02});
    t.script = {
        SlotLit{"We"},    SlotLit{"solve"}, SlotLit{"step"},  SlotLit{"by"},  SlotLit{"step"},
        SlotLit{"."},     SlotLit{"Take"},  SlotLit{"6"},     SlotLit{"plus"}, SlotLit{"2"},
        syn,              value,            SlotLit{"."},     SlotLit{"The"}, SlotLit{"final"},
        SlotLit{"answer"}, SlotLit{"is"},   carry,            SlotLit{"."},   SlotBoxed{"f0"},
    };
    return t;
}

inline toy::ToyWorld hand_world() {
    toy::ToyWorld w;
    w.seed = 4242;
    w.templates = {hand_template(), hand_clean_template(), hand_uniform_template()};
    w.instruction_pool = {
        {"Rewrite the question in different words, keeping all numbers and operations exactly the same.", 0},
        {"Restate the problem using new phrasing while preserving every quantity and relation.", 1},
        {"Express the question differently without altering its values or the required arithmetic.", 2},
    };
    toy::validate_world(w);
    return w;
}

inline const char* kHandGreedyText =
    "We solve step by step . Take 5 plus 3 giving 9 . The final answer is 9 . boxed{9}";

}  // namespace ppcv::testsupport
