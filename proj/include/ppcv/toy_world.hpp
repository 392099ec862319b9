#pragma once

/**
 * ToyWorld: the fixture substrate behind the deterministic toy language
 * model. A world is a set of arithmetic templates. Each template owns
 *
 *   - a list of surface variants (index 0 is the original question, the
 *     rest form the paraphrase table; all variants share operands and the
 *     gold answer),
 *   - a token-level script: the transition table that defines the
 *     next-token distribution at every position, conditioned on the
 *     surface variant, and
 *   - optionally an error injection: a script position where the original
 *     phrasing puts its probability mass on a wrong value token, while
 *     designated "flipping" variants rank the correct token first.
 *
 * Script slots:
 *   lit    fixed token, probability 1.
 *   choice per-variant distribution over candidate tokens; the emitted
 *          token is bound under the slot id for later slots.
 *   carry  re-emission of an earlier bound value: if the bound token
 *          equals the slot's correct token, it is kept with prob `keep`;
 *          otherwise the model sticks with the bound token (prob `stick`),
 *          fixes it to the correct token (prob `fix`) or drifts to the
 *          slot's drift token (remaining mass). Binds its own id.
 *   boxed  deterministic final token "boxed{<bound>}".
 *
 * Past the end of the script the model emits the end-of-text token with
 * probability 1. Every distribution sums to 1 within 1e-12; the loader
 * validates this together with the structural invariants.
 */

#include "ppcv/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

namespace ppcv::toy {

inline const char* kEndToken = "<|end|>";
inline constexpr int kSchemaVersion = 1;

struct SlotLit {
    std::string token;
};

struct SlotChoice {
    std::string id;
    // one table per variant, index-aligned with Template::variants
    std::vector<std::map<std::string, double>> per_variant;
};

struct SlotCarry {
    struct Params {
        double keep = 1.0;   // P(re-emit bound | bound correct)
        double stick = 1.0;  // P(keep bound | bound wrong)
        double fix = 0.0;    // P(emit correct | bound wrong)
    };
    std::string id;
    std::string of;       // id of the earlier slot whose bound token is carried
    std::string correct;  // the correct value token
    std::string drift;    // residual-mass token
    std::vector<Params> per_variant;
};

struct SlotBoxed {
    std::string of;
};

using Slot = std::variant<SlotLit, SlotChoice, SlotCarry, SlotBoxed>;

struct Injection {
    int position = 0;
    std::string wrong_token;
    std::string correct_token;
    std::vector<int> flipping_variants;  // variant indices whose top-1 flips to correct
};

struct Template {
    std::string id;
    std::string op;  // add | sub | mul
    long a = 0;
    long b = 0;
    std::string gold;
    std::vector<std::string> variants;  // [0] = original question text
    std::vector<Slot> script;
    std::optional<Injection> injection;
};

struct Instruction {
    std::string text;
    int offset = 0;  // paraphrase-table rotation applied by the toy backend
};

struct ToyWorld {
    std::uint64_t seed = 0;
    std::vector<Template> templates;
    std::vector<Instruction> instruction_pool;
};

// ---------------------------------------------------------------------------
// Distribution evaluation
// ---------------------------------------------------------------------------

/// Token -> probability; exact, sums to 1.
using Dist = std::map<std::string, double>;

namespace detail {

inline void add_mass(Dist& d, const std::string& tok, double p) {
    if (p > 0.0) d[tok] += p;
}

inline const std::string* bound_token(const Template& t, std::span<const std::string> prefix,
                                      const std::string& slot_id) {
    for (std::size_t i = 0; i < prefix.size() && i < t.script.size(); ++i) {
        const Slot& s = t.script[i];
        if (const auto* c = std::get_if<SlotChoice>(&s); c && c->id == slot_id) return &prefix[i];
        if (const auto* c = std::get_if<SlotCarry>(&s); c && c->id == slot_id) return &prefix[i];
    }
    return nullptr;
}

}  // namespace detail

/// Next-token distribution for a template/variant given the emitted prefix.
/// Only choice and carry positions read the prefix; literal positions are
/// positional, so off-script prefixes still yield a total distribution.
inline Dist next_distribution(const Template& t, int variant, std::span<const std::string> prefix) {
    const std::size_t pos = prefix.size();
    if (pos >= t.script.size()) return Dist{{kEndToken, 1.0}};
    const Slot& slot = t.script[pos];
    if (const auto* lit = std::get_if<SlotLit>(&slot)) return Dist{{lit->token, 1.0}};
    if (const auto* choice = std::get_if<SlotChoice>(&slot))
        return Dist(choice->per_variant[static_cast<std::size_t>(variant)]);
    if (const auto* carry = std::get_if<SlotCarry>(&slot)) {
        const std::string* bound = detail::bound_token(t, prefix, carry->of);
        const std::string b = bound ? *bound : carry->correct;
        const auto& p = carry->per_variant[static_cast<std::size_t>(variant)];
        Dist d;
        if (b == carry->correct) {
            detail::add_mass(d, carry->correct, p.keep);
            detail::add_mass(d, carry->drift, 1.0 - p.keep);
        } else {
            detail::add_mass(d, b, p.stick);
            detail::add_mass(d, carry->correct, p.fix);
            detail::add_mass(d, carry->drift, 1.0 - p.stick - p.fix);
        }
        return d;
    }
    const auto& boxed = std::get<SlotBoxed>(slot);
    const std::string* bound = detail::bound_token(t, prefix, boxed.of);
    return Dist{{"boxed{" + (bound ? *bound : t.gold) + "}", 1.0}};
}

/// Greedy argmax with the backend-wide tie rule: highest probability,
/// ties broken by ascending token id.
inline std::string greedy_token(const Dist& d) {
    const std::string* best = nullptr;
    double best_p = -1.0;
    TokenId best_id = 0;
    for (const auto& [tok, p] : d) {
        const TokenId id = token_id_of(tok);
        if (p > best_p || (p == best_p && id < best_id)) {
            best = &tok;
            best_p = p;
            best_id = id;
        }
    }
    return *best;
}

/// Full greedy emission for a variant (no length cap); ends before end-of-text.
inline std::vector<std::string> greedy_emission(const Template& t, int variant) {
    std::vector<std::string> out;
    while (true) {
        const Dist d = next_distribution(t, variant, out);
        std::string tok = greedy_token(d);
        if (tok == kEndToken) break;
        out.push_back(std::move(tok));
        if (out.size() > t.script.size() + 4) throw DataError("toy script failed to terminate");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline void validate_world(const ToyWorld& w) {
    std::map<std::string, int> seen_texts;
    for (const auto& t : w.templates) {
        if (t.variants.empty()) throw DataError("template " + t.id + ": no variants");
        const std::size_t nv = t.variants.size();
        for (const auto& v : t.variants) {
            if (++seen_texts[v] > 1) throw DataError("duplicate variant text: " + v);
            // paraphrase variants preserve the operands
            if (v.find(std::to_string(t.a)) == std::string::npos ||
                v.find(std::to_string(t.b)) == std::string::npos)
                throw DataError("template " + t.id + ": variant drops an operand: " + v);
        }
        std::map<std::string, std::size_t> slot_pos;
        for (std::size_t i = 0; i < t.script.size(); ++i) {
            const Slot& s = t.script[i];
            if (const auto* c = std::get_if<SlotChoice>(&s)) {
                if (c->per_variant.size() != nv)
                    throw DataError("template " + t.id + ": choice table count != variant count");
                for (const auto& table : c->per_variant) {
                    if (table.empty()) throw DataError("template " + t.id + ": empty choice table");
                    double sum = 0.0;
                    for (const auto& [tok, p] : table) {
                        if (p <= 0.0 || p > 1.0) throw DataError("template " + t.id + ": bad prob");
                        if (tok == kEndToken) throw DataError("end token inside choice table");
                        sum += p;
                    }
                    if (std::abs(sum - 1.0) > 1e-12)
                        throw DataError("template " + t.id + ": choice probs sum to " +
                                        std::to_string(sum));
                }
                slot_pos[c->id] = i;
            } else if (const auto* c = std::get_if<SlotCarry>(&s)) {
                if (c->per_variant.size() != nv)
                    throw DataError("template " + t.id + ": carry table count != variant count");
                if (!slot_pos.count(c->of))
                    throw DataError("template " + t.id + ": carry references unknown slot " + c->of);
                for (const auto& p : c->per_variant) {
                    if (p.keep <= 0.0 || p.keep > 1.0 || p.stick < 0.0 || p.fix < 0.0 ||
                        p.stick + p.fix > 1.0)
                        throw DataError("template " + t.id + ": bad carry params");
                }
                slot_pos[c->id] = i;
            } else if (const auto* b = std::get_if<SlotBoxed>(&s)) {
                if (!slot_pos.count(b->of))
                    throw DataError("template " + t.id + ": boxed references unknown slot " + b->of);
            }
        }
        // every injection position must be reachable in the greedy trace
        if (t.injection) {
            const auto greedy = greedy_emission(t, 0);
            const int pos = t.injection->position;
            if (pos < 0 || static_cast<std::size_t>(pos) >= greedy.size())
                throw DataError("template " + t.id + ": injection position unreachable");
            if (greedy[static_cast<std::size_t>(pos)] != t.injection->wrong_token)
                throw DataError("template " + t.id + ": greedy token at injection position is not the wrong token");
            for (int v : t.injection->flipping_variants)
                if (v <= 0 || static_cast<std::size_t>(v) >= nv)
                    throw DataError("template " + t.id + ": flipping variant out of range");
        }
    }
}

// ---------------------------------------------------------------------------
// JSON schema (golden-tested)
// ---------------------------------------------------------------------------

inline nlohmann::json slot_to_json(const Slot& s) {
    nlohmann::json j;
    if (const auto* lit = std::get_if<SlotLit>(&s)) {
        j["kind"] = "lit";
        j["token"] = lit->token;
    } else if (const auto* c = std::get_if<SlotChoice>(&s)) {
        j["kind"] = "choice";
        j["id"] = c->id;
        j["per_variant"] = c->per_variant;
    } else if (const auto* c = std::get_if<SlotCarry>(&s)) {
        j["kind"] = "carry";
        j["id"] = c->id;
        j["of"] = c->of;
        j["correct"] = c->correct;
        j["drift"] = c->drift;
        nlohmann::json tables = nlohmann::json::array();
        for (const auto& p : c->per_variant)
            tables.push_back({{"keep", p.keep}, {"stick", p.stick}, {"fix", p.fix}});
        j["per_variant"] = tables;
    } else {
        const auto& b = std::get<SlotBoxed>(s);
        j["kind"] = "boxed";
        j["of"] = b.of;
    }
    return j;
}

inline Slot slot_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "lit") return SlotLit{j.at("token").get<std::string>()};
    if (kind == "choice") {
        SlotChoice c;
        c.id = j.at("id").get<std::string>();
        c.per_variant = j.at("per_variant").get<std::vector<std::map<std::string, double>>>();
        return c;
    }
    if (kind == "carry") {
        SlotCarry c;
        c.id = j.at("id").get<std::string>();
        c.of = j.at("of").get<std::string>();
        c.correct = j.at("correct").get<std::string>();
        c.drift = j.at("drift").get<std::string>();
        for (const auto& p : j.at("per_variant"))
            c.per_variant.push_back({p.at("keep").get<double>(), p.at("stick").get<double>(),
                                     p.at("fix").get<double>()});
        return c;
    }
    if (kind == "boxed") return SlotBoxed{j.at("of").get<std::string>()};
    throw DataError("unknown slot kind: " + kind);
}

inline nlohmann::json world_to_json(const ToyWorld& w) {
    nlohmann::json j;
    j["version"] = kSchemaVersion;
    j["seed"] = w.seed;
    nlohmann::json templates = nlohmann::json::array();
    for (const auto& t : w.templates) {
        nlohmann::json tj;
        tj["id"] = t.id;
        tj["op"] = t.op;
        tj["a"] = t.a;
        tj["b"] = t.b;
        tj["gold"] = t.gold;
        tj["variants"] = t.variants;
        nlohmann::json script = nlohmann::json::array();
        for (const auto& s : t.script) script.push_back(slot_to_json(s));
        tj["script"] = script;
        if (t.injection) {
            tj["injection"] = {{"position", t.injection->position},
                               {"wrong_token", t.injection->wrong_token},
                               {"correct_token", t.injection->correct_token},
                               {"flipping_variants", t.injection->flipping_variants}};
        }
        templates.push_back(tj);
    }
    j["templates"] = templates;
    nlohmann::json pool = nlohmann::json::array();
    for (const auto& i : w.instruction_pool)
        pool.push_back({{"text", i.text}, {"offset", i.offset}});
    j["instruction_pool"] = pool;
    return j;
}

inline ToyWorld world_from_json(const nlohmann::json& j) {
    if (j.at("version").get<int>() != kSchemaVersion)
        throw DataError("unsupported toy world schema version");
    ToyWorld w;
    w.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& tj : j.at("templates")) {
        Template t;
        t.id = tj.at("id").get<std::string>();
        t.op = tj.at("op").get<std::string>();
        t.a = tj.at("a").get<long>();
        t.b = tj.at("b").get<long>();
        t.gold = tj.at("gold").get<std::string>();
        t.variants = tj.at("variants").get<std::vector<std::string>>();
        for (const auto& sj : tj.at("script")) t.script.push_back(slot_from_json(sj));
        if (tj.contains("injection")) {
            const auto& ij = tj.at("injection");
            t.injection = Injection{ij.at("position").get<int>(),
                                    ij.at("wrong_token").get<std::string>(),
                                    ij.at("correct_token").get<std::string>(),
                                    ij.at("flipping_variants").get<std::vector<int>>()};
        }
        w.templates.push_back(std::move(t));
    }
    for (const auto& ij : j.at("instruction_pool"))
        w.instruction_pool.push_back({ij.at("text").get<std::string>(), ij.at("offset").get<int>()});
    validate_world(w);
    return w;
}

inline void save_world(const ToyWorld& w, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write toy world: " + path);
    out << world_to_json(w).dump(2) << "\n";
}

inline ToyWorld load_world(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read toy world: " + path);
    nlohmann::json j;
    in >> j;
    return world_from_json(j);
}

// ---------------------------------------------------------------------------
// Deterministic world generation
// ---------------------------------------------------------------------------

struct GenConfig {
    std::uint64_t seed = 1;
    int templates = 20;
    double injected_fraction = 0.5;
};

namespace detail {

struct Phrasing {
    const char* original;
    const char* paraphrases[6];
    const char* op_word;
};

inline const Phrasing& phrasing_for(const std::string& op) {
    static const Phrasing add = {
        "What is {a} plus {b} ?",
        {"Compute the sum of {a} and {b} .", "Find the total when {a} is added to {b} .",
         "If you combine {a} with {b} , what do you get ?", "Work out the value of {a} + {b} .",
         "Determine the result of adding {a} to {b} .", "How much is {a} and {b} together ?"},
        "plus"};
    static const Phrasing sub = {
        "What is {a} minus {b} ?",
        {"Compute the difference between {a} and {b} .", "Find what remains when {b} is taken from {a} .",
         "If you remove {b} from {a} , what is left ?", "Work out the value of {a} - {b} .",
         "Determine the result of subtracting {b} from {a} .",
         "How much is left after {b} is deducted from {a} ?"},
        "minus"};
    static const Phrasing mul = {
        "What is {a} times {b} ?",
        {"Compute the product of {a} and {b} .", "Find the total of {b} groups of {a} .",
         "If you multiply {a} by {b} , what do you get ?", "Work out the value of {a} * {b} .",
         "Determine the result of multiplying {a} by {b} .", "How many is {a} taken {b} times ?"},
        "times"};
    if (op == "add") return add;
    if (op == "sub") return sub;
    return mul;
}

inline std::string fill(const char* pattern, long a, long b) {
    std::string s = pattern;
    auto replace_all = [&s](const std::string& from, const std::string& to) {
        std::size_t p = 0;
        while ((p = s.find(from, p)) != std::string::npos) {
            s.replace(p, from.size(), to);
            p += to.size();
        }
    };
    replace_all("{a}", std::to_string(a));
    replace_all("{b}", std::to_string(b));
    return s;
}

}  // namespace detail

/// Seed-deterministic world with the structural guarantees the pipeline
/// tests rely on: every injected template has at least one flipping
/// paraphrase variant, wrong/distractor values are distinct from the gold
/// value, and variant texts are unique across the world.
inline ToyWorld generate_world(const GenConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    ToyWorld w;
    w.seed = cfg.seed;

    w.instruction_pool = {
        {"Rewrite the question in different words, keeping all numbers and operations exactly the same.", 0},
        {"Restate the problem using new phrasing while preserving every quantity and relation.", 1},
        {"Express the question differently without altering its values or the required arithmetic.", 2},
        {"Produce a reworded version of the problem that keeps amounts and operations intact.", 3},
        {"Give the problem a new surface form, leaving numbers and mathematical structure unchanged.", 4},
    };

    const char* ops[3] = {"add", "sub", "mul"};
    std::set<std::tuple<std::string, long, long>> used;
    const int n_injected = static_cast<int>(std::lround(cfg.injected_fraction * cfg.templates));

    for (int i = 0; i < cfg.templates; ++i) {
        Template t;
        // unique (op, a, b) so variant texts never collide across templates
        for (int attempt = 0;; ++attempt) {
            t.op = ops[rng() % 3];
            t.a = 4 + static_cast<long>(rng() % 27);
            t.b = 2 + static_cast<long>(rng() % 11);
            if (t.op == "sub" && t.b > t.a) std::swap(t.a, t.b);
            if (used.insert({t.op, t.a, t.b}).second) break;
            if (attempt > 4000) throw DataError("toy generator exhausted unique operand space");
        }
        long result = t.op == "add" ? t.a + t.b : t.op == "sub" ? t.a - t.b : t.a * t.b;
        t.gold = std::to_string(result);
        t.id = "t" + std::string(i < 10 ? "00" : i < 100 ? "0" : "") + std::to_string(i);

        const auto& ph = detail::phrasing_for(t.op);
        t.variants.push_back(detail::fill(ph.original, t.a, t.b));
        for (const char* p : ph.paraphrases) t.variants.push_back(detail::fill(p, t.a, t.b));
        const std::size_t nv = t.variants.size();  // 7

        const bool injected = i < n_injected;
        const std::string correct = t.gold;
        auto perturb = [&](long delta) { return std::to_string(result + delta); };
        const std::string wrong = perturb(result >= 2 && rng() % 2 ? -1 : 1);
        const std::string d1 = perturb(2);
        const std::string d2 = perturb(result >= 3 ? -3 : 3);
        const std::string drift = perturb(10);

        // benign synonym slot: some paraphrase variants prefer the other word
        SlotChoice syn;
        syn.id = "s0";
        for (std::size_t v = 0; v < nv; ++v) {
            const bool flip_syn = v > 0 && rng() % 2 == 0;
            if (flip_syn)
                syn.per_variant.push_back({{"giving", 0.4}, {"yielding", 0.6}});
            else
                syn.per_variant.push_back({{"giving", 0.7}, {"yielding", 0.3}});
        }

        // value slot: the injection point for error templates
        SlotChoice value;
        value.id = "v0";
        std::vector<int> flipping;
        for (std::size_t v = 0; v < nv; ++v) {
            if (!injected) {
                value.per_variant.push_back({{correct, 0.97}, {wrong, 0.015}, {d1, 0.015}});
            } else if (v == 0) {
                value.per_variant.push_back({{wrong, 0.55}, {correct, 0.40}, {d1, 0.03}, {d2, 0.02}});
            } else {
                const bool flips = rng() % 10 < 6;
                if (flips) {
                    value.per_variant.push_back({{correct, 0.70}, {wrong, 0.25}, {d1, 0.03}, {d2, 0.02}});
                    flipping.push_back(static_cast<int>(v));
                } else {
                    value.per_variant.push_back({{wrong, 0.55}, {correct, 0.40}, {d1, 0.03}, {d2, 0.02}});
                }
            }
        }
        if (injected && flipping.empty()) {
            value.per_variant[1] = {{correct, 0.70}, {wrong, 0.25}, {d1, 0.03}, {d2, 0.02}};
            flipping.push_back(1);
        }

        // carry slot: the original phrasing sticks with a wrong value; the
        // paraphrased phrasings mostly repair it, except an occasional
        // "sticky" variant that inherits the error
        SlotCarry carry;
        carry.id = "f0";
        carry.of = "v0";
        carry.correct = correct;
        carry.drift = drift;
        const int sticky_variant = (injected && rng() % 10 < 4) ? 1 + static_cast<int>(rng() % (nv - 1)) : -1;
        for (std::size_t v = 0; v < nv; ++v) {
            if (v == 0 || static_cast<int>(v) == sticky_variant)
                carry.per_variant.push_back({0.97, 0.96, 0.02});
            else
                carry.per_variant.push_back({0.97, 0.33, 0.62});
        }

        t.script = {
            SlotLit{"We"},     SlotLit{"solve"}, SlotLit{"step"},  SlotLit{"by"},
            SlotLit{"step"},   SlotLit{"."},     SlotLit{"Take"},  SlotLit{std::to_string(t.a)},
            SlotLit{ph.op_word}, SlotLit{std::to_string(t.b)}, syn, value,
            SlotLit{"."},      SlotLit{"The"},   SlotLit{"final"}, SlotLit{"answer"},
            SlotLit{"is"},     carry,            SlotLit{"."},     SlotBoxed{"f0"},
        };

        if (injected) t.injection = Injection{11, wrong, correct, flipping};
        w.templates.push_back(std::move(t));
    }

    validate_world(w);
    return w;
}

}  // namespace ppcv::toy
