#pragma once

/**
 * Pipeline driver. One invocation runs one mode over one dataset:
 *
 *   ppcv    paraphrase -> initial greedy trace -> probe -> (on candidates)
 *           alternative sampling + K x (N+1) greedy rollouts -> consistency
 *           selection; on probe fallback the initial answer is kept.
 *   cot     one greedy trace.
 *   self_consistency
 *           M sampled traces on the original question, majority vote.
 *   pmv     R sampled traces per paraphrase, majority vote over all N*R.
 *
 * Records stream to the run directory as each question completes, so a
 * killed run restarts by skipping the question ids already on disk. All
 * sampling streams are keyed by (seed, question id, sample index); record
 * content is independent of worker scheduling.
 */

#include "ppcv/cache.hpp"
#include "ppcv/dataset.hpp"
#include "ppcv/metrics.hpp"
#include "ppcv/parallel.hpp"
#include "ppcv/paraphrase.hpp"
#include "ppcv/probe.hpp"
#include "ppcv/prompts.hpp"
#include "ppcv/verify.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ppcv::harness {

enum class RunMode { ppcv, cot, self_consistency, pmv };

inline const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::ppcv: return "ppcv";
        case RunMode::cot: return "cot";
        case RunMode::self_consistency: return "self_consistency";
        case RunMode::pmv: return "pmv";
    }
    return "?";
}

inline RunMode run_mode_from_string(const std::string& s) {
    if (s == "ppcv") return RunMode::ppcv;
    if (s == "cot") return RunMode::cot;
    if (s == "self_consistency" || s == "self-consistency") return RunMode::self_consistency;
    if (s == "pmv") return RunMode::pmv;
    throw ConfigError("unknown mode: " + s);
}

struct RunRecord {
    std::string question_id;
    RunMode mode = RunMode::cot;
    std::string initial_trace_ref;
    std::optional<std::string> initial_answer;
    std::optional<probe::ProbeReport> probe_report;
    std::optional<verify::RolloutMatrix> matrix;
    std::optional<verify::FinalAnswer> final_answer;  // ppcv path
    std::optional<std::string> answer;                // the answer that was scored
    bool correct = false;
    LatencyBreakdown timings;
    std::uint64_t cache_hits = 0;
    std::uint64_t tokens_generated = 0;
    int n_samples = 1;
    int c_correct = 0;
    std::optional<std::string> error;
};

inline void to_json(nlohmann::json& j, const RunRecord& r) {
    j["question_id"] = r.question_id;
    j["mode"] = to_string(r.mode);
    j["initial_trace_ref"] = r.initial_trace_ref;
    j["initial_answer"] = r.initial_answer ? nlohmann::json(*r.initial_answer) : nlohmann::json(nullptr);
    if (r.probe_report) j["probe_report"] = *r.probe_report;
    if (r.matrix) j["matrix"] = *r.matrix;
    if (r.final_answer) j["final"] = *r.final_answer;
    j["answer"] = r.answer ? nlohmann::json(*r.answer) : nlohmann::json(nullptr);
    j["correct"] = r.correct;
    j["timings"] = r.timings;
    j["cache_hits"] = r.cache_hits;
    j["tokens_generated"] = r.tokens_generated;
    j["n_samples"] = r.n_samples;
    j["c_correct"] = r.c_correct;
    if (r.error) j["error"] = *r.error;
}

// ---------------------------------------------------------------------------
// Run directory
// ---------------------------------------------------------------------------

/**
 * Layout: manifest.json (config snapshot + backend identity + seed),
 * records.jsonl (append-only, one record per completed question), traces/
 * (blob store keyed by trace fingerprint), report.json (written by the
 * report step). A manifest mismatch on resume is a configuration error.
 */
class RunDirectory {
public:
    RunDirectory(std::filesystem::path dir, const nlohmann::json& manifest)
        : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_ / "traces");
        const auto manifest_path = dir_ / "manifest.json";
        if (std::filesystem::exists(manifest_path)) {
            nlohmann::json existing;
            std::ifstream(manifest_path) >> existing;
            for (const auto& field : {"backend", "seed", "mode", "config"}) {
                if (existing.value(field, nlohmann::json()) != manifest.value(field, nlohmann::json()))
                    throw ConfigError(std::string("run directory manifest mismatch on '") + field +
                                      "'; refusing to resume");
            }
        } else {
            std::ofstream out(manifest_path);
            out << manifest.dump(2) << "\n";
        }
        load_completed();
        records_.open(dir_ / "records.jsonl", std::ios::app);
        if (!records_) throw DataError("cannot open records file in " + dir_.string());
    }

    const std::set<std::string>& completed_ids() const { return completed_; }
    const std::filesystem::path& path() const { return dir_; }

    void append(const RunRecord& r) {
        nlohmann::json j = r;
        std::lock_guard<std::mutex> lock(mutex_);
        records_ << j.dump() << "\n";
        records_.flush();
        completed_.insert(r.question_id);
    }

    void store_trace(const ReasoningTrace& t) {
        const auto ref = trace_fingerprint(t);
        const auto shard = dir_ / "traces" / ref.substr(0, 2);
        const auto path = shard / (ref + ".json");
        {
            std::lock_guard<std::mutex> lock(mutex_);
            if (std::filesystem::exists(path)) return;
            std::filesystem::create_directories(shard);
        }
        nlohmann::json j = t;
        const auto tmp = path.string() + ".tmp";
        std::ofstream(tmp) << j.dump();
        std::filesystem::rename(tmp, path);
    }

private:
    void load_completed() {
        std::ifstream in(dir_ / "records.jsonl");
        if (!in) return;
        std::string line;
        std::vector<std::string> lines;
        while (std::getline(in, line))
            if (!line.empty()) lines.push_back(line);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            try {
                completed_.insert(nlohmann::json::parse(lines[i]).at("question_id").get<std::string>());
            } catch (const std::exception&) {
                if (i + 1 == lines.size()) {
                    std::cerr << "warning: dropping truncated trailing record line\n";
                    truncate_to(lines, i);
                    break;
                }
                throw DataError("corrupt record line " + std::to_string(i + 1) + " in records.jsonl");
            }
        }
    }

    void truncate_to(const std::vector<std::string>& lines, std::size_t count) {
        std::ofstream out(dir_ / "records.jsonl", std::ios::trunc);
        for (std::size_t i = 0; i < count; ++i) out << lines[i] << "\n";
    }

    std::filesystem::path dir_;
    std::ofstream records_;
    std::set<std::string> completed_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Options
// ---------------------------------------------------------------------------

struct RunOptions {
    int n_paraphrases = 4;      // math default; 3 is the multiple-choice default
    int n_paraphrases_mc = 3;
    int top_k = 10;             // alternative tokens at the critical position
    double lambda = 2.0;        // similarity weight temperature
    bool weighted = true;       // weighted tiebreak enabled
    probe::ProbeWindow window;  // full trace by default
    int top_l = 5;              // logprobs requested per forced position
    int max_new_tokens = 256;
    int sc_samples = 48;        // self-consistency rollouts
    int pmv_rollouts = 10;      // rollouts per paraphrase variant
    double temperature = 0.7;   // sampling baselines (not paper-specified)
    int sampling_top_k = 0;     // 0 = full distribution
    int concurrency = 1;
    std::uint64_t seed = 0;
    int eval_samples = 1;       // repetitions per question for pass@k
    std::optional<int> limit;   // stop after this many newly processed questions
    paraphrase::ParaphraseInstruction instruction =
        paraphrase::ParaphraseInstruction::from_text(prompts::kParaphraseMath);
};

inline nlohmann::json options_to_json(const RunOptions& o) {
    nlohmann::json j;
    j["n_paraphrases"] = o.n_paraphrases;
    j["n_paraphrases_mc"] = o.n_paraphrases_mc;
    j["top_k"] = o.top_k;
    j["lambda"] = o.lambda;
    j["weighted"] = o.weighted;
    j["window"] = {o.window.start_frac, o.window.end_frac};
    j["top_l"] = o.top_l;
    j["max_new_tokens"] = o.max_new_tokens;
    j["sc_samples"] = o.sc_samples;
    j["pmv_rollouts"] = o.pmv_rollouts;
    j["temperature"] = o.temperature;
    j["sampling_top_k"] = o.sampling_top_k;
    j["seed"] = o.seed;
    j["eval_samples"] = o.eval_samples;
    j["instruction_id"] = o.instruction.id;
    j["prompt_hashes"] = {prompts::template_hash(prompts::kMathCot),
                          prompts::template_hash(prompts::kArcCot),
                          prompts::template_hash(o.instruction.text)};
    return j;
}

// ---------------------------------------------------------------------------
// Majority vote
// ---------------------------------------------------------------------------

/// Majority over normalized answers; absent answers never vote. Ties go
/// to the most frequent, then lexicographically smallest answer. The
/// result is invariant under permutations of the input.
inline std::optional<std::string> majority_vote(
    const std::vector<std::optional<std::string>>& answers, AnswerKind kind) {
    std::vector<std::pair<std::string, int>> groups;
    for (const auto& a : answers) {
        if (!a) continue;
        bool merged = false;
        for (auto& [rep, count] : groups) {
            if (answers_equal(rep, *a, kind)) {
                ++count;
                if (*a < rep) rep = *a;  // canonical representative
                merged = true;
                break;
            }
        }
        if (!merged) groups.push_back({*a, 1});
    }
    if (groups.empty()) return std::nullopt;
    const auto best = std::min_element(groups.begin(), groups.end(), [](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return x.first < y.first;
    });
    return best->first;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

class Runner {
public:
    Runner(LmBackend& backend, RunOptions opts, std::shared_ptr<cache::DiskCache> disk = nullptr,
           RunDirectory* dir = nullptr)
        : backend_(backend), opts_(std::move(opts)), disk_(std::move(disk)), dir_(dir) {}

    /// Fails fast on capability gaps before any question is touched.
    void check_capabilities(RunMode mode) const {
        const auto caps = backend_.capabilities();
        if (mode == RunMode::ppcv && !caps.forced_scoring)
            throw ConfigError("ppcv requires a backend with forced-path scoring");
        if ((mode == RunMode::self_consistency || mode == RunMode::pmv) && !caps.sampling)
            throw ConfigError("sampling baselines require a sampling-capable backend");
    }

    /// Processes the dataset, appending records to the run directory as
    /// questions complete. Returns records for newly processed questions.
    std::vector<RunRecord> run(RunMode mode, const std::vector<Question>& dataset) {
        check_capabilities(mode);
        std::vector<const Question*> todo;
        for (const auto& q : dataset) {
            if (dir_ && dir_->completed_ids().count(q.id)) continue;
            todo.push_back(&q);
            if (opts_.limit && static_cast<int>(todo.size()) >= *opts_.limit) break;
        }
        std::vector<std::optional<RunRecord>> slots(todo.size());
        parallel_for(todo.size(), opts_.concurrency, [&](std::size_t i) {
            slots[i] = process_question(mode, *todo[i]);
            if (dir_) dir_->append(*slots[i]);
        });
        std::vector<RunRecord> records;
        records.reserve(slots.size());
        bool any_error = false;
        for (auto& s : slots) {
            any_error = any_error || (s && s->error.has_value());
            records.push_back(std::move(*s));
        }
        had_failures_ = any_error;
        return records;
    }

    bool had_failures() const { return had_failures_; }

    RunRecord process_question(RunMode mode, const Question& q) {
        cache::CachingBackend qb(backend_, disk_);
        RunRecord r;
        r.question_id = q.id;
        r.mode = mode;
        Stopwatch wall;
        try {
            const int n = opts_.eval_samples;
            int c = 0;
            for (int sample = 0; sample < n; ++sample) {
                const bool keep = sample == 0;  // record artifacts for the first sample
                RunRecord attempt;
                attempt.question_id = q.id;
                attempt.mode = mode;
                switch (mode) {
                    case RunMode::ppcv: run_ppcv_once(q, qb, attempt); break;
                    case RunMode::cot: run_cot_once(q, qb, attempt); break;
                    case RunMode::self_consistency: run_sc_once(q, qb, attempt, sample); break;
                    case RunMode::pmv: run_pmv_once(q, qb, attempt, sample); break;
                }
                attempt.correct = attempt.answer &&
                                  answers_equal(*attempt.answer, q.gold.normalized, q.kind);
                c += attempt.correct ? 1 : 0;
                if (keep) r = std::move(attempt);
            }
            r.n_samples = n;
            r.c_correct = c;
        } catch (const std::exception& e) {
            r.error = e.what();
            r.correct = false;
        }
        r.timings.wall_total = wall.seconds();
        r.cache_hits = qb.cache_hits();
        r.tokens_generated = qb.tokens_generated();
        return r;
    }

    static QuestionStats stats_of(const RunRecord& r) {
        QuestionStats s;
        s.question_id = r.question_id;
        s.n_samples = r.n_samples;
        s.c_correct = r.c_correct;
        s.correct = r.correct;
        s.timings = r.timings;
        s.tokens_generated = r.tokens_generated;
        s.fallback = r.probe_report && r.probe_report->fallback;
        s.any_floored = r.probe_report && r.probe_report->any_floored;
        return s;
    }

private:
    PromptConfig cot_config(const Question& q) const {
        PromptConfig cfg;
        cfg.instruction_prefix = prompts::cot_instruction(q.kind);
        cfg.instruction_id = prompts::cot_instruction_id(q.kind);
        cfg.max_new_tokens = opts_.max_new_tokens;
        return cfg;
    }

    PromptConfig sampling_config(const Question& q, std::uint64_t stream_seed) const {
        PromptConfig cfg = cot_config(q);
        cfg.decoding.mode = Decoding::Mode::top_k_sampling;
        cfg.decoding.top_k = opts_.sampling_top_k;
        cfg.decoding.temperature = opts_.temperature;
        cfg.decoding.seed = stream_seed;
        return cfg;
    }

    std::uint64_t stream_seed(const Question& q, int sample, int rollout) const {
        return fnv1a64(q.id + "#" + std::to_string(sample) + "#" + std::to_string(rollout),
                       opts_.seed + kFnvOffset);
    }

    paraphrase::ParaphraseSet paraphrases_for(const Question& q, cache::CachingBackend& qb) {
        {
            std::lock_guard<std::mutex> lock(store_mutex_);
            if (auto it = paraphrase_store_.find(q.id);
                it != paraphrase_store_.end() && it->second.instruction_id == opts_.instruction.id)
                return it->second;
        }
        const int n = q.kind == AnswerKind::multiple_choice ? opts_.n_paraphrases_mc
                                                            : opts_.n_paraphrases;
        auto set = paraphrase::generate_paraphrases(q, n, opts_.instruction, qb);
        std::lock_guard<std::mutex> lock(store_mutex_);
        paraphrase_store_[q.id] = set;
        return set;
    }

    void run_ppcv_once(const Question& q, cache::CachingBackend& qb, RunRecord& r) {
        Stopwatch t1;
        const auto pset = paraphrases_for(q, qb);
        r.timings.t1_paraphrase = t1.seconds();

        Stopwatch t2;
        const auto cfg = cot_config(q);
        const auto trace = qb.generate(render_question(q), cfg);
        r.timings.t2_initial = t2.seconds();
        r.initial_trace_ref = trace_fingerprint(trace);
        if (dir_) dir_->store_trace(trace);
        r.initial_answer = extract_normalized(trace.text, q.kind);

        Stopwatch t3;
        auto report =
            probe::probe_positions(q, trace, pset, cfg, opts_.window, qb, opts_.top_l, opts_.concurrency);
        r.timings.t3_forward = t3.seconds();

        if (report.fallback) {
            verify::FinalAnswer fa;
            fa.question_id = q.id;
            fa.answer = r.initial_answer;
            fa.chosen_k = 0;
            fa.rule = verify::SelectionRule::no_candidate_fallback;
            r.final_answer = fa;
            r.answer = r.initial_answer;
            r.probe_report = std::move(report);
            return;
        }

        Stopwatch t4;
        const auto alts = verify::sample_alternatives(q, trace, report.critical->position,
                                                      opts_.top_k, qb, cfg);
        verify::TraceSink sink;
        if (dir_) sink = [this](const ReasoningTrace& t) { dir_->store_trace(t); };
        auto matrix = verify::rollout_matrix(q, pset, trace, alts, cfg, qb, opts_.lambda,
                                             opts_.concurrency, sink);
        auto fa = verify::select_answer(matrix, r.initial_answer, opts_.weighted);
        r.timings.t4_rollouts = t4.seconds();

        r.answer = fa.answer;
        r.final_answer = std::move(fa);
        r.matrix = std::move(matrix);
        r.probe_report = std::move(report);
    }

    void run_cot_once(const Question& q, cache::CachingBackend& qb, RunRecord& r) {
        Stopwatch t2;
        const auto trace = qb.generate(render_question(q), cot_config(q));
        r.timings.t2_initial = t2.seconds();
        r.initial_trace_ref = trace_fingerprint(trace);
        if (dir_) dir_->store_trace(trace);
        r.initial_answer = extract_normalized(trace.text, q.kind);
        r.answer = r.initial_answer;
    }

    void run_sc_once(const Question& q, cache::CachingBackend& qb, RunRecord& r, int sample) {
        Stopwatch t2;
        std::vector<std::optional<std::string>> answers(static_cast<std::size_t>(opts_.sc_samples));
        parallel_for(answers.size(), opts_.concurrency, [&](std::size_t i) {
            const auto cfg = sampling_config(q, stream_seed(q, sample, static_cast<int>(i)));
            const auto trace = qb.generate(render_question(q), cfg);
            answers[i] = extract_normalized(trace.text, q.kind);
        });
        r.timings.t2_initial = t2.seconds();
        r.answer = majority_vote(answers, q.kind);
    }

    void run_pmv_once(const Question& q, cache::CachingBackend& qb, RunRecord& r, int sample) {
        Stopwatch t1;
        const auto pset = paraphrases_for(q, qb);
        r.timings.t1_paraphrase = t1.seconds();

        Stopwatch t4;
        const std::size_t total = pset.items.size() * static_cast<std::size_t>(opts_.pmv_rollouts);
        std::vector<std::optional<std::string>> answers(total);
        parallel_for(total, opts_.concurrency, [&](std::size_t i) {
            const auto& p = pset.items[i / static_cast<std::size_t>(opts_.pmv_rollouts)];
            const auto cfg = sampling_config(
                q, stream_seed(q, sample, static_cast<int>(i) + (p.index << 16)));
            const auto trace = qb.generate(render_with_stem(q, p.text), cfg);
            answers[i] = extract_normalized(trace.text, q.kind);
        });
        r.timings.t4_rollouts = t4.seconds();
        r.answer = majority_vote(answers, q.kind);
    }

    LmBackend& backend_;
    RunOptions opts_;
    std::shared_ptr<cache::DiskCache> disk_;
    RunDirectory* dir_;
    std::map<std::string, paraphrase::ParaphraseSet> paraphrase_store_;
    std::mutex store_mutex_;
    bool had_failures_ = false;

public:
    /// Pre-seeds the in-memory paraphrase store (from a JSONL store file).
    void preload_paraphrases(std::map<std::string, paraphrase::ParaphraseSet> sets) {
        std::lock_guard<std::mutex> lock(store_mutex_);
        paraphrase_store_ = std::move(sets);
    }
    const std::map<std::string, paraphrase::ParaphraseSet>& paraphrase_store() const {
        return paraphrase_store_;
    }
};

}  // namespace ppcv::harness
