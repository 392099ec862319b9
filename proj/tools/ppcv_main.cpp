// ppcv command-line interface.
//
//   ppcv run        full pipeline or a baseline over a dataset
//   ppcv paraphrase generate and store paraphrase sets
//   ppcv probe      stage 1 only, emitting probe reports as JSONL
//   ppcv ape        optimize the paraphrasing instruction on a dev split
//   ppcv report     recompute metrics from a run directory
//
// Exit codes: 0 success, 1 partial question failures, 2 configuration or
// backend error.

#include "ppcv/config.hpp"
#include "ppcv/prompts.hpp"
#include "ppcv/remote.hpp"
#include "ppcv/runner.hpp"
#include "ppcv/toy_backend.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

namespace {

using namespace ppcv;

struct CliState {
    config::RunConfig cfg;
    std::string config_file;
    std::string instruction_file;
    std::string window_spec;
    bool unweighted = false;
};

void add_common_flags(CLI::App* cmd, CliState& st) {
    cmd->add_option("--config", st.config_file, "TOML config file (flags override file values)");
    cmd->add_option("--backend", st.cfg.backend, "toy | remote");
    cmd->add_option("--toy-world", st.cfg.toy_world, "toy world fixture JSON");
    cmd->add_option("--endpoint", st.cfg.remote.endpoint, "OpenAI-compatible endpoint URL");
    cmd->add_option("--model", st.cfg.remote.model, "remote model id");
    cmd->add_option("--api-key", st.cfg.remote.api_key, "remote API key");
    cmd->add_option("--embed-model", st.cfg.remote.embed_model, "remote embeddings model (opt-in)");
    cmd->add_option("--n-paraphrases", st.cfg.options.n_paraphrases, "paraphrases per math question");
    cmd->add_option("--n-paraphrases-mc", st.cfg.options.n_paraphrases_mc,
                    "paraphrases per multiple-choice question");
    cmd->add_option("--top-k", st.cfg.options.top_k, "alternative tokens at the critical position");
    cmd->add_option("--lambda", st.cfg.options.lambda, "similarity weight temperature");
    cmd->add_option("--probe-window", st.window_spec, "probed fraction of the trace, e.g. 0.0:1.0");
    cmd->add_flag("--unweighted", st.unweighted, "disable the similarity-weighted tiebreak");
    cmd->add_option("--top-l", st.cfg.options.top_l, "logprobs per forced position");
    cmd->add_option("--max-new-tokens", st.cfg.options.max_new_tokens, "generation cap");
    cmd->add_option("--samples", st.cfg.options.sc_samples, "self-consistency rollouts");
    cmd->add_option("--pmv-rollouts", st.cfg.options.pmv_rollouts, "rollouts per paraphrase (pmv)");
    cmd->add_option("--temperature", st.cfg.options.temperature, "sampling temperature for baselines");
    cmd->add_option("--eval-samples", st.cfg.options.eval_samples, "repetitions per question for pass@k");
    cmd->add_option("--concurrency", st.cfg.options.concurrency, "bounded parallel fan-out");
    cmd->add_option("--seed", st.cfg.options.seed, "run seed");
    cmd->add_option("--cache-dir", st.cfg.cache_dir, "content-addressed response cache directory");
    cmd->add_option("--paraphrase-store", st.cfg.paraphrase_store, "paraphrase store JSONL");
    cmd->add_option("--instruction-file", st.instruction_file, "paraphrasing instruction text file");
}

void finalize(CliState& st) {
    if (!st.config_file.empty()) {
        config::RunConfig file_cfg;
        config::apply_file(file_cfg, st.config_file);
        // file first, then re-apply CLI values by merging: the CLI already
        // wrote into st.cfg, so only fill fields that kept their defaults
        config::RunConfig defaults;
        auto pick = [](auto& target, const auto& cli, const auto& file, const auto& def) {
            target = (cli == def) ? file : cli;
        };
        config::RunConfig merged = file_cfg;
        pick(merged.backend, st.cfg.backend, file_cfg.backend, defaults.backend);
        pick(merged.toy_world, st.cfg.toy_world, file_cfg.toy_world, defaults.toy_world);
        pick(merged.cache_dir, st.cfg.cache_dir, file_cfg.cache_dir, defaults.cache_dir);
        pick(merged.dataset, st.cfg.dataset, file_cfg.dataset, defaults.dataset);
        pick(merged.mode, st.cfg.mode, file_cfg.mode, defaults.mode);
        pick(merged.out_dir, st.cfg.out_dir, file_cfg.out_dir, defaults.out_dir);
        pick(merged.paraphrase_store, st.cfg.paraphrase_store, file_cfg.paraphrase_store,
             defaults.paraphrase_store);
        pick(merged.remote.endpoint, st.cfg.remote.endpoint, file_cfg.remote.endpoint,
             defaults.remote.endpoint);
        pick(merged.remote.model, st.cfg.remote.model, file_cfg.remote.model, defaults.remote.model);
        pick(merged.remote.api_key, st.cfg.remote.api_key, file_cfg.remote.api_key,
             defaults.remote.api_key);
        pick(merged.remote.embed_model, st.cfg.remote.embed_model, file_cfg.remote.embed_model,
             defaults.remote.embed_model);
        pick(merged.options.n_paraphrases, st.cfg.options.n_paraphrases,
             file_cfg.options.n_paraphrases, defaults.options.n_paraphrases);
        pick(merged.options.n_paraphrases_mc, st.cfg.options.n_paraphrases_mc,
             file_cfg.options.n_paraphrases_mc, defaults.options.n_paraphrases_mc);
        pick(merged.options.top_k, st.cfg.options.top_k, file_cfg.options.top_k,
             defaults.options.top_k);
        pick(merged.options.lambda, st.cfg.options.lambda, file_cfg.options.lambda,
             defaults.options.lambda);
        pick(merged.options.top_l, st.cfg.options.top_l, file_cfg.options.top_l,
             defaults.options.top_l);
        pick(merged.options.max_new_tokens, st.cfg.options.max_new_tokens,
             file_cfg.options.max_new_tokens, defaults.options.max_new_tokens);
        pick(merged.options.sc_samples, st.cfg.options.sc_samples, file_cfg.options.sc_samples,
             defaults.options.sc_samples);
        pick(merged.options.pmv_rollouts, st.cfg.options.pmv_rollouts,
             file_cfg.options.pmv_rollouts, defaults.options.pmv_rollouts);
        pick(merged.options.temperature, st.cfg.options.temperature, file_cfg.options.temperature,
             defaults.options.temperature);
        pick(merged.options.eval_samples, st.cfg.options.eval_samples,
             file_cfg.options.eval_samples, defaults.options.eval_samples);
        pick(merged.options.concurrency, st.cfg.options.concurrency, file_cfg.options.concurrency,
             defaults.options.concurrency);
        pick(merged.options.seed, st.cfg.options.seed, file_cfg.options.seed,
             defaults.options.seed);
        pick(merged.options.weighted, st.cfg.options.weighted, file_cfg.options.weighted,
             defaults.options.weighted);
        merged.options.window = st.window_spec.empty() ? file_cfg.options.window
                                                       : config::parse_window(st.window_spec);
        merged.options.limit = st.cfg.options.limit ? st.cfg.options.limit : file_cfg.options.limit;
        st.cfg = merged;
    } else if (!st.window_spec.empty()) {
        st.cfg.options.window = config::parse_window(st.window_spec);
    }
    if (st.unweighted) st.cfg.options.weighted = false;
    if (!st.instruction_file.empty()) {
        std::ifstream in(st.instruction_file);
        if (!in) throw ConfigError("cannot open instruction file: " + st.instruction_file);
        std::stringstream ss;
        ss << in.rdbuf();
        std::string text = ss.str();
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        st.cfg.options.instruction = paraphrase::ParaphraseInstruction::from_text(text);
    }
    config::validate(st.cfg);
}

std::unique_ptr<LmBackend> make_backend(const config::RunConfig& cfg) {
    if (cfg.backend == "toy") {
        if (cfg.toy_world.empty())
            throw ConfigError("toy backend requires --toy-world (generate one with toygen)");
        return std::make_unique<toy::ToyBackend>(toy::load_world(cfg.toy_world));
    }
    return std::make_unique<remote::RemoteBackend>(cfg.remote);
}

std::shared_ptr<cache::DiskCache> make_cache(const config::RunConfig& cfg) {
    if (cfg.cache_dir.empty()) return nullptr;
    return std::make_shared<cache::DiskCache>(cfg.cache_dir);
}

harness::QuestionStats stats_from_json(const nlohmann::json& j) {
    harness::QuestionStats s;
    s.question_id = j.at("question_id").get<std::string>();
    s.n_samples = j.value("n_samples", 1);
    s.c_correct = j.value("c_correct", 0);
    s.correct = j.value("correct", false);
    if (j.contains("timings")) j.at("timings").get_to(s.timings);
    s.tokens_generated = j.value("tokens_generated", std::uint64_t{0});
    if (j.contains("probe_report")) {
        s.fallback = j.at("probe_report").value("fallback", false);
        s.any_floored = j.at("probe_report").value("any_floored", false);
    }
    return s;
}

int cmd_run(CliState& st) {
    finalize(st);
    if (st.cfg.dataset.empty()) throw ConfigError("run requires --dataset");
    if (st.cfg.out_dir.empty()) throw ConfigError("run requires --out");
    const auto dataset = harness::load_dataset(st.cfg.dataset);
    auto backend = make_backend(st.cfg);
    auto disk = make_cache(st.cfg);
    const auto mode = harness::run_mode_from_string(st.cfg.mode);

    nlohmann::json manifest;
    manifest["backend"] = backend->identity().cache_key_part();
    manifest["seed"] = st.cfg.options.seed;
    manifest["mode"] = st.cfg.mode;
    manifest["config"] = config::snapshot(st.cfg);
    harness::RunDirectory dir(st.cfg.out_dir, manifest);

    harness::Runner runner(*backend, st.cfg.options, disk, &dir);
    if (!st.cfg.paraphrase_store.empty())
        runner.preload_paraphrases(paraphrase::load_store(st.cfg.paraphrase_store));
    const auto records = runner.run(mode, dataset);
    if (!st.cfg.paraphrase_store.empty())
        paraphrase::save_store(runner.paraphrase_store(), st.cfg.paraphrase_store);

    std::vector<harness::QuestionStats> stats;
    for (const auto& r : records) stats.push_back(harness::Runner::stats_of(r));
    if (!stats.empty()) {
        const auto report = harness::emit_report(st.cfg.mode, stats,
                                                 (dir.path() / "report.json").string());
        std::cout << harness::report_table(report);
    }
    std::cout << "records: " << records.size() << " -> " << (dir.path() / "records.jsonl") << "\n";
    return runner.had_failures() ? 1 : 0;
}

int cmd_paraphrase(CliState& st, const std::string& out_path) {
    finalize(st);
    if (st.cfg.dataset.empty()) throw ConfigError("paraphrase requires --dataset");
    const auto dataset = harness::load_dataset(st.cfg.dataset);
    auto backend = make_backend(st.cfg);
    std::map<std::string, paraphrase::ParaphraseSet> sets =
        out_path.empty() ? std::map<std::string, paraphrase::ParaphraseSet>{}
                         : paraphrase::load_store(out_path);
    int failures = 0;
    for (const auto& q : dataset) {
        if (sets.count(q.id) && sets[q.id].instruction_id == st.cfg.options.instruction.id) continue;
        const int n = q.kind == AnswerKind::multiple_choice ? st.cfg.options.n_paraphrases_mc
                                                            : st.cfg.options.n_paraphrases;
        try {
            sets[q.id] = paraphrase::generate_paraphrases(q, n, st.cfg.options.instruction, *backend);
        } catch (const std::exception& e) {
            std::cerr << "paraphrase failed for " << q.id << ": " << e.what() << "\n";
            ++failures;
        }
    }
    paraphrase::save_store(sets, out_path);
    std::cout << "wrote " << sets.size() << " paraphrase sets to " << out_path << "\n";
    return failures > 0 ? 1 : 0;
}

int cmd_probe(CliState& st, const std::string& out_path) {
    finalize(st);
    if (st.cfg.dataset.empty()) throw ConfigError("probe requires --dataset");
    const auto dataset = harness::load_dataset(st.cfg.dataset);
    auto backend = make_backend(st.cfg);
    auto disk = make_cache(st.cfg);
    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot write " + out_path);
    int failures = 0;
    for (const auto& q : dataset) {
        try {
            cache::CachingBackend qb(*backend, disk);
            PromptConfig cfg;
            cfg.instruction_prefix = prompts::cot_instruction(q.kind);
            cfg.instruction_id = prompts::cot_instruction_id(q.kind);
            cfg.max_new_tokens = st.cfg.options.max_new_tokens;
            const int n = q.kind == AnswerKind::multiple_choice ? st.cfg.options.n_paraphrases_mc
                                                                : st.cfg.options.n_paraphrases;
            const auto pset =
                paraphrase::generate_paraphrases(q, n, st.cfg.options.instruction, qb);
            const auto trace = qb.generate(render_question(q), cfg);
            const auto report =
                probe::probe_positions(q, trace, pset, cfg, st.cfg.options.window, qb,
                                       st.cfg.options.top_l, st.cfg.options.concurrency);
            out << nlohmann::json(report).dump() << "\n";
        } catch (const std::exception& e) {
            std::cerr << "probe failed for " << q.id << ": " << e.what() << "\n";
            ++failures;
        }
    }
    std::cout << "probe reports -> " << out_path << "\n";
    return failures > 0 ? 1 : 0;
}

int cmd_ape(CliState& st, const std::string& dev_split, int rounds, int candidates,
            const std::string& seed_file, const std::string& out_path) {
    finalize(st);
    const auto dev = harness::load_dataset(dev_split);
    auto backend = make_backend(st.cfg);
    paraphrase::ParaphraseInstruction seed = st.cfg.options.instruction;
    if (!seed_file.empty()) {
        std::ifstream in(seed_file);
        if (!in) throw ConfigError("cannot open seed instruction file: " + seed_file);
        std::stringstream ss;
        ss << in.rdbuf();
        std::string text = ss.str();
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        seed = paraphrase::ParaphraseInstruction::from_text(text);
    }
    paraphrase::ApeOptions opts;
    opts.n_paraphrases = st.cfg.options.n_paraphrases;
    opts.max_new_tokens = st.cfg.options.max_new_tokens;
    opts.concurrency = st.cfg.options.concurrency;
    const auto best = paraphrase::ape_optimize(seed, dev, rounds, candidates, *backend, opts);
    nlohmann::json j;
    j["id"] = best.id;
    j["text"] = best.text;
    j["fitness"] = best.fitness ? nlohmann::json(*best.fitness) : nlohmann::json(nullptr);
    j["generation"] = best.generation;
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream(out_path) << j.dump(2) << "\n";
        std::cout << "instruction -> " << out_path << "\n";
    }
    return 0;
}

int cmd_report(const std::string& run_dir) {
    const auto records_path = std::filesystem::path(run_dir) / "records.jsonl";
    std::ifstream in(records_path);
    if (!in) throw ConfigError("no records.jsonl under " + run_dir);
    std::string mode = "unknown";
    {
        std::ifstream m(std::filesystem::path(run_dir) / "manifest.json");
        if (m) {
            nlohmann::json mj;
            m >> mj;
            mode = mj.value("mode", mode);
        }
    }
    std::vector<harness::QuestionStats> stats;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        stats.push_back(stats_from_json(nlohmann::json::parse(line)));
    }
    const auto report = harness::emit_report(
        mode, stats, (std::filesystem::path(run_dir) / "report.json").string());
    std::cout << harness::report_table(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"paraphrastic probing and consistency verification pipeline"};
    app.require_subcommand(1);

    CliState st;
    std::string out_path, dev_split, seed_file, run_dir;
    int rounds = 2, candidates = 4, limit = 0;

    auto* run = app.add_subcommand("run", "run a mode over a dataset");
    add_common_flags(run, st);
    run->add_option("--dataset", st.cfg.dataset, "dataset JSONL")->required();
    run->add_option("--mode", st.cfg.mode, "ppcv | cot | self-consistency | pmv");
    run->add_option("--out", st.cfg.out_dir, "run directory")->required();
    run->add_option("--limit", limit, "stop after N newly processed questions");

    auto* par = app.add_subcommand("paraphrase", "generate paraphrase sets into a store");
    add_common_flags(par, st);
    par->add_option("--dataset", st.cfg.dataset, "dataset JSONL")->required();
    par->add_option("--out", out_path, "paraphrase store JSONL")->required();

    auto* prb = app.add_subcommand("probe", "emit probe reports for a dataset");
    add_common_flags(prb, st);
    prb->add_option("--dataset", st.cfg.dataset, "dataset JSONL")->required();
    prb->add_option("--out", out_path, "probe report JSONL")->required();

    auto* ape = app.add_subcommand("ape", "optimize the paraphrasing instruction");
    add_common_flags(ape, st);
    ape->add_option("--dev-split", dev_split, "dev dataset JSONL")->required();
    ape->add_option("--rounds", rounds, "optimization rounds");
    ape->add_option("--candidates-per-round", candidates, "candidate instructions per round");
    ape->add_option("--seed-instruction-file", seed_file, "seed instruction text file");
    ape->add_option("--out", out_path, "write the winning instruction JSON here");

    auto* rep = app.add_subcommand("report", "recompute metrics from a run directory");
    rep->add_option("--run", run_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (limit > 0) st.cfg.options.limit = limit;
            return cmd_run(st);
        }
        if (par->parsed()) return cmd_paraphrase(st, out_path);
        if (prb->parsed()) return cmd_probe(st, out_path);
        if (ape->parsed()) return cmd_ape(st, dev_split, rounds, candidates, seed_file, out_path);
        if (rep->parsed()) return cmd_report(run_dir);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
