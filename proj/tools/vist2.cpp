// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0
//
// vist2 gen-data|train|eval-ocr|generate|bench --config <path> [...]
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vist/config.hpp"
#include "vist/corpus.hpp"
#include "vist/generation.hpp"
#include "vist/trainer.hpp"

namespace fs = std::filesystem;
using namespace vist;

namespace {

void write_text_file(const std::string& path, const std::string& text) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << text;
}

// Echo the effective config next to every artifact set.
void echo_config(const ExperimentConfig& cfg, const std::string& out_dir) {
    write_text_file(out_dir + "/effective_config.json", cfg.canonical_json() + "\n");
}

std::vector<Document> train_docs(const std::vector<Document>& docs, int eval_docs) {
    if (static_cast<int>(docs.size()) <= eval_docs)
        throw ConfigError("corpus too small for the held-out split");
    return {docs.begin() + eval_docs, docs.end()};
}

std::vector<Document> heldout_docs(const std::vector<Document>& docs, int eval_docs) {
    return {docs.begin(), docs.begin() + std::min<long>(static_cast<long>(docs.size()), eval_docs)};
}

int cmd_gen_data(const ExperimentConfig& cfg) {
    const std::string out = output_dir(cfg);
    fs::create_directories(out + "/data");
    echo_config(cfg, out);
    const Vocab vocab(cfg.system.vocab_size);
    const auto docs = gen_corpus(cfg.data, vocab);
    write_corpus(docs, vocab, out + "/data/corpus.txt");
    write_manifest(cfg.data, docs, out + "/data/corpus.txt", out + "/data/manifest.json",
                   cfg.checksum());
    if (cfg.data.generator == SyntheticCorpusSpec::Generator::kTemplate &&
        cfg.data.grammar_id == 1) {
        const auto pairs = gen_sft_pairs(cfg.data, vocab, cfg.data.doc_count);
        std::vector<SampleRecord> records;
        for (const auto& p : pairs) {
            SampleRecord r;
            r.task = "sft";
            r.mode = "standard";
            r.query = p.query;
            r.response = p.response;
            records.push_back(std::move(r));
        }
        write_samples(out + "/data/sft_samples.jsonl", records);
    }
    std::cout << "wrote " << docs.size() << " documents to " << out << "/data\n";
    return 0;
}

template <class S>
int cmd_train(const ExperimentConfig& cfg, const std::string& stage_arg,
              const std::string& init_from, const std::string& resume_from) {
    const auto it = cfg.stages.find(stage_arg);
    if (it == cfg.stages.end())
        throw ConfigError("config has no stage '" + stage_arg + "'");
    const StageConfig& stage_cfg = it->second;
    const std::string out = output_dir(cfg);
    echo_config(cfg, out);

    Pipeline<S> pipeline(cfg.system, cfg.init_seed);
    AdamW<S> optimizer(pipeline.params(), stage_cfg.freeze, stage_cfg.weight_decay);

    StageRunOptions opts;
    opts.metrics_path = out + "/logs/train_" + stage_arg + ".log";
    opts.checkpoint_dir = out + "/checkpoints";
    opts.config_checksum = cfg.checksum();

    if (!init_from.empty()) {
        load_checkpoint<S>(init_from, pipeline.params(), nullptr);
        std::cerr << "initialized parameters from " << init_from << "\n";
    }
    if (!resume_from.empty()) {
        const CheckpointMeta meta =
            load_checkpoint<S>(resume_from, pipeline.params(), &optimizer);
        if (meta.stage != stage_cfg.stage)
            throw ConfigError("checkpoint stage does not match --stage");
        opts.start_step = meta.step;
        opts.resume_rng = meta.rng_state;
        std::cerr << "resuming " << stage_arg << " at step " << meta.step << "\n";
    }

    const Vocab vocab(cfg.system.vocab_size);
    const auto docs = gen_corpus(cfg.data, vocab);
    const auto train_split = train_docs(docs, cfg.eval_docs);
    std::vector<SftSample> pairs;
    if (stage_cfg.stage == Stage::kSft) pairs = gen_sft_pairs(cfg.data, vocab, 256);

    BatchProvider<S> provider = [&](std::uint64_t batch_seed, double progress) {
        switch (stage_cfg.stage) {
            case Stage::kMtOcr:
                return mt_ocr_batch(pipeline, train_split, cfg.curriculum,
                                    stage_cfg.batch_size, batch_seed, progress);
            case Stage::kOlm:
                return olm_batch(pipeline, train_split, cfg.olm_chunks_per_sample,
                                 stage_cfg.batch_size, batch_seed);
            case Stage::kSft:
                return sft_batch(pipeline, pairs, stage_cfg.batch_size, batch_seed);
        }
        throw ConfigError("unknown stage");
    };

    const auto result = run_stage(pipeline, stage_cfg, provider, optimizer, opts);
    const double tok_per_sec =
        result.seconds > 0 ? static_cast<double>(result.tokens_processed) / result.seconds : 0;
    std::cerr << "stage " << stage_arg << ": " << result.losses.size() << " steps, final loss "
              << (result.losses.empty() ? 0.0 : result.losses.back()) << ", "
              << static_cast<long>(tok_per_sec) << " tokens/sec\n";
    std::cout << "checkpoint: " << opts.checkpoint_dir << "/stage_" << stage_arg << "_step"
              << stage_cfg.max_steps << ".ckpt\n";
    return 0;
}

struct OcrEval {
    double teacher_forced = 0;
    double greedy_exact = 0;
    double edit_similarity = 0;
    long chunks = 0;
};

int edit_distance(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                               prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// Teacher-forced and free-running recovery of held-out chunks from their
// rendered pages.
template <class S>
OcrEval eval_ocr(const Pipeline<S>& pipeline, const std::vector<Document>& docs,
                 std::uint64_t seed, int max_chunks) {
    const SystemConfig& sys = pipeline.config();
    const int k = sys.chunking.tokens_per_chunk;
    const int beta = sys.chunking.visual_tokens;
    Rng rng(seed);
    OcrEval eval;
    long token_hits = 0, token_total = 0, greedy_hits = 0;
    double edit_sum = 0;
    for (int c = 0; c < max_chunks; ++c) {
        const Document& doc = docs[static_cast<std::size_t>(rng.below(docs.size()))];
        if (static_cast<int>(doc.size()) < k) continue;
        const int start = static_cast<int>(rng.below(doc.size() - k + 1));
        TextChunk chunk{0, {doc.begin() + start, doc.begin() + start + k}};

        // Teacher-forced accuracy over the flipped single-image layout.
        const auto sample = build_mt_ocr_sample(pipeline, {chunk});
        DecoderTape<S> tape;
        const MatX<S> logits = forward(sample.input, pipeline.params().llm, sys.model, tape);
        for (const ScoredTarget& st : sample.scored) {
            Index arg = 0;
            logits.row(st.row).maxCoeff(&arg);
            token_hits += arg == st.target;
            ++token_total;
        }

        // Free-running greedy decode conditioned on the block only.
        EvictableKVCache<S> cache(sys.model.layer_count, sys.model.width);
        const VisualTokenBlock<S> block = pipeline.compress_chunk(chunk);
        StepInput<S> binput;
        for (int j = 0; j < beta; ++j) {
            binput.metas.push_back({Modality::kVisual, 0, j});
            binput.positions.push_back(j);
        }
        binput.visual_rows = block.embeddings;
        MatX<S> out = step(cache, binput, pipeline.params().llm, sys.model,
                           AttentionVariant::kOcr);
        std::vector<TokenId> decoded;
        VecX<S> row = out.row(out.rows() - 1).transpose();
        for (int j = 0; j < k; ++j) {
            const TokenId tok = sample_greedy(row);
            decoded.push_back(tok);
            StepInput<S> tinput;
            tinput.metas.push_back({Modality::kText, 0, j});
            tinput.positions.push_back(j);
            tinput.text_ids.push_back(tok);
            tinput.visual_rows.resize(0, sys.model.width);
            out = step(cache, tinput, pipeline.params().llm, sys.model, AttentionVariant::kOcr);
            row = out.row(out.rows() - 1).transpose();
        }
        greedy_hits += decoded == chunk.token_ids;
        const int dist = edit_distance(decoded, chunk.token_ids);
        edit_sum += 1.0 - static_cast<double>(dist) / k;
        ++eval.chunks;
    }
    if (token_total > 0) eval.teacher_forced = static_cast<double>(token_hits) / token_total;
    if (eval.chunks > 0) {
        eval.greedy_exact = static_cast<double>(greedy_hits) / eval.chunks;
        eval.edit_similarity = edit_sum / eval.chunks;
    }
    return eval;
}

template <class S>
int cmd_eval_ocr(const ExperimentConfig& cfg, const std::string& checkpoint, int max_chunks) {
    const std::string out = output_dir(cfg);
    echo_config(cfg, out);
    Pipeline<S> pipeline(cfg.system, cfg.init_seed);
    if (!checkpoint.empty()) load_checkpoint<S>(checkpoint, pipeline.params(), nullptr);
    const Vocab vocab(cfg.system.vocab_size);
    const auto docs = gen_corpus(cfg.data, vocab);
    const auto held = heldout_docs(docs, cfg.eval_docs);
    const auto eval = eval_ocr(pipeline, held, cfg.eval_seed, max_chunks);

    char line[256];
    std::snprintf(line, sizeof(line),
                  "r=%.2f teacher_forced=%.4f greedy_exact=%.4f edit_similarity=%.4f "
                  "chunks=%ld config=%s\n",
                  cfg.system.chunking.ratio(), eval.teacher_forced, eval.greedy_exact,
                  eval.edit_similarity, eval.chunks, hex64(cfg.checksum()).c_str());
    fs::create_directories(out + "/reports");
    std::ofstream report(out + "/reports/ocr_eval.txt", std::ios::app);
    report << line;
    std::cout << line;
    return 0;
}

template <class S>
int cmd_generate(const ExperimentConfig& cfg, const std::string& checkpoint,
                 const std::string& prompt_text, const std::string& trace_path,
                 int max_new_override, bool no_evict) {
    Pipeline<S> pipeline(cfg.system, cfg.init_seed);
    if (!checkpoint.empty()) load_checkpoint<S>(checkpoint, pipeline.params(), nullptr);
    const Vocab& vocab = pipeline.vocab();
    GenerationConfig gen = cfg.generation;
    if (max_new_override > 0) gen.max_new_tokens = max_new_override;
    if (no_evict) gen.evict = false;
    const std::vector<TokenId> prompt = vocab.encode_text(prompt_text);
    const GenerationTrace trace = generate(pipeline, prompt, gen);
    std::cout << vocab.to_text(trace.tokens) << "\n";
    std::cerr << "generated " << trace.tokens.size() << " tokens, " << trace.events.size()
              << " compression events, prefill " << trace.prompt_entries << " entries, "
              << trace.prefill_seconds << "s prefill, " << trace.decode_seconds << "s decode\n";
    if (!trace_path.empty())
        write_text_file(trace_path, render_trace(trace, vocab, cfg.checksum(), gen.seed));
    return 0;
}

template <class S>
int cmd_bench(const ExperimentConfig& cfg, bool measure) {
    const std::string out = output_dir(cfg);
    echo_config(cfg, out);
    const auto reports = compare_regimes(cfg.bench);
    const std::string text = render_report(reports, cfg.bench, cfg.checksum());
    write_text_file(out + "/reports/bench.txt", text);

    std::printf("%-6s %14s %16s %14s %10s %10s %10s\n", "regime", "prefill_tok", "decode_pairs",
                "kv_entries", "kv_red", "pair_red", "ftl_ratio");
    for (const auto& r : reports)
        std::printf("%-6s %14ld %16lld %14ld %9.1f%% %9.1f%% %10.2f\n", regime_name(r.regime),
                    r.prefill_tokens, r.decode_pairs, r.kv_entries, 100 * r.kv_reduction,
                    100 * r.decode_pair_reduction, r.prefill_token_ratio);

    if (measure) {
        Pipeline<S> pipeline(cfg.system, cfg.init_seed);
        const Vocab vocab(cfg.system.vocab_size);
        Rng rng(cfg.eval_seed);
        std::vector<TokenId> prompt;
        const long want = std::min<long>(cfg.bench.prompt_tokens, 8192);
        for (long i = 0; i < want; ++i)
            prompt.push_back(
                static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab.content_size()))));
        std::printf("\nfirst-token wall times (informational), prompt of %ld tokens:\n", want);
        for (const auto& m : measure_first_token(pipeline, prompt))
            std::printf("  %-5s prefill_tokens=%-8ld %.3fs\n", m.regime.c_str(),
                        m.prefill_tokens, m.seconds);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vist2: interleaved optical context compression experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed_override = 0;
    app.add_option("--config", config_path, "experiment config file")->required();
    auto* seed_opt = app.add_option("--seed", seed_override, "override data/init seed");

    auto* gen_data = app.add_subcommand("gen-data", "generate the synthetic corpus");

    auto* train = app.add_subcommand("train", "run one training stage");
    std::string stage_arg, init_from, resume_from;
    train->add_option("--stage", stage_arg, "mt_ocr | olm | sft")->required();
    train->add_option("--init-from", init_from, "checkpoint to initialize parameters from");
    train->add_option("--resume", resume_from, "checkpoint to resume the stage from");

    auto* eval_cmd = app.add_subcommand("eval-ocr", "evaluate chunk recovery");
    std::string checkpoint;
    int max_chunks = 200;
    eval_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint (default: random init)");
    eval_cmd->add_option("--chunks", max_chunks, "held-out chunks to evaluate");

    auto* generate_cmd = app.add_subcommand("generate", "chunk-wise compressed generation");
    std::string prompt_text, prompt_file, trace_path, gen_checkpoint;
    int max_new = 0;
    bool no_evict = false;
    generate_cmd->add_option("--checkpoint", gen_checkpoint, "trained checkpoint");
    generate_cmd->add_option("--prompt", prompt_text, "prompt text");
    generate_cmd->add_option("--prompt-file", prompt_file, "prompt text file");
    generate_cmd->add_option("--trace", trace_path, "write the generation trace here");
    generate_cmd->add_option("--max-new", max_new, "override max_new_tokens");
    generate_cmd->add_flag("--no-evict", no_evict, "keep masked text entries in the cache");

    auto* bench_cmd = app.add_subcommand("bench", "cost accounting across regimes");
    bool measure = false;
    bench_cmd->add_flag("--measure", measure, "also time prefill with the actual model");

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = load_config(config_path);
        if (seed_opt->count() > 0) {
            cfg.data.seed = seed_override;
            cfg.init_seed = seed_override;
        }
        auto dispatch = [&](auto scalar) -> int {
            using S = decltype(scalar);
            if (gen_data->parsed()) return cmd_gen_data(cfg);
            if (train->parsed()) return cmd_train<S>(cfg, stage_arg, init_from, resume_from);
            if (eval_cmd->parsed()) return cmd_eval_ocr<S>(cfg, checkpoint, max_chunks);
            if (generate_cmd->parsed()) {
                std::string prompt = prompt_text;
                if (!prompt_file.empty()) {
                    std::ifstream f(prompt_file);
                    if (!f) throw ConfigError("cannot read prompt file " + prompt_file);
                    std::getline(f, prompt);
                }
                if (prompt.empty()) throw ConfigError("empty prompt");
                return cmd_generate<S>(cfg, gen_checkpoint, prompt, trace_path, max_new,
                                       no_evict);
            }
            if (bench_cmd->parsed()) return cmd_bench<S>(cfg, measure);
            throw ConfigError("no subcommand");
        };
        return cfg.precision == "f64" ? dispatch(double{}) : dispatch(float{});
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
