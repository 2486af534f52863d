// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Chunk-wise generation: the prompt is compressed per the tail rule, tokens
// decode incrementally, and every completed K-token chunk of output is
// re-rendered from the emitted text, encoded, appended as a visual block at
// the aliased base position, and its text KV evicted.

#pragma once

#include <algorithm>
#include <chrono>

#include "vist/effmeter.hpp"
#include "vist/objectives.hpp"

namespace vist {

struct GenerationConfig {
    int max_new_tokens = 64;
    enum class Decoding : std::uint8_t { kGreedy, kTopK } decoding = Decoding::kGreedy;
    int top_k = 8;
    std::uint64_t seed = 0;
    std::vector<TokenId> stop_symbols;
    bool compress_prompt = true;   // false: raw prompt prefill (NONE regime)
    bool compress_output = true;   // false: raw decoding (PCC regime)
    bool evict = true;             // false: keep masked text entries (debug)

    void validate() const {
        if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
        if (decoding == Decoding::kTopK && top_k < 1) throw ConfigError("top_k must be >= 1");
    }
};

struct CompressionEvent {
    int chunk_index = 0;
    long base_position = 0;
    long after_token = 0;  // number of emitted tokens when the event fired
};

struct GenerationTrace {
    std::vector<TokenId> tokens;
    std::vector<int> cache_entries;  // per emitted token, after any compression
    std::vector<CompressionEvent> events;
    long prompt_entries = 0;
    int prompt_chunks = 0;
    double prefill_seconds = 0.0;  // informational; never written to trace files
    double decode_seconds = 0.0;
};

template <class S>
struct PrefillResult {
    long entries = 0;
    int next_chunk = 0;
    long next_base = 0;
    VecX<S> last_logits;
};

// Renders, encodes and prefills the prompt's full chunks (and a long
// residual) as visual blocks; a short residual stays raw. Prefill token
// count is beta per block plus the raw tail length.
template <class S>
PrefillResult<S> compress_prompt(const Pipeline<S>& pipeline, const std::vector<TokenId>& prompt,
                                 EvictableKVCache<S>& cache) {
    if (prompt.empty()) throw ConfigError("empty prompt");
    const ChunkingConfig& chunking = pipeline.config().chunking;
    const int beta = chunking.visual_tokens;
    const auto chunks = chunk_text(prompt, chunking);

    StepInput<S> input;
    std::vector<MatX<S>> visual;
    long base = 0;
    for (const TextChunk& c : chunks) {
        const bool full = c.length() == chunking.tokens_per_chunk;
        const TailRule rule = tail_rule(c.length(), beta);
        if (full || rule.action == TailAction::kCompress) {
            const VisualTokenBlock<S> block = pipeline.compress_chunk(c);
            visual.push_back(block.embeddings);
            for (int j = 0; j < beta; ++j) {
                input.metas.push_back({Modality::kVisual, c.chunk_index, j});
                input.positions.push_back(base + j);
            }
            base += beta;
        } else {
            for (int j = 0; j < c.length(); ++j) {
                input.metas.push_back({Modality::kText, c.chunk_index, j});
                input.positions.push_back(base + j);
                input.text_ids.push_back(c.token_ids[static_cast<std::size_t>(j)]);
            }
            base += c.length();
        }
    }
    Index rows = 0;
    for (const auto& v : visual) rows += v.rows();
    input.visual_rows.resize(rows, pipeline.config().model.width);
    Index at = 0;
    for (const auto& v : visual) {
        input.visual_rows.middleRows(at, v.rows()) = v;
        at += v.rows();
    }
    const MatX<S> logits = step(cache, input, pipeline.params().llm, pipeline.config().model);
    PrefillResult<S> result;
    result.entries = cache.entry_count();
    result.next_chunk = static_cast<int>(chunks.size());
    result.next_base = base;
    result.last_logits = logits.row(logits.rows() - 1).transpose();
    return result;
}

// Raw prefill (no compression): the whole prompt is one uncompressed chunk.
template <class S>
PrefillResult<S> raw_prompt(const Pipeline<S>& pipeline, const std::vector<TokenId>& prompt,
                            EvictableKVCache<S>& cache) {
    if (prompt.empty()) throw ConfigError("empty prompt");
    StepInput<S> input;
    for (std::size_t j = 0; j < prompt.size(); ++j) {
        input.metas.push_back({Modality::kText, 0, static_cast<int>(j)});
        input.positions.push_back(static_cast<long>(j));
        input.text_ids.push_back(prompt[j]);
    }
    input.visual_rows.resize(0, pipeline.config().model.width);
    const MatX<S> logits = step(cache, input, pipeline.params().llm, pipeline.config().model);
    PrefillResult<S> result;
    result.entries = cache.entry_count();
    result.next_chunk = 1;
    result.next_base = static_cast<long>(prompt.size());
    result.last_logits = logits.row(logits.rows() - 1).transpose();
    return result;
}

// Greedy decoding; ties break to the lowest token id.
template <class S>
TokenId sample_greedy(const VecX<S>& logits) {
    Index best = 0;
    for (Index i = 1; i < logits.size(); ++i)
        if (logits(i) > logits(best)) best = i;
    return static_cast<TokenId>(best);
}

template <class S>
TokenId sample_top_k(const VecX<S>& logits, int k, Rng& rng) {
    std::vector<int> order(static_cast<std::size_t>(logits.size()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&logits](int a, int b) {
        if (logits(a) != logits(b)) return logits(a) > logits(b);
        return a < b;
    });
    const int kk = std::min<int>(k, static_cast<int>(order.size()));
    double z = 0.0;
    std::vector<double> p(static_cast<std::size_t>(kk));
    const double mx = static_cast<double>(logits(order[0]));
    for (int i = 0; i < kk; ++i) {
        p[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(logits(order[static_cast<std::size_t>(i)])) - mx);
        z += p[static_cast<std::size_t>(i)];
    }
    double u = rng.uniform() * z;
    for (int i = 0; i < kk; ++i) {
        u -= p[static_cast<std::size_t>(i)];
        if (u < 0) return static_cast<TokenId>(order[static_cast<std::size_t>(i)]);
    }
    return static_cast<TokenId>(order[static_cast<std::size_t>(kk - 1)]);
}

template <class S>
GenerationTrace generate(const Pipeline<S>& pipeline, const std::vector<TokenId>& prompt,
                         const GenerationConfig& cfg) {
    cfg.validate();
    const SystemConfig& sys = pipeline.config();
    const int k = sys.chunking.tokens_per_chunk;
    const int beta = sys.chunking.visual_tokens;
    EvictableKVCache<S> cache(sys.model.layer_count, sys.model.width);
    Rng rng(cfg.seed);
    GenerationTrace trace;

    const auto t0 = std::chrono::steady_clock::now();
    PrefillResult<S> state = cfg.compress_prompt ? compress_prompt(pipeline, prompt, cache)
                                                 : raw_prompt(pipeline, prompt, cache);
    const auto t1 = std::chrono::steady_clock::now();
    trace.prefill_seconds = std::chrono::duration<double>(t1 - t0).count();
    trace.prompt_entries = state.entries;
    trace.prompt_chunks = state.next_chunk;

    int chunk = state.next_chunk;
    long base = state.next_base;
    std::vector<TokenId> buffer;
    VecX<S> logits = state.last_logits;

    for (int t = 0; t < cfg.max_new_tokens; ++t) {
        const TokenId token = cfg.decoding == GenerationConfig::Decoding::kGreedy
                                  ? sample_greedy(logits)
                                  : sample_top_k(logits, cfg.top_k, rng);
        trace.tokens.push_back(token);
        StepInput<S> input;
        input.metas.push_back({Modality::kText, chunk, static_cast<int>(buffer.size())});
        input.positions.push_back(base + static_cast<long>(buffer.size()));
        input.text_ids.push_back(token);
        input.visual_rows.resize(0, sys.model.width);
        const MatX<S> out = step(cache, input, pipeline.params().llm, sys.model);
        logits = out.row(out.rows() - 1).transpose();
        buffer.push_back(token);

        if (static_cast<int>(buffer.size()) == k) {
            if (cfg.compress_output) {
                TextChunk completed{chunk, buffer};
                VisualTokenBlock<S> block;
                try {
                    block = pipeline.compress_chunk(completed);
                } catch (const CapacityError& e) {
                    throw CapacityError("chunk " + std::to_string(chunk) + ": " + e.what());
                }
                StepInput<S> binput;
                for (int j = 0; j < beta; ++j) {
                    binput.metas.push_back({Modality::kVisual, chunk, j});
                    binput.positions.push_back(base + j);
                }
                binput.visual_rows = block.embeddings;
                const MatX<S> bout = step(cache, binput, pipeline.params().llm, sys.model);
                logits = bout.row(bout.rows() - 1).transpose();
                if (cfg.evict) cache.evict_chunk(chunk);
                trace.events.push_back({chunk, base, static_cast<long>(trace.tokens.size())});
                base += beta;
            } else {
                base += k;
            }
            ++chunk;
            buffer.clear();
        }
        trace.cache_entries.push_back(cache.entry_count());
        if (std::find(cfg.stop_symbols.begin(), cfg.stop_symbols.end(), token) !=
            cfg.stop_symbols.end())
            break;
    }
    trace.decode_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    return trace;
}

// Deterministic line-delimited trace file; wall times stay out of it.
std::string render_trace(const GenerationTrace& trace, const Vocab& vocab,
                         std::uint64_t config_checksum, std::uint64_t seed);

// First-token cost across regimes with identical parameters: exact prefill
// token counts plus informational wall times.
struct FirstTokenMeasurement {
    std::string regime;
    long prefill_tokens = 0;
    double seconds = 0.0;
};

template <class S>
std::vector<FirstTokenMeasurement> measure_first_token(const Pipeline<S>& pipeline,
                                                       const std::vector<TokenId>& prompt) {
    std::vector<FirstTokenMeasurement> results;
    const SystemConfig& sys = pipeline.config();
    {
        EvictableKVCache<S> cache(sys.model.layer_count, sys.model.width);
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = raw_prompt(pipeline, prompt, cache);
        const double sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        results.push_back({"none", r.entries, sec});
    }
    for (const char* name : {"pcc", "gcc"}) {
        EvictableKVCache<S> cache(sys.model.layer_count, sys.model.width);
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = compress_prompt(pipeline, prompt, cache);
        const double sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        results.push_back({name, r.entries, sec});
    }
    return results;
}

}  // namespace vist
