// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: multi-turn OCR over flipped layouts, optical
// language modeling over standard layouts, and instruction tuning with a
// compressed query. A position contributes to a loss only when it appears
// in the sample's scored list; everything else is ignore-marked by absence.

#pragma once

#include <string>
#include <vector>

#include "vist/pipeline.hpp"

namespace vist {

// Residual segments longer than beta are compressed; beta or shorter stay
// as raw tokens (strict inequality).
enum class TailAction : std::uint8_t { kRaw, kCompress };

struct TailRule {
    int residual_length = 0;
    int beta = 0;
    TailAction action = TailAction::kRaw;
};

TailRule tail_rule(int residual_length, int beta);

enum class Level : std::uint8_t { kEasy, kMedium, kHard };

struct CurriculumLevel {
    Level level = Level::kEasy;
    int min_images = 1;
    int max_images = 1;
};

// EASY below `easy_until`, MEDIUM in [easy_until, medium_until), HARD above.
CurriculumLevel curriculum_level(double progress, double easy_until, double medium_until,
                                 int hard_max_images);

const char* level_name(Level level);

// ---------------------------------------------------------------------------
// Loss scopes. Targets are text tokens; the query row holding each target's
// prediction follows the layout:
//  - within a chunk, token j >= 1 is predicted from text position j-1;
//  - in flipped (MT-OCR) layouts the chunk's first token is predicted from
//    the last token of its own block, whose visible set is exactly the OCR
//    conditioning set; OLM/SFT never score chunk-first tokens.
// ---------------------------------------------------------------------------

std::vector<ScoredTarget> mt_ocr_scope(const InterleavedLayout& layout,
                                       const std::vector<TextChunk>& chunks);

std::vector<ScoredTarget> olm_scope(const InterleavedLayout& layout,
                                    const std::vector<TextChunk>& chunks);

// Scores only the response chunks (OLM rule); query positions are ignored.
std::vector<ScoredTarget> sft_scope(const InterleavedLayout& layout,
                                    const std::vector<TextChunk>& response_chunks,
                                    int first_response_chunk);

// Contiguous [start, end) spans of scored rows, for the sample-file format.
std::vector<std::pair<int, int>> spans_from_scored(std::vector<ScoredTarget> scored);

// ---------------------------------------------------------------------------
// Sample assembly (rendering + encoding included, with tapes for backward).
// ---------------------------------------------------------------------------

template <class S>
struct BuiltSample {
    SequenceInput<S> input;
    std::vector<ScoredTarget> scored;
    // Per visual segment, in layout order; tapes are kept for backward.
    std::vector<PatchGrid<S>> grids;
    std::vector<EncoderTape<S>> enc_tapes;
};

namespace detail {

template <class S>
void stack_visual_rows(const InterleavedLayout& layout,
                       const std::vector<VisualTokenBlock<S>>& blocks_by_segment,
                       SequenceInput<S>& input) {
    Index total = 0;
    for (const auto& b : blocks_by_segment) total += b.embeddings.rows();
    input.visual_rows.resize(total, total > 0 ? blocks_by_segment.front().embeddings.cols() : 0);
    Index row = 0;
    for (const auto& b : blocks_by_segment) {
        input.visual_rows.middleRows(row, b.embeddings.rows()) = b.embeddings;
        row += b.embeddings.rows();
    }
    (void)layout;
}

}  // namespace detail

template <class S>
BuiltSample<S> build_mt_ocr_sample(const Pipeline<S>& pipeline,
                                   const std::vector<TextChunk>& chunks) {
    BuiltSample<S> sample;
    std::vector<VisualTokenBlock<S>> blocks;
    std::vector<BlockShape> shapes;
    for (const TextChunk& c : chunks) {
        PatchGrid<S> grid;
        EncoderTape<S> tape;
        blocks.push_back(pipeline.compress_chunk(c, &grid, &tape));
        shapes.push_back(blocks.back().shape());
        sample.grids.push_back(std::move(grid));
        sample.enc_tapes.push_back(std::move(tape));
    }
    sample.input.layout = assemble(chunks, shapes, OrderMode::kFlipped);
    for (const TextChunk& c : chunks)
        sample.input.text_ids.insert(sample.input.text_ids.end(), c.token_ids.begin(),
                                     c.token_ids.end());
    detail::stack_visual_rows(sample.input.layout, blocks, sample.input);
    sample.scored = mt_ocr_scope(sample.input.layout, chunks);
    return sample;
}

template <class S>
BuiltSample<S> build_olm_sample(const Pipeline<S>& pipeline,
                                const std::vector<TextChunk>& chunks,
                                bool include_final_block = false) {
    BuiltSample<S> sample;
    std::vector<VisualTokenBlock<S>> blocks;
    std::vector<BlockShape> shapes;
    const std::size_t block_count =
        include_final_block ? chunks.size() : (chunks.empty() ? 0 : chunks.size() - 1);
    for (std::size_t i = 0; i < block_count; ++i) {
        PatchGrid<S> grid;
        EncoderTape<S> tape;
        blocks.push_back(pipeline.compress_chunk(chunks[i], &grid, &tape));
        shapes.push_back(blocks.back().shape());
        sample.grids.push_back(std::move(grid));
        sample.enc_tapes.push_back(std::move(tape));
    }
    sample.input.layout = assemble(chunks, shapes, OrderMode::kStandard);
    for (const TextChunk& c : chunks)
        sample.input.text_ids.insert(sample.input.text_ids.end(), c.token_ids.begin(),
                                     c.token_ids.end());
    detail::stack_visual_rows(sample.input.layout, blocks, sample.input);
    sample.scored = olm_scope(sample.input.layout, chunks);
    return sample;
}

struct SftSample {
    std::vector<TokenId> query;     // raw user tokens, markers added by the builder
    std::vector<TokenId> response;  // raw assistant tokens, EOS appended
};

// Chat template: <user> query <assistant> | response <eos>. The query is
// compressed per the tail rule (full chunks and long residuals become
// visual-only segments; a short residual stays raw and loss-ignored but
// attention-visible); the response is chunked and compressed independently,
// teacher-forced with text+block per compressed chunk.
template <class S>
BuiltSample<S> build_sft_sample(const Pipeline<S>& pipeline, const SftSample& pair) {
    const Vocab& vocab = pipeline.vocab();
    const ChunkingConfig& chunking = pipeline.config().chunking;
    const int k = chunking.tokens_per_chunk;
    const int beta = chunking.visual_tokens;

    std::vector<TokenId> query_stream;
    query_stream.push_back(vocab.reserved(Vocab::kUser));
    query_stream.insert(query_stream.end(), pair.query.begin(), pair.query.end());
    query_stream.push_back(vocab.reserved(Vocab::kAssistant));
    std::vector<TokenId> response_stream = pair.response;
    response_stream.push_back(vocab.reserved(Vocab::kEos));
    if (pair.response.empty()) throw LayoutError("zero-length response");

    BuiltSample<S> sample;
    std::vector<Segment> segments;
    std::vector<VisualTokenBlock<S>> blocks_by_segment;
    int next_chunk = 0;

    auto compress_into = [&](const std::vector<TokenId>& ids, int chunk_index) {
        TextChunk chunk{chunk_index, ids};
        PatchGrid<S> grid;
        EncoderTape<S> tape;
        blocks_by_segment.push_back(pipeline.compress_chunk(chunk, &grid, &tape));
        sample.grids.push_back(std::move(grid));
        sample.enc_tapes.push_back(std::move(tape));
        segments.push_back({Modality::kVisual, chunk_index, beta});
    };

    // Query: full chunks and a long residual enter as blocks only.
    {
        const auto chunks = chunk_text(query_stream, chunking);
        for (const TextChunk& c : chunks) {
            const bool full = c.length() == k;
            const TailRule rule = tail_rule(c.length(), beta);
            if (full || rule.action == TailAction::kCompress) {
                compress_into(c.token_ids, next_chunk);
            } else {
                segments.push_back({Modality::kText, next_chunk, c.length()});
                sample.input.text_ids.insert(sample.input.text_ids.end(), c.token_ids.begin(),
                                             c.token_ids.end());
            }
            ++next_chunk;
        }
    }

    // Response: teacher-forced, compressed chunk-wise per the tail rule.
    const int first_response_chunk = next_chunk;
    std::vector<TextChunk> response_chunks;
    {
        auto chunks = chunk_text(response_stream, chunking);
        for (TextChunk& c : chunks) {
            c.chunk_index = next_chunk;
            const bool full = c.length() == k;
            const TailRule rule = tail_rule(c.length(), beta);
            segments.push_back({Modality::kText, next_chunk, c.length()});
            sample.input.text_ids.insert(sample.input.text_ids.end(), c.token_ids.begin(),
                                         c.token_ids.end());
            if (full || rule.action == TailAction::kCompress) compress_into(c.token_ids, next_chunk);
            response_chunks.push_back(c);
            ++next_chunk;
        }
    }

    sample.input.layout = layout_from_segments(std::move(segments), OrderMode::kStandard);
    detail::stack_visual_rows(sample.input.layout, blocks_by_segment, sample.input);
    sample.scored = sft_scope(sample.input.layout, response_chunks, first_response_chunk);
    return sample;
}

// ---------------------------------------------------------------------------
// Loss evaluation and the training step (forward + backward through the
// whole stack, honoring freeze flags).
// ---------------------------------------------------------------------------

template <class S>
struct SampleResult {
    double loss = 0.0;
    long scored_tokens = 0;
    long total_tokens = 0;
};

template <class S>
double evaluate_loss(const Pipeline<S>& pipeline, const BuiltSample<S>& sample) {
    DecoderTape<S> tape;
    const MatX<S> logits =
        forward(sample.input, pipeline.params().llm, pipeline.config().model, tape);
    return cross_entropy(logits, sample.scored).loss;
}

template <class S>
SampleResult<S> train_sample(Pipeline<S>& pipeline, const BuiltSample<S>& sample,
                             Vist2Params<S>& grads, bool need_encoder_grads) {
    const ModelConfig& mc = pipeline.config().model;
    DecoderTape<S> tape;
    const MatX<S> logits = forward(sample.input, pipeline.params().llm, mc, tape);
    const auto ce = cross_entropy(logits, sample.scored);
    const MatX<S> dvisual =
        backward(ce.dlogits, sample.input, pipeline.params().llm, mc, tape, grads.llm);
    if (need_encoder_grads) {
        Index row = 0;
        for (std::size_t b = 0; b < sample.grids.size(); ++b) {
            const Index m = sample.grids[b].patch_count();
            encode_page_backward(MatX<S>(dvisual.middleRows(row, m)), sample.grids[b],
                                 pipeline.params().encoder, pipeline.params().aligner,
                                 sample.enc_tapes[b], grads.encoder, grads.aligner);
            row += m;
        }
    }
    SampleResult<S> r;
    r.loss = ce.loss;
    r.scored_tokens = static_cast<long>(sample.scored.size());
    r.total_tokens = sample.input.layout.total_length();
    return r;
}

// Spec-shaped convenience entry points.
template <class S>
double loss_mt_ocr(const Pipeline<S>& pipeline, const std::vector<TextChunk>& chunks) {
    return evaluate_loss(pipeline, build_mt_ocr_sample(pipeline, chunks));
}

template <class S>
double loss_olm(const Pipeline<S>& pipeline, const std::vector<TextChunk>& chunks) {
    return evaluate_loss(pipeline, build_olm_sample(pipeline, chunks));
}

template <class S>
double loss_sft(const Pipeline<S>& pipeline, const SftSample& pair) {
    return evaluate_loss(pipeline, build_sft_sample(pipeline, pair));
}

// ---------------------------------------------------------------------------
// Line-delimited sample records (task tag, chunked token ids, layout mode,
// loss scope spans); see docs/formats.md.
// ---------------------------------------------------------------------------

struct SampleRecord {
    std::string task;  // "mt_ocr" | "olm" | "sft"
    std::string mode;  // "standard" | "flipped"
    std::vector<std::vector<TokenId>> chunks;   // pretraining tasks
    std::vector<TokenId> query, response;       // sft
    std::vector<std::pair<int, int>> scope_spans;
};

void write_samples(const std::string& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_samples(const std::string& path);

}  // namespace vist
