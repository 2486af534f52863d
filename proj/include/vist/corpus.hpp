// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "vist/objectives.hpp"
#include "vist/vocab.hpp"

namespace vist {

// Deterministic synthetic corpora standing in for natural-text training
// data. MARKOV draws from an order-o chain whose transition logits are a
// pure hash of (seed, context, symbol); TEMPLATE grammars produce patterned
// sentences (id 0) or copy-style instruction pairs (id 1).
struct SyntheticCorpusSpec {
    enum class Generator : std::uint8_t { kMarkov, kTemplate };

    Generator generator = Generator::kMarkov;
    int markov_order = 2;
    double temperature = 0.35;
    int grammar_id = 0;
    std::uint64_t seed = 1;
    int doc_count = 64;
    int min_len = 64;
    int max_len = 256;

    void validate() const {
        if (doc_count < 1 || min_len < 1 || max_len < min_len)
            throw ConfigError("invalid corpus spec");
        if (markov_order < 1 || markov_order > 3)
            throw ConfigError("markov order must be 1..3");
        if (temperature <= 0) throw ConfigError("temperature must be positive");
    }
};

using Document = std::vector<TokenId>;

// Conditional distribution of the Markov source (exposed for entropy
// checks); `context` holds the most recent symbols, oldest first.
std::vector<double> markov_distribution(const SyntheticCorpusSpec& spec, const Vocab& vocab,
                                        const std::vector<TokenId>& context);

std::vector<Document> gen_corpus(const SyntheticCorpusSpec& spec, const Vocab& vocab);

std::vector<SftSample> gen_sft_pairs(const SyntheticCorpusSpec& spec, const Vocab& vocab,
                                     int pair_count);

// Corpus files: one document per line in display characters, plus a JSON
// manifest with the spec echo and content checksums.
void write_corpus(const std::vector<Document>& docs, const Vocab& vocab,
                  const std::string& path);
std::vector<Document> load_corpus(const std::string& path, const Vocab& vocab);
void write_manifest(const SyntheticCorpusSpec& spec, const std::vector<Document>& docs,
                    const std::string& corpus_path, const std::string& manifest_path,
                    std::uint64_t config_checksum);

std::uint64_t corpus_checksum(const std::vector<Document>& docs);

// Empirical conditional entropy (nats) of next symbol given the previous
// `order` symbols, estimated from the documents.
double empirical_conditional_entropy(const std::vector<Document>& docs, int order);

// ---------------------------------------------------------------------------
// Batch providers: pure functions of (corpus, batch seed, progress).
// ---------------------------------------------------------------------------

struct CurriculumConfig {
    double easy_until = 0.3;
    double medium_until = 0.7;
    int hard_max_images = 6;
};

// Draws `batch_size` windows of n*K tokens (n from the curriculum level)
// and builds MT-OCR samples.
template <class S>
std::vector<BuiltSample<S>> mt_ocr_batch(const Pipeline<S>& pipeline,
                                         const std::vector<Document>& docs,
                                         const CurriculumConfig& curriculum, int batch_size,
                                         std::uint64_t batch_seed, double progress) {
    if (docs.empty()) throw ConfigError("empty corpus");
    const int k = pipeline.config().chunking.tokens_per_chunk;
    Rng rng(batch_seed);
    const CurriculumLevel level = curriculum_level(progress, curriculum.easy_until,
                                                   curriculum.medium_until,
                                                   curriculum.hard_max_images);
    std::vector<BuiltSample<S>> batch;
    for (int b = 0; b < batch_size; ++b) {
        const int images = rng.range(level.min_images, level.max_images);
        const int want = images * k;
        // Sample a document long enough, then a window inside it.
        int doc_idx = -1;
        for (int tries = 0; tries < 64; ++tries) {
            const int cand = static_cast<int>(rng.below(docs.size()));
            if (static_cast<int>(docs[static_cast<std::size_t>(cand)].size()) >= want) {
                doc_idx = cand;
                break;
            }
        }
        if (doc_idx < 0) throw ConfigError("no document long enough for " +
                                           std::to_string(want) + " tokens");
        const Document& doc = docs[static_cast<std::size_t>(doc_idx)];
        const int start = static_cast<int>(rng.below(doc.size() - want + 1));
        const std::vector<TokenId> window(doc.begin() + start, doc.begin() + start + want);
        batch.push_back(build_mt_ocr_sample(pipeline, chunk_text(window, pipeline.config().chunking)));
    }
    return batch;
}

template <class S>
std::vector<BuiltSample<S>> olm_batch(const Pipeline<S>& pipeline,
                                      const std::vector<Document>& docs, int chunks_per_sample,
                                      int batch_size, std::uint64_t batch_seed) {
    if (docs.empty()) throw ConfigError("empty corpus");
    const int k = pipeline.config().chunking.tokens_per_chunk;
    const int want = chunks_per_sample * k;
    Rng rng(batch_seed);
    std::vector<BuiltSample<S>> batch;
    for (int b = 0; b < batch_size; ++b) {
        int doc_idx = -1;
        for (int tries = 0; tries < 64; ++tries) {
            const int cand = static_cast<int>(rng.below(docs.size()));
            if (static_cast<int>(docs[static_cast<std::size_t>(cand)].size()) >= want) {
                doc_idx = cand;
                break;
            }
        }
        if (doc_idx < 0) throw ConfigError("no document long enough for " +
                                           std::to_string(want) + " tokens");
        const Document& doc = docs[static_cast<std::size_t>(doc_idx)];
        const int start = static_cast<int>(rng.below(doc.size() - want + 1));
        const std::vector<TokenId> window(doc.begin() + start, doc.begin() + start + want);
        batch.push_back(build_olm_sample(pipeline, chunk_text(window, pipeline.config().chunking)));
    }
    return batch;
}

template <class S>
std::vector<BuiltSample<S>> sft_batch(const Pipeline<S>& pipeline,
                                      const std::vector<SftSample>& pairs, int batch_size,
                                      std::uint64_t batch_seed) {
    if (pairs.empty()) throw ConfigError("empty instruction set");
    Rng rng(batch_seed);
    std::vector<BuiltSample<S>> batch;
    for (int b = 0; b < batch_size; ++b)
        batch.push_back(
            build_sft_sample(pipeline, pairs[static_cast<std::size_t>(rng.below(pairs.size()))]));
    return batch;
}

}  // namespace vist
