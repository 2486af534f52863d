// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#include "vist/corpus.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

namespace vist {
namespace {

// Standard-normal logit derived from a pure hash of (seed, tag, context,
// symbol); two hashed uniforms through Box-Muller.
double hashed_normal(std::uint64_t seed, std::uint64_t tag,
                     const std::vector<TokenId>& context, TokenId symbol) {
    std::uint64_t h = hash_combine(hash_combine(kFnvOffset, seed), tag);
    for (TokenId c : context) h = hash_combine(h, static_cast<std::uint64_t>(c) + 1);
    h = hash_combine(h, static_cast<std::uint64_t>(symbol) + 0x9e3779b97f4a7c15ULL);
    const std::uint64_t h2 = hash_combine(h, 0xd1b54a32d192ed03ULL);
    double u1 = static_cast<double>(h >> 11) * 0x1.0p-53;
    const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace

std::vector<double> markov_distribution(const SyntheticCorpusSpec& spec, const Vocab& vocab,
                                        const std::vector<TokenId>& context) {
    const int v = vocab.content_size();
    std::vector<double> logits(static_cast<std::size_t>(v));
    // Mixture of context orders so lower-order statistics stay predictive:
    // full weight on the last symbol, half weight per extra symbol.
    for (int s = 0; s < v; ++s) {
        double g = 0.0;
        double w = 1.0;
        for (int o = 1; o <= spec.markov_order && o <= static_cast<int>(context.size()); ++o) {
            const std::vector<TokenId> ctx(context.end() - o, context.end());
            g += w * hashed_normal(spec.seed, static_cast<std::uint64_t>(o), ctx, s);
            w *= 0.5;
        }
        if (context.empty()) g = hashed_normal(spec.seed, 0, {}, s);
        logits[static_cast<std::size_t>(s)] = g / spec.temperature;
    }
    double mx = logits[0];
    for (double g : logits) mx = std::max(mx, g);
    double z = 0.0;
    std::vector<double> prob(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        prob[i] = std::exp(logits[i] - mx);
        z += prob[i];
    }
    for (double& p : prob) p /= z;
    return prob;
}

namespace {

TokenId sample_from(const std::vector<double>& prob, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        acc += prob[i];
        if (u < acc) return static_cast<TokenId>(i);
    }
    return static_cast<TokenId>(prob.size() - 1);
}

Document gen_markov_doc(const SyntheticCorpusSpec& spec, const Vocab& vocab, int length,
                        Rng& rng) {
    Document doc;
    doc.reserve(static_cast<std::size_t>(length));
    std::vector<TokenId> context;
    for (int i = 0; i < length; ++i) {
        const auto prob = markov_distribution(spec, vocab, context);
        const TokenId s = sample_from(prob, rng);
        doc.push_back(s);
        context.push_back(s);
        if (static_cast<int>(context.size()) > spec.markov_order)
            context.erase(context.begin());
    }
    return doc;
}

// Grammar 0: space-separated pseudo-words drawn from a seed-derived
// lexicon, sentence-terminated with '.'.
Document gen_template_doc(const SyntheticCorpusSpec& spec, const Vocab& vocab, int length,
                          Rng& rng) {
    const int letters = std::min(26, vocab.content_size());
    const TokenId space = vocab.encode_text(" ").front();
    const TokenId period = vocab.encode_text(".").front();
    std::vector<std::vector<TokenId>> lexicon;
    Rng lex_rng(hash_combine(spec.seed, 0x77));
    for (int w = 0; w < 40; ++w) {
        std::vector<TokenId> word;
        const int len = lex_rng.range(2, 6);
        for (int i = 0; i < len; ++i)
            word.push_back(static_cast<TokenId>(lex_rng.below(static_cast<std::uint64_t>(letters))));
        lexicon.push_back(std::move(word));
    }
    Document doc;
    int words_in_sentence = 0;
    while (static_cast<int>(doc.size()) < length) {
        const auto& word = lexicon[static_cast<std::size_t>(rng.below(lexicon.size()))];
        doc.insert(doc.end(), word.begin(), word.end());
        ++words_in_sentence;
        if (words_in_sentence >= rng.range(3, 6)) {
            doc.push_back(period);
            words_in_sentence = 0;
        }
        doc.push_back(space);
    }
    doc.resize(static_cast<std::size_t>(length));
    return doc;
}

}  // namespace

std::vector<Document> gen_corpus(const SyntheticCorpusSpec& spec, const Vocab& vocab) {
    spec.validate();
    std::vector<Document> docs;
    docs.reserve(static_cast<std::size_t>(spec.doc_count));
    for (int d = 0; d < spec.doc_count; ++d) {
        Rng rng = stream_rng(spec.seed, "doc", static_cast<std::uint64_t>(d));
        const int length = spec.min_len + static_cast<int>(rng.below(
                               static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1)));
        docs.push_back(spec.generator == SyntheticCorpusSpec::Generator::kMarkov
                           ? gen_markov_doc(spec, vocab, length, rng)
                           : gen_template_doc(spec, vocab, length, rng));
    }
    return docs;
}

std::vector<SftSample> gen_sft_pairs(const SyntheticCorpusSpec& spec, const Vocab& vocab,
                                     int pair_count) {
    // Copy task: the response repeats the query payload. Exercises reading
    // fine-grained content through the compressed/raw query path.
    std::vector<SftSample> pairs;
    const int letters = std::min(26, vocab.content_size());
    for (int i = 0; i < pair_count; ++i) {
        Rng rng = stream_rng(spec.seed, "sft", static_cast<std::uint64_t>(i));
        const int len = rng.range(spec.min_len, spec.max_len);
        SftSample s;
        for (int j = 0; j < len; ++j)
            s.query.push_back(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(letters))));
        s.response = s.query;
        pairs.push_back(std::move(s));
    }
    return pairs;
}

void write_corpus(const std::vector<Document>& docs, const Vocab& vocab,
                  const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    for (const Document& doc : docs) f << vocab.to_text(doc) << '\n';
}

std::vector<Document> load_corpus(const std::string& path, const Vocab& vocab) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::vector<Document> docs;
    std::string line;
    while (std::getline(f, line)) docs.push_back(vocab.encode_text(line));
    return docs;
}

std::uint64_t corpus_checksum(const std::vector<Document>& docs) {
    std::uint64_t h = kFnvOffset;
    for (const Document& doc : docs) {
        h = hash_combine(h, doc.size());
        for (TokenId t : doc) h = hash_combine(h, static_cast<std::uint64_t>(t));
    }
    return h;
}

void write_manifest(const SyntheticCorpusSpec& spec, const std::vector<Document>& docs,
                    const std::string& corpus_path, const std::string& manifest_path,
                    std::uint64_t config_checksum) {
    nlohmann::json j;
    j["generator"] = spec.generator == SyntheticCorpusSpec::Generator::kMarkov ? "markov"
                                                                               : "template";
    j["markov_order"] = spec.markov_order;
    j["temperature"] = spec.temperature;
    j["grammar_id"] = spec.grammar_id;
    j["seed"] = spec.seed;
    j["doc_count"] = spec.doc_count;
    j["min_len"] = spec.min_len;
    j["max_len"] = spec.max_len;
    j["corpus_file"] = corpus_path;
    j["documents"] = docs.size();
    long tokens = 0;
    for (const auto& d : docs) tokens += static_cast<long>(d.size());
    j["tokens"] = tokens;
    j["corpus_checksum"] = hex64(corpus_checksum(docs));
    j["config"] = hex64(config_checksum);
    std::ofstream f(manifest_path);
    if (!f) throw IoError("cannot write " + manifest_path);
    f << j.dump(2) << '\n';
}

double empirical_conditional_entropy(const std::vector<Document>& docs, int order) {
    std::map<std::vector<TokenId>, std::map<TokenId, long>> counts;
    std::map<std::vector<TokenId>, long> totals;
    for (const Document& doc : docs)
        for (std::size_t i = static_cast<std::size_t>(order); i < doc.size(); ++i) {
            const std::vector<TokenId> ctx(doc.begin() + static_cast<long>(i) - order,
                                           doc.begin() + static_cast<long>(i));
            ++counts[ctx][doc[i]];
            ++totals[ctx];
        }
    double h = 0.0;
    long grand = 0;
    for (const auto& [ctx, total] : totals) grand += total;
    for (const auto& [ctx, dist] : counts) {
        const double ctx_w = static_cast<double>(totals[ctx]) / static_cast<double>(grand);
        for (const auto& [sym, c] : dist) {
            const double p = static_cast<double>(c) / static_cast<double>(totals.at(ctx));
            h -= ctx_w * p * std::log(p);
        }
    }
    return h;
}

}  // namespace vist
