// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#include "vist/objectives.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace vist {

TailRule tail_rule(int residual_length, int beta) {
    if (residual_length < 0 || beta < 1) throw ConfigError("invalid tail rule arguments");
    TailRule rule;
    rule.residual_length = residual_length;
    rule.beta = beta;
    rule.action = residual_length > beta ? TailAction::kCompress : TailAction::kRaw;
    return rule;
}

CurriculumLevel curriculum_level(double progress, double easy_until, double medium_until,
                                 int hard_max_images) {
    if (!(easy_until > 0.0 && easy_until < medium_until && medium_until < 1.0))
        throw ConfigError("curriculum boundaries must satisfy 0 < a < b < 1");
    if (hard_max_images <= 4) throw ConfigError("hard level requires more than 4 images");
    CurriculumLevel level;
    if (progress < easy_until) {
        level = {Level::kEasy, 1, 1};
    } else if (progress < medium_until) {
        level = {Level::kMedium, 2, 4};
    } else {
        level = {Level::kHard, 5, hard_max_images};
    }
    return level;
}

const char* level_name(Level level) {
    switch (level) {
        case Level::kEasy: return "easy";
        case Level::kMedium: return "medium";
        case Level::kHard: return "hard";
    }
    return "?";
}

std::vector<ScoredTarget> mt_ocr_scope(const InterleavedLayout& layout,
                                       const std::vector<TextChunk>& chunks) {
    if (layout.order_mode != OrderMode::kFlipped)
        throw LayoutError("MT-OCR requires a flipped layout");
    std::vector<ScoredTarget> scored;
    for (const TextChunk& c : chunks) {
        if (c.length() == 0) continue;
        const int beta = layout.chunk_block_len[static_cast<std::size_t>(c.chunk_index)];
        if (beta == 0)
            throw LayoutError("MT-OCR chunk " + std::to_string(c.chunk_index) +
                              " has no visual block");
        scored.push_back({layout.flat_index(Modality::kVisual, c.chunk_index, beta - 1),
                          c.token_ids.front()});
        for (int j = 1; j < c.length(); ++j)
            scored.push_back({layout.flat_index(Modality::kText, c.chunk_index, j - 1),
                              c.token_ids[static_cast<std::size_t>(j)]});
    }
    return scored;
}

std::vector<ScoredTarget> olm_scope(const InterleavedLayout& layout,
                                    const std::vector<TextChunk>& chunks) {
    if (layout.order_mode != OrderMode::kStandard)
        throw LayoutError("OLM requires a standard layout");
    // Every chunk that carries conditioning for a later one must have been
    // compressed; only the final chunk's block may be absent.
    for (std::size_t i = 0; i + 1 < chunks.size(); ++i)
        if (!layout.compressed(chunks[i].chunk_index))
            throw LayoutError("missing visual block for chunk " +
                              std::to_string(chunks[i].chunk_index));
    std::vector<ScoredTarget> scored;
    for (const TextChunk& c : chunks)
        for (int j = 1; j < c.length(); ++j)
            scored.push_back({layout.flat_index(Modality::kText, c.chunk_index, j - 1),
                              c.token_ids[static_cast<std::size_t>(j)]});
    if (scored.empty()) throw LayoutError("empty loss scope");
    return scored;
}

std::vector<ScoredTarget> sft_scope(const InterleavedLayout& layout,
                                    const std::vector<TextChunk>& response_chunks,
                                    int first_response_chunk) {
    std::vector<ScoredTarget> scored;
    for (const TextChunk& c : response_chunks) {
        if (c.chunk_index < first_response_chunk)
            throw LayoutError("response chunk indexed before the query");
        for (int j = 1; j < c.length(); ++j)
            scored.push_back({layout.flat_index(Modality::kText, c.chunk_index, j - 1),
                              c.token_ids[static_cast<std::size_t>(j)]});
    }
    if (scored.empty()) throw LayoutError("empty loss scope");
    return scored;
}

std::vector<std::pair<int, int>> spans_from_scored(std::vector<ScoredTarget> scored) {
    std::sort(scored.begin(), scored.end(),
              [](const ScoredTarget& a, const ScoredTarget& b) { return a.row < b.row; });
    std::vector<std::pair<int, int>> spans;
    for (const ScoredTarget& st : scored) {
        if (!spans.empty() && spans.back().second == st.row)
            spans.back().second = st.row + 1;
        else
            spans.push_back({st.row, st.row + 1});
    }
    return spans;
}

void write_samples(const std::string& path, const std::vector<SampleRecord>& records) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    for (const SampleRecord& r : records) {
        nlohmann::json j;
        j["task"] = r.task;
        j["mode"] = r.mode;
        if (!r.chunks.empty()) j["chunks"] = r.chunks;
        if (!r.query.empty()) j["query"] = r.query;
        if (!r.response.empty()) j["response"] = r.response;
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& [a, b] : r.scope_spans) spans.push_back({a, b});
        j["scope"] = spans;
        f << j.dump() << '\n';
    }
}

std::vector<SampleRecord> read_samples(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::vector<SampleRecord> records;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        SampleRecord r;
        r.task = j.at("task").get<std::string>();
        r.mode = j.at("mode").get<std::string>();
        if (j.contains("chunks"))
            r.chunks = j["chunks"].get<std::vector<std::vector<TokenId>>>();
        if (j.contains("query")) r.query = j["query"].get<std::vector<TokenId>>();
        if (j.contains("response")) r.response = j["response"].get<std::vector<TokenId>>();
        for (const auto& s : j.at("scope"))
            r.scope_spans.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace vist
