// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#include "vist/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace vist {
namespace {

using nlohmann::json;

Stage stage_from_name(const std::string& name) {
    if (name == "mt_ocr") return Stage::kMtOcr;
    if (name == "olm") return Stage::kOlm;
    if (name == "sft") return Stage::kSft;
    throw ConfigError("unknown stage '" + name + "'");
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

void ExperimentConfig::validate() const {
    system.validate();
    data.validate();
    if (precision != "f32" && precision != "f64")
        throw ConfigError("precision must be f32 or f64");
    if (system.vocab_size > system.model.vocab_size)
        throw ConfigError("model vocab_size must cover the atlas vocabulary");
    for (const auto& [name, stage] : stages) {
        if (stage_name(stage.stage) != name)
            throw ConfigError("stage key '" + name + "' does not match its stage");
        stage.validate();
    }
    if (olm_chunks_per_sample < 1) throw ConfigError("olm_chunks_per_sample must be >= 1");
    generation.validate();
    bench.validate();
}

std::string ExperimentConfig::canonical_json() const {
    json j;
    j["vocab_size"] = system.vocab_size;
    j["chunking"] = {{"tokens_per_chunk", system.chunking.tokens_per_chunk},
                     {"visual_tokens_per_chunk", system.chunking.visual_tokens}};
    j["page"] = {{"height", system.geometry.height},
                 {"width", system.geometry.width},
                 {"glyph_width", system.glyph_width},
                 {"glyph_height", system.glyph_height}};
    j["encoder"] = {{"dim", system.encoder.width},
                    {"layers", system.encoder.layer_count},
                    {"heads", system.encoder.head_count},
                    {"init_std", system.encoder.init_std}};
    j["model"] = {{"dim", system.model.width},
                  {"layers", system.model.layer_count},
                  {"heads", system.model.head_count},
                  {"vocab_size", system.model.vocab_size},
                  {"ffn_width", system.model.ffn_width},
                  {"max_position", system.model.max_position},
                  {"rope_base", system.model.rope_base},
                  {"init_std", system.model.init_std}};
    j["precision"] = precision;
    j["init_seed"] = init_seed;
    j["run_name"] = run_name;
    j["data"] = {{"generator",
                  data.generator == SyntheticCorpusSpec::Generator::kMarkov ? "markov"
                                                                            : "template"},
                 {"markov_order", data.markov_order},
                 {"temperature", data.temperature},
                 {"grammar_id", data.grammar_id},
                 {"seed", data.seed},
                 {"doc_count", data.doc_count},
                 {"min_len", data.min_len},
                 {"max_len", data.max_len}};
    j["curriculum"] = {{"easy_until", curriculum.easy_until},
                       {"medium_until", curriculum.medium_until},
                       {"hard_max_images", curriculum.hard_max_images}};
    j["olm_chunks_per_sample"] = olm_chunks_per_sample;
    json stages_json;
    for (const auto& [name, stage] : stages) {
        stages_json[name] = {{"lr", stage.learning_rate},
                             {"batch_size", stage.batch_size},
                             {"max_steps", stage.max_steps},
                             {"seed", stage.seed},
                             {"weight_decay", stage.weight_decay},
                             {"warmup_ratio", stage.warmup_ratio},
                             {"grad_clip", stage.grad_clip},
                             {"checkpoint_interval", stage.checkpoint_interval}};
    }
    j["stages"] = stages_json;
    j["generation"] = {{"max_new_tokens", generation.max_new_tokens},
                       {"decoding", generation.decoding == GenerationConfig::Decoding::kGreedy
                                        ? "greedy"
                                        : "top_k"},
                       {"top_k", generation.top_k},
                       {"seed", generation.seed}};
    j["bench"] = {{"prompt_tokens", bench.prompt_tokens},
                  {"gen_tokens", bench.gen_tokens},
                  {"tokens_per_chunk", bench.tokens_per_chunk},
                  {"visual_tokens", bench.visual_tokens},
                  {"d_lm", bench.d_lm},
                  {"layer_count", bench.layer_count},
                  {"bytes_per_scalar", bench.bytes_per_scalar}};
    j["eval"] = {{"docs", eval_docs}, {"seed", eval_seed}};
    return j.dump(2);
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    ExperimentConfig cfg;
    try {
        cfg.system.vocab_size = get_or(j, "vocab_size", 64);
        if (j.contains("chunking"))
            cfg.system.chunking = ChunkingConfig(
                j["chunking"].value("tokens_per_chunk", 8),
                j["chunking"].value("visual_tokens_per_chunk", 4));
        if (j.contains("page")) {
            cfg.system.geometry =
                PageGeometry(j["page"].value("height", 32), j["page"].value("width", 32));
            cfg.system.glyph_width = j["page"].value("glyph_width", 8);
            cfg.system.glyph_height = j["page"].value("glyph_height", 16);
        }
        cfg.system.encoder.patch_count = cfg.system.geometry.patch_count();
        if (j.contains("encoder")) {
            const auto& e = j["encoder"];
            cfg.system.encoder.width = e.value("dim", 64);
            cfg.system.encoder.layer_count = e.value("layers", 2);
            cfg.system.encoder.head_count = e.value("heads", 4);
            cfg.system.encoder.init_std = e.value("init_std", 0.04);
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            cfg.system.model.width = m.value("dim", 128);
            cfg.system.model.layer_count = m.value("layers", 4);
            cfg.system.model.head_count = m.value("heads", 4);
            cfg.system.model.vocab_size = m.value("vocab_size", cfg.system.vocab_size);
            cfg.system.model.ffn_width = m.value("ffn_width", 4 * cfg.system.model.width);
            cfg.system.model.max_position = m.value("max_position", 8192L);
            cfg.system.model.rope_base = m.value("rope_base", 10000.0);
            cfg.system.model.init_std = m.value("init_std", 0.04);
        } else {
            cfg.system.model.vocab_size = cfg.system.vocab_size;
        }
        cfg.precision = get_or<std::string>(j, "precision", "f32");
        cfg.init_seed = get_or<std::uint64_t>(j, "init_seed", 1);
        cfg.run_name = get_or<std::string>(j, "run_name", "run");
        if (j.contains("data")) {
            const auto& d = j["data"];
            const std::string gen = d.value("generator", std::string("markov"));
            cfg.data.generator = gen == "markov" ? SyntheticCorpusSpec::Generator::kMarkov
                                                 : SyntheticCorpusSpec::Generator::kTemplate;
            cfg.data.markov_order = d.value("markov_order", 2);
            cfg.data.temperature = d.value("temperature", 0.35);
            cfg.data.grammar_id = d.value("grammar_id", 0);
            cfg.data.seed = d.value("seed", 1ULL);
            cfg.data.doc_count = d.value("doc_count", 64);
            cfg.data.min_len = d.value("min_len", 64);
            cfg.data.max_len = d.value("max_len", 256);
        }
        if (j.contains("curriculum")) {
            const auto& c = j["curriculum"];
            cfg.curriculum.easy_until = c.value("easy_until", 0.3);
            cfg.curriculum.medium_until = c.value("medium_until", 0.7);
            cfg.curriculum.hard_max_images = c.value("hard_max_images", 6);
        }
        cfg.olm_chunks_per_sample = get_or(j, "olm_chunks_per_sample", 4);
        if (j.contains("stages")) {
            for (const auto& [name, sj] : j["stages"].items()) {
                StageConfig sc = make_stage_config(stage_from_name(name));
                sc.learning_rate = sj.value("lr", 1e-3);
                sc.batch_size = sj.value("batch_size", 8);
                sc.max_steps = sj.value("max_steps", 100);
                sc.seed = sj.value("seed", 0ULL);
                sc.weight_decay = sj.value("weight_decay", 1e-4);
                sc.warmup_ratio = sj.value("warmup_ratio", 0.01);
                sc.grad_clip = sj.value("grad_clip", 1.0);
                sc.checkpoint_interval = sj.value("checkpoint_interval", 0);
                cfg.stages.emplace(name, sc);
            }
        }
        if (j.contains("generation")) {
            const auto& g = j["generation"];
            cfg.generation.max_new_tokens = g.value("max_new_tokens", 64);
            cfg.generation.decoding = g.value("decoding", std::string("greedy")) == "greedy"
                                          ? GenerationConfig::Decoding::kGreedy
                                          : GenerationConfig::Decoding::kTopK;
            cfg.generation.top_k = g.value("top_k", 8);
            cfg.generation.seed = g.value("seed", 0ULL);
            if (g.contains("stop_symbols"))
                cfg.generation.stop_symbols = g["stop_symbols"].get<std::vector<TokenId>>();
        }
        if (j.contains("bench")) {
            const auto& b = j["bench"];
            cfg.bench.prompt_tokens = b.value("prompt_tokens", 4096L);
            cfg.bench.gen_tokens = b.value("gen_tokens", 28672L);
            cfg.bench.tokens_per_chunk =
                b.value("tokens_per_chunk", cfg.system.chunking.tokens_per_chunk);
            cfg.bench.visual_tokens = b.value("visual_tokens", cfg.system.chunking.visual_tokens);
            cfg.bench.d_lm = b.value("d_lm", cfg.system.model.width);
            cfg.bench.layer_count = b.value("layer_count", cfg.system.model.layer_count);
            cfg.bench.bytes_per_scalar = b.value("bytes_per_scalar", 4);
        } else {
            cfg.bench.tokens_per_chunk = cfg.system.chunking.tokens_per_chunk;
            cfg.bench.visual_tokens = cfg.system.chunking.visual_tokens;
            cfg.bench.d_lm = cfg.system.model.width;
            cfg.bench.layer_count = cfg.system.model.layer_count;
        }
        if (j.contains("eval")) {
            cfg.eval_docs = j["eval"].value("docs", 32);
            cfg.eval_seed = j["eval"].value("seed", 99ULL);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string output_dir(const ExperimentConfig& cfg) {
    const char* root = std::getenv("VIST2_OUT_ROOT");
    return (root && *root ? std::string(root) : std::string("out")) + "/" + cfg.run_name;
}

}  // namespace vist
