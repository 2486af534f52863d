// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Staged training driver: AdamW over the unfrozen parameter groups, linear
// warmup + cosine decay, deterministic batch derivation, and versioned
// checkpoints carrying parameters, optimizer moments and PRNG state.

#pragma once

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <vector>

#include "vist/objectives.hpp"

namespace vist {

enum class Stage : std::uint8_t { kMtOcr = 0, kOlm = 1, kSft = 2 };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::kMtOcr: return "mt_ocr";
        case Stage::kOlm: return "olm";
        case Stage::kSft: return "sft";
    }
    return "?";
}

struct FreezeFlags {
    bool encoder = false;
    bool aligner = false;
    bool llm = false;
};

// Per-stage freeze recipe: MT-OCR trains encoder+aligner with the LLM
// frozen; OLM and SFT train the LLM with encoder+aligner frozen.
inline FreezeFlags stage_freeze(Stage stage) {
    switch (stage) {
        case Stage::kMtOcr: return {false, false, true};
        case Stage::kOlm: return {true, true, false};
        case Stage::kSft: return {true, true, false};
    }
    return {};
}

struct StageConfig {
    Stage stage = Stage::kMtOcr;
    FreezeFlags freeze = stage_freeze(Stage::kMtOcr);
    double learning_rate = 1e-3;
    int batch_size = 8;
    int max_steps = 100;
    std::uint64_t seed = 0;
    double weight_decay = 1e-4;
    double warmup_ratio = 0.01;
    double grad_clip = 1.0;
    int checkpoint_interval = 0;  // 0 = final only

    void validate() const {
        const FreezeFlags want = stage_freeze(stage);
        if (freeze.encoder != want.encoder || freeze.aligner != want.aligner ||
            freeze.llm != want.llm)
            throw ConfigError(std::string("freeze flags for stage ") + stage_name(stage) +
                              " must match the training recipe");
        if (learning_rate <= 0 || batch_size < 1 || max_steps < 1)
            throw ConfigError("invalid stage configuration");
        if (warmup_ratio <= 0 || warmup_ratio >= 1)
            throw ConfigError("warmup ratio must be in (0,1)");
    }
};

inline StageConfig make_stage_config(Stage stage) {
    StageConfig cfg;
    cfg.stage = stage;
    cfg.freeze = stage_freeze(stage);
    return cfg;
}

// Linear warmup to the peak at step w = round(ratio*max_steps), then cosine
// decay to zero at max_steps.
inline double cosine_lr(long step, long max_steps, double peak, double warmup_ratio) {
    const long warmup = std::max<long>(1, static_cast<long>(warmup_ratio * max_steps + 0.5));
    if (step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
    const double progress =
        static_cast<double>(step - warmup) / static_cast<double>(max_steps - warmup);
    return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// Uniform flat view over the heterogeneous parameter tensors, in the fixed
// for_each_tensor order.
template <class S>
struct TensorView {
    std::string name;
    Eigen::Map<MatX<S>> view;

    TensorView(std::string n, S* data, Index rows, Index cols)
        : name(std::move(n)), view(data, rows, cols) {}
};

template <class S>
std::vector<TensorView<S>> tensor_views(Vist2Params<S>& params) {
    std::vector<TensorView<S>> out;
    for_each_tensor(params, [&out](const std::string& name, auto& t) {
        out.emplace_back(name, t.data(), t.rows(), t.cols());
    });
    return out;
}

// AdamW with decoupled weight decay; moment accumulators exist only for
// unfrozen parameters.
template <class S>
class AdamW {
public:
    AdamW() = default;
    AdamW(Vist2Params<S>& params, const FreezeFlags& freeze, double weight_decay)
        : freeze_(freeze), weight_decay_(weight_decay) {
        for (const auto& tv : tensor_views(params)) {
            if (!trainable(tv.name)) continue;
            m_[tv.name] = MatX<S>::Zero(tv.view.rows(), tv.view.cols());
            v_[tv.name] = MatX<S>::Zero(tv.view.rows(), tv.view.cols());
        }
    }

    bool trainable(const std::string& name) const {
        if (name.rfind("encoder.", 0) == 0) return !freeze_.encoder;
        if (name.rfind("aligner.", 0) == 0) return !freeze_.aligner;
        if (name.rfind("llm.", 0) == 0) return !freeze_.llm;
        throw ConfigError("unknown parameter group for " + name);
    }

    long step_count() const { return t_; }
    void set_step_count(long t) { t_ = t; }

    double global_grad_norm(Vist2Params<S>& grads) {
        double sq = 0.0;
        for (const auto& tv : tensor_views(grads))
            if (trainable(tv.name)) sq += static_cast<double>(tv.view.squaredNorm());
        return std::sqrt(sq);
    }

    void update(Vist2Params<S>& params, Vist2Params<S>& grads, double lr) {
        ++t_;
        const S bc1 = static_cast<S>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
        const S bc2 = static_cast<S>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
        auto pviews = tensor_views(params);
        auto gviews = tensor_views(grads);
        for (std::size_t i = 0; i < pviews.size(); ++i) {
            if (!trainable(pviews[i].name)) continue;
            MatX<S>& m = m_.at(pviews[i].name);
            MatX<S>& v = v_.at(pviews[i].name);
            const auto& g = gviews[i].view;
            m = static_cast<S>(beta1_) * m + static_cast<S>(1.0 - beta1_) * g;
            v = (static_cast<S>(beta2_) * v.array() +
                 static_cast<S>(1.0 - beta2_) * g.array().square())
                    .matrix();
            pviews[i].view.array() -=
                static_cast<S>(lr) * ((m.array() / bc1) / ((v.array() / bc2).sqrt() +
                                                           static_cast<S>(eps_)) +
                                      static_cast<S>(weight_decay_) * pviews[i].view.array());
        }
    }

    template <class F>
    void for_each_state(F&& f) {
        for (auto& [name, m] : m_) f("adam.m." + name, m);
        for (auto& [name, v] : v_) f("adam.v." + name, v);
    }

private:
    FreezeFlags freeze_;
    double weight_decay_ = 1e-4;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::map<std::string, MatX<S>> m_, v_;
};

// ---------------------------------------------------------------------------
// Checkpoints: versioned container of named tensors with shape/dtype
// headers and a trailing content checksum; see docs/formats.md.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
}

template <class T>
void put_pod(std::vector<std::uint8_t>& out, T v) {
    put_bytes(out, &v, sizeof(v));
}

inline void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    put_bytes(out, s.data(), s.size());
}

struct ByteReader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void read(void* p, std::size_t n) {
        if (pos + n > buf.size()) throw CheckpointError("checkpoint truncated");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    template <class T>
    T pod() {
        T v;
        read(&v, sizeof(v));
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint32_t>();
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }
};

template <class S>
constexpr std::uint8_t dtype_tag() {
    return sizeof(S) == 4 ? 0 : 1;
}

}  // namespace detail

struct CheckpointMeta {
    Stage stage = Stage::kMtOcr;
    long step = 0;
    long adam_step = 0;
    std::string rng_state;
    std::uint64_t config_checksum = 0;
};

template <class S>
std::vector<std::uint8_t> serialize_checkpoint(Vist2Params<S>& params, AdamW<S>* optimizer,
                                               const CheckpointMeta& meta) {
    std::vector<std::uint8_t> out;
    detail::put_bytes(out, "VCKP", 4);
    detail::put_pod<std::uint32_t>(out, 1);
    detail::put_pod<std::uint64_t>(out, meta.config_checksum);
    detail::put_pod<std::uint8_t>(out, static_cast<std::uint8_t>(meta.stage));
    detail::put_pod<std::int64_t>(out, meta.step);
    detail::put_pod<std::int64_t>(out, meta.adam_step);
    detail::put_string(out, meta.rng_state);

    std::vector<std::pair<std::string, Eigen::Map<MatX<S>>>> tensors;
    for (auto& tv : tensor_views(params)) tensors.emplace_back(tv.name, tv.view);
    std::vector<std::pair<std::string, MatX<S>>> opt;
    if (optimizer)
        optimizer->for_each_state(
            [&opt](const std::string& name, MatX<S>& t) { opt.emplace_back(name, t); });
    detail::put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size() + opt.size()));
    auto put_tensor = [&out](const std::string& name, const auto& t) {
        detail::put_string(out, name);
        detail::put_pod<std::uint8_t>(out, detail::dtype_tag<S>());
        detail::put_pod<std::int64_t>(out, t.rows());
        detail::put_pod<std::int64_t>(out, t.cols());
        detail::put_bytes(out, t.data(), sizeof(S) * static_cast<std::size_t>(t.size()));
    };
    for (auto& [name, t] : tensors) put_tensor(name, t);
    for (auto& [name, t] : opt) put_tensor(name, t);

    detail::put_pod<std::uint64_t>(out, fnv1a(out.data(), out.size()));
    return out;
}

template <class S>
void save_checkpoint(const std::string& path, Vist2Params<S>& params, AdamW<S>* optimizer,
                     const CheckpointMeta& meta) {
    const auto bytes = serialize_checkpoint(params, optimizer, meta);
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// Loads into existing structures; tensor names, dtypes and shapes must
// match. Returns the stored metadata.
template <class S>
CheckpointMeta load_checkpoint(const std::string& path, Vist2Params<S>& params,
                                  AdamW<S>* optimizer) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() < 12) throw CheckpointError("checkpoint truncated");
    std::uint64_t stored = 0;
    std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
    if (fnv1a(buf.data(), buf.size() - 8) != stored)
        throw CheckpointError("checkpoint checksum mismatch");

    detail::ByteReader r{buf};
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, "VCKP", 4) != 0) throw CheckpointError("not a checkpoint file");
    if (r.pod<std::uint32_t>() != 1) throw CheckpointError("unsupported checkpoint version");
    CheckpointMeta meta;
    meta.config_checksum = r.pod<std::uint64_t>();
    meta.stage = static_cast<Stage>(r.pod<std::uint8_t>());
    meta.step = r.pod<std::int64_t>();
    meta.adam_step = r.pod<std::int64_t>();
    meta.rng_state = r.str();

    std::map<std::string, std::pair<std::pair<long, long>, std::size_t>> index;
    const auto count = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const auto dtype = r.pod<std::uint8_t>();
        if (dtype != detail::dtype_tag<S>())
            throw CheckpointError("checkpoint dtype mismatch for " + name);
        const long rows = r.pod<std::int64_t>();
        const long cols = r.pod<std::int64_t>();
        index[name] = {{rows, cols}, r.pos};
        r.pos += sizeof(S) * static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
        if (r.pos > buf.size()) throw CheckpointError("checkpoint truncated");
    }

    auto fill = [&buf, &index](const std::string& name, auto&& view) {
        const auto it = index.find(name);
        if (it == index.end()) throw CheckpointError("checkpoint is missing tensor " + name);
        const auto [shape, offset] = it->second;
        if (shape.first != view.rows() || shape.second != view.cols())
            throw CheckpointError("checkpoint shape mismatch for " + name);
        std::memcpy(view.data(), buf.data() + offset,
                    sizeof(S) * static_cast<std::size_t>(view.size()));
    };
    for (auto& tv : tensor_views(params)) fill(tv.name, tv.view);
    if (optimizer) {
        optimizer->for_each_state([&fill](const std::string& name, MatX<S>& t) {
            fill(name, Eigen::Map<MatX<S>>(t.data(), t.rows(), t.cols()));
        });
        optimizer->set_step_count(meta.adam_step);
    }
    return meta;
}

// ---------------------------------------------------------------------------
// Metrics log: append-only deterministic lines. Wall-clock throughput is
// intentionally kept out of the file (runs must replay byte-identically);
// the CLI reports tokens/sec on the console instead.
// ---------------------------------------------------------------------------

class MetricsLog {
public:
    MetricsLog() = default;
    MetricsLog(const std::string& path, const std::string& stage, std::uint64_t seed,
               std::uint64_t config_checksum, bool append) {
        if (path.empty()) return;
        std::filesystem::create_directories(std::filesystem::path(path).parent_path());
        file_.open(path, append ? std::ios::app : std::ios::trunc);
        if (!file_) throw IoError("cannot open metrics log " + path);
        if (!append)
            file_ << "# vist2 metrics v1 stage=" << stage << " seed=" << seed
                  << " config=" << hex64(config_checksum) << "\n";
    }

    void log(long step, const std::string& stage, double loss, double lr, long tokens) {
        if (!file_.is_open()) return;
        char line[160];
        std::snprintf(line, sizeof(line), "%ld %s %.8f %.8e %ld\n", step, stage.c_str(), loss,
                      lr, tokens);
        file_ << line;
        file_.flush();
    }

private:
    std::ofstream file_;
};

// ---------------------------------------------------------------------------
// Stage driver.
// ---------------------------------------------------------------------------

template <class S>
struct StageResult {
    std::vector<double> losses;
    long tokens_processed = 0;
    double seconds = 0.0;
};

struct StageRunOptions {
    std::string metrics_path;
    std::string checkpoint_dir;
    std::uint64_t config_checksum = 0;
    long start_step = 0;       // resume point
    std::string resume_rng;    // serialized Rng state when resuming
    long start_tokens = 0;
};

// The batch provider receives a per-step seed (drawn from the trainer RNG,
// which is checkpointed) and the stage progress fraction in [0, 1].
template <class S>
using BatchProvider =
    std::function<std::vector<BuiltSample<S>>(std::uint64_t batch_seed, double progress)>;

template <class S>
StageResult<S> run_stage(Pipeline<S>& pipeline, const StageConfig& cfg,
                         const BatchProvider<S>& provider, AdamW<S>& optimizer,
                         const StageRunOptions& opts = {}) {
    cfg.validate();
    const auto t_begin = std::chrono::steady_clock::now();
    Rng rng(cfg.seed);
    if (!opts.resume_rng.empty()) rng.deserialize(opts.resume_rng);
    MetricsLog log(opts.metrics_path, stage_name(cfg.stage), cfg.seed, opts.config_checksum,
                   opts.start_step > 0);

    StageResult<S> result;
    result.tokens_processed = opts.start_tokens;
    Vist2Params<S> grads = pipeline.zero_grads();
    const bool need_encoder_grads = !cfg.freeze.encoder || !cfg.freeze.aligner;

    for (long step = opts.start_step; step < cfg.max_steps; ++step) {
        const double lr = cosine_lr(step, cfg.max_steps, cfg.learning_rate, cfg.warmup_ratio);
        const double progress = static_cast<double>(step) / cfg.max_steps;
        const std::uint64_t batch_seed = rng.next_u64();
        const auto batch = provider(batch_seed, progress);
        if (batch.empty()) throw ConfigError("batch provider returned no samples");

        set_zero(grads);
        double loss_sum = 0.0;
        for (const BuiltSample<S>& sample : batch) {
            const auto r = train_sample(pipeline, sample, grads, need_encoder_grads);
            loss_sum += r.loss;
            result.tokens_processed += r.total_tokens;
        }
        const double loss = loss_sum / static_cast<double>(batch.size());
        if (!std::isfinite(loss)) {
            if (!opts.checkpoint_dir.empty()) {
                CheckpointMeta meta{cfg.stage, step, optimizer.step_count(),
                                       rng.serialize(), opts.config_checksum};
                save_checkpoint(opts.checkpoint_dir + "/diagnostic_nan.ckpt",
                                pipeline.params(), &optimizer, meta);
            }
            throw std::runtime_error("non-finite loss at step " + std::to_string(step) +
                                     "; diagnostic snapshot saved");
        }
        const S batch_scale = S(1) / static_cast<S>(batch.size());
        for (auto& tv : tensor_views(grads)) tv.view *= batch_scale;
        if (cfg.grad_clip > 0) {
            const double norm = optimizer.global_grad_norm(grads);
            if (norm > cfg.grad_clip) {
                const S scale = static_cast<S>(cfg.grad_clip / norm);
                for (auto& tv : tensor_views(grads)) tv.view *= scale;
            }
        }
        optimizer.update(pipeline.params(), grads, lr);

        result.losses.push_back(loss);
        log.log(step, stage_name(cfg.stage), loss, lr, result.tokens_processed);
        const bool at_interval =
            cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0;
        if (!opts.checkpoint_dir.empty() && (at_interval || step + 1 == cfg.max_steps)) {
            CheckpointMeta meta{cfg.stage, step + 1, optimizer.step_count(),
                                   rng.serialize(), opts.config_checksum};
            save_checkpoint(opts.checkpoint_dir + "/stage_" +
                                std::string(stage_name(cfg.stage)) + "_step" +
                                std::to_string(step + 1) + ".ckpt",
                            pipeline.params(), &optimizer, meta);
        }
    }
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return result;
}

}  // namespace vist
