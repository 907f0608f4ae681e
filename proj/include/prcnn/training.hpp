#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prcnn/audio.hpp"
#include "prcnn/model.hpp"

namespace prcnn {

enum class OptimizerKind { sgd, adam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;        // sgd
    double beta1 = 0.9;           // adam
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step_count = 0;
    std::vector<Tensor> velocity;         // sgd, mirrors parameter shapes
    std::vector<Tensor> first_moment;     // adam
    std::vector<Tensor> second_moment;    // adam

    static OptimizerState make_sgd(double lr, double momentum, const ModelParams& shape);
    static OptimizerState make_adam(double lr, const ModelParams& shape);
};

// One optimizer step; throws on params/grads structural mismatch.
void optimizer_apply(ModelParams& params, const ModelParams& grads, OptimizerState& state);

// Scales gradients so their global L2 norm is at most max_norm.
void clip_global_norm(ModelParams& grads, double max_norm);

struct Checkpoint {
    std::uint32_t version = 1;
    ModelConfig config;
    NormStats norm_stats;
    std::vector<std::string> label_names;
    std::vector<double> flat_params;  // canonical order
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// ".prcnn-ckpt": magic "PCKP", version, length-prefixed JSON header,
// little-endian f64 parameters, trailing CRC-32.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

ModelParams params_from_checkpoint(const Checkpoint& ckpt);

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    Seed seed{0};
    double learning_rate = 1e-3;
    std::optional<double> clip_norm;  // global-norm clipping, off by default
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.9;
    bool deterministic = false;  // serial execution, zeroed wall-clock fields
    std::size_t threads = 0;     // 0 = hardware concurrency (capped at 8)
    ModelConfig model;
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> metrics;
    bool diverged = false;
    std::string diagnostic;
};

using EpochCallback = std::function<bool(const EpochMetrics&)>;  // return false to stop

TrainResult train(const Shard& train_shard, const std::vector<std::string>& label_names,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

enum class Aggregation { per_clip, per_song_majority };

struct EvalResult {
    double accuracy = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // rows = true class
    std::size_t total = 0;
};

EvalResult evaluate(const ModelParams& params, const ModelConfig& config,
                    const NormStats& stats, const Shard& shard, Aggregation aggregation);

struct GradCheckConfig {
    Seed seed{0};
    double epsilon = 1e-6;
    bool reduced = true;
    std::size_t sample_size = 500;  // coordinate sample on the full model
    bool corrupt_relu = false;      // fault injection for harness sensitivity tests
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t coordinates_checked = 0;
};

GradCheckReport gradient_check(const GradCheckConfig& config);

}  // namespace prcnn
