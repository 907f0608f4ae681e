#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "prcnn/nn_layers.hpp"
#include "prcnn/recurrent.hpp"
#include "prcnn/tensor.hpp"

namespace prcnn {

enum class FusionMode { add, concat };

// Full architecture description. Defaults follow the published network:
// 128x513 input, five conv-pool stages (16/32/64/128/64 filters, pools
// 2x2 2x2 2x2 4x4 4x4), a 1x2 frequency pool plus 256->128 embedding in
// front of the recurrent branch, hidden size 64 per direction.
struct ModelConfig {
    FusionMode fusion_mode = FusionMode::concat;
    ConvAxis conv_axis = ConvAxis::time;
    std::size_t bgru_layers = 1;
    std::size_t hidden_size = 64;
    std::size_t class_count = 10;
    SummaryMode summary_mode = SummaryMode::final_states;

    std::size_t input_time = 128;
    std::size_t input_freq = 513;
    std::vector<std::size_t> conv_filters{16, 32, 64, 128, 64};
    std::vector<PoolSpec> pools{{2, 2}, {2, 2}, {2, 2}, {4, 4}, {4, 4}};
    std::size_t rnn_pool_width = 2;
    std::size_t embed_dim = 128;

    // small variant for exhaustive finite-difference checks
    static ModelConfig reduced();

    std::size_t cnn_feature_dim() const;
    std::size_t rnn_feature_dim() const;
    std::size_t fused_dim() const;  // throws ArgumentError for add with unequal dims
    std::size_t rnn_pooled_freq() const { return input_freq / rnn_pool_width; }
};

struct ModelParams {
    std::vector<ConvLayer> convs;
    DenseLayer embedding;  // applied per frame
    std::vector<BgruLayer> bgru;
    DenseLayer head;

    static ModelParams init(const ModelConfig& config, Seed seed);
    static ModelParams zeros(const ModelConfig& config);

    std::vector<std::pair<std::string, Tensor*>> named_tensors();
    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;

    std::size_t flat_size() const;
    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& flat);
};

struct CnnBlockTrace {
    std::vector<ConvCache> conv_caches;
    std::vector<ReluCache> relu_caches;
    std::vector<PoolCache> pool_caches;
    std::vector<std::size_t> final_shape;  // pre-flatten activation shape
};

struct BirnnBlockTrace {
    PoolCache pool_cache;
    std::vector<DenseCache> embed_caches;  // one per frame
    StackedBgruResult stacked;
};

struct ForwardTrace {
    CnnBlockTrace cnn;
    BirnnBlockTrace rnn;
    Tensor cnn_feature;
    Tensor rnn_feature;
    DenseCache head_cache;
    Tensor probs;
};

std::pair<Tensor, CnnBlockTrace> cnn_block_forward(const Tensor& spec,
                                                   const ModelParams& params,
                                                   const ModelConfig& config);

std::pair<Tensor, BirnnBlockTrace> birnn_block_forward(const Tensor& spec,
                                                       const ModelParams& params,
                                                       const ModelConfig& config);

Tensor fuse(const Tensor& cnn_feat, const Tensor& rnn_feat, FusionMode mode);

std::pair<Tensor, ForwardTrace> model_forward(const Tensor& spec, const ModelParams& params,
                                              const ModelConfig& config);

// Gradients use the same structure as the parameters.
ModelParams model_backward(const ForwardTrace& trace, std::size_t label,
                           const ModelParams& params, const ModelConfig& config);

}  // namespace prcnn
