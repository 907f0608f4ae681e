#include "prcnn/model.hpp"

#include <algorithm>

namespace prcnn {

ModelConfig ModelConfig::reduced() {
    ModelConfig c;
    c.input_time = 16;
    c.input_freq = 32;
    c.conv_filters = {2, 2, 2, 2, 2};
    c.pools = {{2, 2}, {2, 2}, {2, 2}, {1, 2}, {1, 2}};
    c.embed_dim = 8;
    c.hidden_size = 3;
    c.bgru_layers = 2;
    c.class_count = 4;
    return c;
}

std::size_t ModelConfig::cnn_feature_dim() const {
    std::size_t t = input_time, f = input_freq;
    for (const PoolSpec& p : pools) {
        t /= p.h;
        f /= p.w;
        if (t == 0 || f == 0) {
            throw DimensionError("pool chain exhausts the input: " +
                                 shape_string({input_time, input_freq}));
        }
    }
    return conv_filters.back() * t * f;
}

std::size_t ModelConfig::rnn_feature_dim() const { return bgru_layers * 2 * hidden_size; }

std::size_t ModelConfig::fused_dim() const {
    const std::size_t c = cnn_feature_dim(), r = rnn_feature_dim();
    if (fusion_mode == FusionMode::concat) return c + r;
    if (c != r) {
        throw ArgumentError("add fusion requires equal feature lengths, got " +
                            std::to_string(c) + " and " + std::to_string(r));
    }
    return c;
}

ModelParams ModelParams::init(const ModelConfig& config, Seed seed) {
    Rng rng(seed.value);
    ModelParams p;
    std::size_t in_ch = 1;
    for (std::size_t f : config.conv_filters) {
        p.convs.push_back(ConvLayer::init(f, in_ch, rng));
        in_ch = f;
    }
    p.embedding = DenseLayer::init(config.embed_dim, config.rnn_pooled_freq(), rng);
    std::size_t d = config.embed_dim;
    for (std::size_t i = 0; i < config.bgru_layers; ++i) {
        p.bgru.push_back(BgruLayer::init(config.hidden_size, d, rng));
        d = 2 * config.hidden_size;
    }
    p.head = DenseLayer::init(config.class_count, config.fused_dim(), rng);
    return p;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
    ModelParams p;
    std::size_t in_ch = 1;
    for (std::size_t f : config.conv_filters) {
        p.convs.push_back(ConvLayer::zeros(f, in_ch));
        in_ch = f;
    }
    p.embedding = DenseLayer::zeros(config.embed_dim, config.rnn_pooled_freq());
    std::size_t d = config.embed_dim;
    for (std::size_t i = 0; i < config.bgru_layers; ++i) {
        p.bgru.push_back(BgruLayer::zeros(config.hidden_size, d));
        d = 2 * config.hidden_size;
    }
    p.head = DenseLayer::zeros(config.class_count, config.fused_dim());
    return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    static const char* gru_names[] = {"U_u", "U_r", "U", "W_u", "W_r", "W",
                                      "b_u", "b_r", "b"};
    for (std::size_t i = 0; i < convs.size(); ++i) {
        const std::string base = "conv" + std::to_string(i + 1);
        out.emplace_back(base + ".kernels", &convs[i].kernels);
        out.emplace_back(base + ".bias", &convs[i].bias);
    }
    out.emplace_back("embedding.weight", &embedding.weight);
    out.emplace_back("embedding.bias", &embedding.bias);
    for (std::size_t i = 0; i < bgru.size(); ++i) {
        const std::string base = "bgru" + std::to_string(i + 1);
        auto fwd = bgru[i].forward_params.tensors();
        for (std::size_t k = 0; k < fwd.size(); ++k) {
            out.emplace_back(base + ".forward." + gru_names[k], fwd[k]);
        }
        auto bwd = bgru[i].backward_params.tensors();
        for (std::size_t k = 0; k < bwd.size(); ++k) {
            out.emplace_back(base + ".backward." + gru_names[k], bwd[k]);
        }
    }
    out.emplace_back("head.weight", &head.weight);
    out.emplace_back("head.bias", &head.bias);
    return out;
}

std::vector<Tensor*> ModelParams::tensors() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named_tensors()) out.push_back(t);
    return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
    auto mutable_list = const_cast<ModelParams*>(this)->tensors();
    return {mutable_list.begin(), mutable_list.end()};
}

std::size_t ModelParams::flat_size() const {
    std::size_t n = 0;
    for (const Tensor* t : tensors()) n += t->size();
    return n;
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(flat_size());
    for (const Tensor* t : tensors()) {
        flat.insert(flat.end(), t->data(), t->data() + t->size());
    }
    return flat;
}

void ModelParams::unflatten(const std::vector<double>& flat) {
    if (flat.size() != flat_size()) {
        throw DimensionError("flattened length " + std::to_string(flat.size()) +
                             " does not match parameter count " +
                             std::to_string(flat_size()));
    }
    std::size_t offset = 0;
    for (Tensor* t : tensors()) {
        std::copy(flat.begin() + offset, flat.begin() + offset + t->size(), t->data());
        offset += t->size();
    }
}

std::pair<Tensor, CnnBlockTrace> cnn_block_forward(const Tensor& spec,
                                                   const ModelParams& params,
                                                   const ModelConfig& config) {
    if (spec.rank() != 3 || spec.extent(0) != 1 || spec.extent(1) != config.input_time ||
        spec.extent(2) != config.input_freq) {
        throw DimensionError("cnn block expects [1x" + std::to_string(config.input_time) +
                             "x" + std::to_string(config.input_freq) + "], got " +
                             spec.shape_string());
    }
    CnnBlockTrace trace;
    Tensor act = spec;
    for (std::size_t i = 0; i < params.convs.size(); ++i) {
        auto [conv_out, conv_cache] = conv_forward(act, params.convs[i], config.conv_axis);
        trace.conv_caches.push_back(std::move(conv_cache));
        auto [relu_out, relu_cache] = relu_forward(conv_out);
        trace.relu_caches.push_back(std::move(relu_cache));
        auto [pool_out, pool_cache] = maxpool_forward(relu_out, config.pools[i]);
        trace.pool_caches.push_back(std::move(pool_cache));
        act = std::move(pool_out);
    }
    trace.final_shape = act.shape();
    Tensor feature({act.size()}, act.values());
    return {std::move(feature), std::move(trace)};
}

std::pair<Tensor, BirnnBlockTrace> birnn_block_forward(const Tensor& spec,
                                                       const ModelParams& params,
                                                       const ModelConfig& config) {
    if (spec.rank() != 2 || spec.extent(0) != config.input_time ||
        spec.extent(1) != config.input_freq) {
        throw DimensionError("birnn block expects [" + std::to_string(config.input_time) +
                             "x" + std::to_string(config.input_freq) + "], got " +
                             spec.shape_string());
    }
    BirnnBlockTrace trace;
    Tensor as3({1, spec.extent(0), spec.extent(1)}, spec.values());
    auto [pooled3, pool_cache] = maxpool_forward(as3, PoolSpec{1, config.rnn_pool_width});
    trace.pool_cache = std::move(pool_cache);

    const std::size_t steps = pooled3.extent(1), freq = pooled3.extent(2);
    Tensor embedded({steps, config.embed_dim});
    trace.embed_caches.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        Tensor frame({freq});
        std::copy(pooled3.data() + t * freq, pooled3.data() + (t + 1) * freq, frame.data());
        auto [emb, cache] = dense_forward(frame, params.embedding);
        std::copy(emb.data(), emb.data() + emb.size(), embedded.data() + t * config.embed_dim);
        trace.embed_caches.push_back(std::move(cache));
    }

    trace.stacked = stacked_bgru_forward(embedded, params.bgru, config.summary_mode);
    Tensor feature = trace.stacked.feature;
    return {std::move(feature), std::move(trace)};
}

Tensor fuse(const Tensor& cnn_feat, const Tensor& rnn_feat, FusionMode mode) {
    if (mode == FusionMode::add) {
        return zip_elementwise(cnn_feat, rnn_feat, [](double a, double b) { return a + b; });
    }
    Tensor out({cnn_feat.size() + rnn_feat.size()});
    std::copy(cnn_feat.data(), cnn_feat.data() + cnn_feat.size(), out.data());
    std::copy(rnn_feat.data(), rnn_feat.data() + rnn_feat.size(),
              out.data() + cnn_feat.size());
    return out;
}

std::pair<Tensor, ForwardTrace> model_forward(const Tensor& spec, const ModelParams& params,
                                              const ModelConfig& config) {
    if (spec.rank() != 2 || spec.extent(0) != config.input_time ||
        spec.extent(1) != config.input_freq) {
        throw DimensionError("model_forward expects [" + std::to_string(config.input_time) +
                             "x" + std::to_string(config.input_freq) + "], got " +
                             spec.shape_string());
    }
    ForwardTrace trace;
    Tensor as3({1, spec.extent(0), spec.extent(1)}, spec.values());
    auto [cnn_feat, cnn_trace] = cnn_block_forward(as3, params, config);
    auto [rnn_feat, rnn_trace] = birnn_block_forward(spec, params, config);
    trace.cnn = std::move(cnn_trace);
    trace.rnn = std::move(rnn_trace);
    trace.cnn_feature = cnn_feat;
    trace.rnn_feature = rnn_feat;

    Tensor fused = fuse(cnn_feat, rnn_feat, config.fusion_mode);
    auto [logits, head_cache] = dense_forward(fused, params.head);
    trace.head_cache = std::move(head_cache);
    trace.probs = softmax(logits);
    Tensor probs = trace.probs;
    return {std::move(probs), std::move(trace)};
}

ModelParams model_backward(const ForwardTrace& trace, std::size_t label,
                           const ModelParams& params, const ModelConfig& config) {
    if (label >= config.class_count) {
        throw ArgumentError("label " + std::to_string(label) + " out of range for " +
                            std::to_string(config.class_count) + " classes");
    }
    ModelParams grads = ModelParams::zeros(config);

    Tensor d_logits = softmax_cross_entropy_backward(trace.probs, label);
    DenseGrads head_g = dense_backward(trace.head_cache, params.head, d_logits);
    grads.head.weight = std::move(head_g.weight);
    grads.head.bias = std::move(head_g.bias);

    // fusion backward: add copies the gradient to both branches, concat slices it
    const std::size_t cnn_dim = trace.cnn_feature.size();
    const std::size_t rnn_dim = trace.rnn_feature.size();
    Tensor d_cnn({cnn_dim}), d_rnn({rnn_dim});
    if (config.fusion_mode == FusionMode::add) {
        d_cnn = head_g.input;
        d_rnn = head_g.input;
    } else {
        std::copy(head_g.input.data(), head_g.input.data() + cnn_dim, d_cnn.data());
        std::copy(head_g.input.data() + cnn_dim, head_g.input.data() + cnn_dim + rnn_dim,
                  d_rnn.data());
    }

    // CNN branch
    Tensor act_grad(trace.cnn.final_shape, d_cnn.values());
    for (std::size_t i = params.convs.size(); i-- > 0;) {
        Tensor relu_up = maxpool_backward(trace.cnn.pool_caches[i], act_grad);
        Tensor conv_up = relu_backward(trace.cnn.relu_caches[i], relu_up);
        ConvGrads cg = conv_backward(trace.cnn.conv_caches[i], params.convs[i], conv_up);
        grads.convs[i].kernels = std::move(cg.kernels);
        grads.convs[i].bias = std::move(cg.bias);
        act_grad = std::move(cg.input);
    }

    // recurrent branch
    StackedBgruGrads sg =
        stacked_bgru_backward(trace.rnn.stacked, params.bgru, d_rnn, config.summary_mode);
    grads.bgru = std::move(sg.layers);

    const std::size_t steps = sg.seq.extent(0);
    const std::size_t pooled_freq = config.rnn_pooled_freq();
    Tensor d_pooled({1, steps, pooled_freq});
    for (std::size_t t = 0; t < steps; ++t) {
        Tensor up({config.embed_dim});
        std::copy(sg.seq.data() + t * config.embed_dim,
                  sg.seq.data() + (t + 1) * config.embed_dim, up.data());
        DenseGrads eg = dense_backward(trace.rnn.embed_caches[t], params.embedding, up);
        add_inplace(grads.embedding.weight, eg.weight);
        add_inplace(grads.embedding.bias, eg.bias);
        std::copy(eg.input.data(), eg.input.data() + pooled_freq,
                  d_pooled.data() + t * pooled_freq);
    }
    maxpool_backward(trace.rnn.pool_cache, d_pooled);  // input gradient not propagated further

    return grads;
}

}  // namespace prcnn
