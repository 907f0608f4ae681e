#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "prcnn/tensor.hpp"

namespace prcnn {

// Axis the length-3 kernel extent runs along. The padded axis follows it.
enum class ConvAxis { time, frequency };

// Convolution over [C x T x F] with a 3x1 kernel and one zero frame of
// padding on each side of the convolved axis ("same" output extents).
struct ConvLayer {
    Tensor kernels;  // [out_ch x in_ch x 3 x 1]
    Tensor bias;     // [out_ch]

    std::size_t out_channels() const { return kernels.extent(0); }
    std::size_t in_channels() const { return kernels.extent(1); }

    static ConvLayer init(std::size_t out_ch, std::size_t in_ch, Rng& rng);
    static ConvLayer zeros(std::size_t out_ch, std::size_t in_ch);
};

struct ConvCache {
    Tensor padded_input;  // input padded along the convolved axis
    ConvAxis axis = ConvAxis::time;
};

struct ConvGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};

std::pair<Tensor, ConvCache> conv_forward(const Tensor& input, const ConvLayer& layer,
                                          ConvAxis axis = ConvAxis::time);
ConvGrads conv_backward(const ConvCache& cache, const ConvLayer& layer,
                        const Tensor& upstream);

// Non-overlapping max pooling; window == stride, floor semantics for
// indivisible extents (trailing remainder discarded).
struct PoolSpec {
    std::size_t h = 2;  // time window
    std::size_t w = 2;  // frequency window
};

struct PoolCache {
    std::vector<std::size_t> input_shape;
    std::vector<std::size_t> argmax;  // flat input index of each window winner
};

std::pair<Tensor, PoolCache> maxpool_forward(const Tensor& input, const PoolSpec& spec);
Tensor maxpool_backward(const PoolCache& cache, const Tensor& upstream);

struct ReluCache {
    std::vector<bool> positive;  // mask; subgradient at 0 is 0
};

std::pair<Tensor, ReluCache> relu_forward(const Tensor& input);
Tensor relu_backward(const ReluCache& cache, const Tensor& upstream);

struct DenseLayer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]

    std::size_t out_dim() const { return weight.extent(0); }
    std::size_t in_dim() const { return weight.extent(1); }

    static DenseLayer init(std::size_t out, std::size_t in, Rng& rng);
    static DenseLayer zeros(std::size_t out, std::size_t in);
};

struct DenseCache {
    Tensor input;
};

struct DenseGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

std::pair<Tensor, DenseCache> dense_forward(const Tensor& input, const DenseLayer& layer);
DenseGrads dense_backward(const DenseCache& cache, const DenseLayer& layer,
                          const Tensor& upstream);

// Max-shifted softmax over a rank-1 logits vector.
Tensor softmax(const Tensor& logits);

// -ln(probs[label]); probs must come from softmax.
double cross_entropy(const Tensor& probs, std::size_t label);

// Gradient of cross_entropy(softmax(logits), label) w.r.t. logits.
Tensor softmax_cross_entropy_backward(const Tensor& probs, std::size_t label);

double sigmoid(double x);

}  // namespace prcnn
