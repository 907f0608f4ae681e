#include "prcnn/nn_layers.hpp"

#include <algorithm>
#include <cmath>

namespace prcnn {

namespace {

// pad one zero slice on each side of axis 1 (time) or axis 2 (frequency)
Tensor pad_axis(const Tensor& t, ConvAxis axis) {
    if (axis == ConvAxis::time) return pad_time_axis(t, 1);
    const std::size_t c = t.extent(0), tt = t.extent(1), f = t.extent(2);
    Tensor out({c, tt, f + 2});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < tt; ++i) {
            const double* src = t.data() + (ch * tt + i) * f;
            double* dst = out.data() + (ch * tt + i) * (f + 2) + 1;
            std::copy(src, src + f, dst);
        }
    }
    return out;
}

Tensor crop_axis(const Tensor& t, ConvAxis axis) {
    if (axis == ConvAxis::time) return crop_time_axis(t, 1);
    const std::size_t c = t.extent(0), tt = t.extent(1), fp = t.extent(2);
    const std::size_t f = fp - 2;
    Tensor out({c, tt, f});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < tt; ++i) {
            const double* src = t.data() + (ch * tt + i) * fp + 1;
            std::copy(src, src + f, out.data() + (ch * tt + i) * f);
        }
    }
    return out;
}

}  // namespace

ConvLayer ConvLayer::init(std::size_t out_ch, std::size_t in_ch, Rng& rng) {
    ConvLayer l;
    l.kernels = uniform_scaled({out_ch, in_ch, 3, 1}, in_ch * 3, out_ch * 3, rng);
    // small nonzero biases keep dead-window pre-activations off the ReLU kink,
    // where finite-difference gradient verification is ill-defined
    l.bias = uniform_scaled({out_ch}, in_ch * 3, out_ch * 3, rng);
    return l;
}

ConvLayer ConvLayer::zeros(std::size_t out_ch, std::size_t in_ch) {
    return ConvLayer{Tensor({out_ch, in_ch, 3, 1}), Tensor({out_ch})};
}

std::pair<Tensor, ConvCache> conv_forward(const Tensor& input, const ConvLayer& layer,
                                          ConvAxis axis) {
    if (input.rank() != 3) {
        throw DimensionError("conv_forward expects [CxTxF], got " + input.shape_string());
    }
    if (input.extent(0) != layer.in_channels()) {
        throw DimensionError("conv_forward channel mismatch: input " + input.shape_string() +
                             " vs kernels " + layer.kernels.shape_string());
    }
    const std::size_t ci = layer.in_channels(), co = layer.out_channels();
    const std::size_t tt = input.extent(1), f = input.extent(2);
    Tensor padded = pad_axis(input, axis);
    Tensor out({co, tt, f});
    const std::size_t pt = padded.extent(1), pf = padded.extent(2);

    for (std::size_t o = 0; o < co; ++o) {
        double* oplane = out.data() + o * tt * f;
        const double b = layer.bias[o];
        for (std::size_t i = 0; i < tt * f; ++i) oplane[i] = b;
        for (std::size_t c = 0; c < ci; ++c) {
            const double* iplane = padded.data() + c * pt * pf;
            for (std::size_t d = 0; d < 3; ++d) {
                const double k = layer.kernels(o, c, d, 0);
                if (axis == ConvAxis::time) {
                    for (std::size_t t = 0; t < tt; ++t) {
                        const double* irow = iplane + (t + d) * pf;
                        double* orow = oplane + t * f;
                        for (std::size_t j = 0; j < f; ++j) orow[j] += k * irow[j];
                    }
                } else {
                    for (std::size_t t = 0; t < tt; ++t) {
                        const double* irow = iplane + t * pf + d;
                        double* orow = oplane + t * f;
                        for (std::size_t j = 0; j < f; ++j) orow[j] += k * irow[j];
                    }
                }
            }
        }
    }
    return {std::move(out), ConvCache{std::move(padded), axis}};
}

ConvGrads conv_backward(const ConvCache& cache, const ConvLayer& layer,
                        const Tensor& upstream) {
    const Tensor& padded = cache.padded_input;
    const std::size_t ci = layer.in_channels(), co = layer.out_channels();
    const std::size_t tt = upstream.extent(1), f = upstream.extent(2);
    const std::size_t pt = padded.extent(1), pf = padded.extent(2);
    if (upstream.extent(0) != co) {
        throw DimensionError("conv_backward upstream channels " + upstream.shape_string() +
                             " do not match kernels " + layer.kernels.shape_string());
    }

    ConvGrads g;
    g.kernels = Tensor({co, ci, 3, 1});
    g.bias = Tensor({co});
    Tensor padded_grad({ci, pt, pf});

    for (std::size_t o = 0; o < co; ++o) {
        const double* uplane = upstream.data() + o * tt * f;
        double acc = 0.0;
        for (std::size_t i = 0; i < tt * f; ++i) acc += uplane[i];
        g.bias[o] = acc;
        for (std::size_t c = 0; c < ci; ++c) {
            const double* iplane = padded.data() + c * pt * pf;
            double* gplane = padded_grad.data() + c * pt * pf;
            for (std::size_t d = 0; d < 3; ++d) {
                const double k = layer.kernels(o, c, d, 0);
                double kg = 0.0;
                if (cache.axis == ConvAxis::time) {
                    for (std::size_t t = 0; t < tt; ++t) {
                        const double* irow = iplane + (t + d) * pf;
                        double* grow = gplane + (t + d) * pf;
                        const double* urow = uplane + t * f;
                        for (std::size_t j = 0; j < f; ++j) {
                            kg += urow[j] * irow[j];
                            grow[j] += k * urow[j];
                        }
                    }
                } else {
                    for (std::size_t t = 0; t < tt; ++t) {
                        const double* irow = iplane + t * pf + d;
                        double* grow = gplane + t * pf + d;
                        const double* urow = uplane + t * f;
                        for (std::size_t j = 0; j < f; ++j) {
                            kg += urow[j] * irow[j];
                            grow[j] += k * urow[j];
                        }
                    }
                }
                g.kernels(o, c, d, 0) += kg;
            }
        }
    }
    g.input = crop_axis(padded_grad, cache.axis);
    return g;
}

std::pair<Tensor, PoolCache> maxpool_forward(const Tensor& input, const PoolSpec& spec) {
    if (input.rank() != 3) {
        throw DimensionError("maxpool_forward expects [CxTxF], got " + input.shape_string());
    }
    const std::size_t c = input.extent(0), tt = input.extent(1), f = input.extent(2);
    const std::size_t ot = tt / spec.h, of = f / spec.w;
    if (ot == 0 || of == 0) {
        throw DimensionError("pool window " + std::to_string(spec.h) + "x" +
                             std::to_string(spec.w) + " larger than input " +
                             input.shape_string());
    }
    Tensor out({c, ot, of});
    PoolCache cache;
    cache.input_shape = input.shape();
    cache.argmax.resize(out.size());
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < ot; ++i) {
            for (std::size_t j = 0; j < of; ++j) {
                std::size_t best = (ch * tt + i * spec.h) * f + j * spec.w;
                double best_v = input[best];
                for (std::size_t di = 0; di < spec.h; ++di) {
                    for (std::size_t dj = 0; dj < spec.w; ++dj) {
                        const std::size_t idx =
                            (ch * tt + i * spec.h + di) * f + j * spec.w + dj;
                        if (input[idx] > best_v) {  // ties keep the lowest flat index
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                }
                out(ch, i, j) = best_v;
                cache.argmax[(ch * ot + i) * of + j] = best;
            }
        }
    }
    return {std::move(out), std::move(cache)};
}

Tensor maxpool_backward(const PoolCache& cache, const Tensor& upstream) {
    if (upstream.size() != cache.argmax.size()) {
        throw DimensionError("maxpool_backward upstream " + upstream.shape_string() +
                             " does not match cached output size " +
                             std::to_string(cache.argmax.size()));
    }
    Tensor grad(cache.input_shape);
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        grad[cache.argmax[i]] += upstream[i];
    }
    return grad;
}

std::pair<Tensor, ReluCache> relu_forward(const Tensor& input) {
    Tensor out = input;
    ReluCache cache;
    cache.positive.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const bool pos = input[i] > 0.0;
        cache.positive[i] = pos;
        if (!pos) out[i] = 0.0;
    }
    return {std::move(out), std::move(cache)};
}

Tensor relu_backward(const ReluCache& cache, const Tensor& upstream) {
    if (upstream.size() != cache.positive.size()) {
        throw DimensionError("relu_backward upstream " + upstream.shape_string() +
                             " does not match cached size " +
                             std::to_string(cache.positive.size()));
    }
    Tensor grad = upstream;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!cache.positive[i]) grad[i] = 0.0;
    }
    return grad;
}

DenseLayer DenseLayer::init(std::size_t out, std::size_t in, Rng& rng) {
    return DenseLayer{uniform_scaled({out, in}, in, out, rng), Tensor({out})};
}

DenseLayer DenseLayer::zeros(std::size_t out, std::size_t in) {
    return DenseLayer{Tensor({out, in}), Tensor({out})};
}

std::pair<Tensor, DenseCache> dense_forward(const Tensor& input, const DenseLayer& layer) {
    if (input.rank() != 1 || input.extent(0) != layer.in_dim()) {
        throw DimensionError("dense_forward input " + input.shape_string() +
                             " does not match weight " + layer.weight.shape_string());
    }
    Tensor out = matvec(layer.weight, input);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += layer.bias[i];
    return {std::move(out), DenseCache{input}};
}

DenseGrads dense_backward(const DenseCache& cache, const DenseLayer& layer,
                          const Tensor& upstream) {
    if (upstream.rank() != 1 || upstream.extent(0) != layer.out_dim()) {
        throw DimensionError("dense_backward upstream " + upstream.shape_string() +
                             " does not match weight " + layer.weight.shape_string());
    }
    DenseGrads g;
    g.bias = upstream;
    g.input = matvec_transposed(layer.weight, upstream);
    const std::size_t out = layer.out_dim(), in = layer.in_dim();
    g.weight = Tensor({out, in});
    for (std::size_t i = 0; i < out; ++i) {
        const double u = upstream[i];
        double* wrow = g.weight.data() + i * in;
        for (std::size_t j = 0; j < in; ++j) wrow[j] = u * cache.input[j];
    }
    return g;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1) {
        throw DimensionError("softmax expects a rank-1 tensor, got " + logits.shape_string());
    }
    const double mx = *std::max_element(logits.data(), logits.data() + logits.size());
    Tensor out = logits;
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= sum;
    return out;
}

double cross_entropy(const Tensor& probs, std::size_t label) {
    if (label >= probs.size()) {
        throw ArgumentError("label " + std::to_string(label) + " out of range for " +
                            std::to_string(probs.size()) + " classes");
    }
    return -std::log(probs[label]);
}

Tensor softmax_cross_entropy_backward(const Tensor& probs, std::size_t label) {
    if (label >= probs.size()) {
        throw ArgumentError("label " + std::to_string(label) + " out of range for " +
                            std::to_string(probs.size()) + " classes");
    }
    Tensor grad = probs;
    grad[label] -= 1.0;
    return grad;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace prcnn
