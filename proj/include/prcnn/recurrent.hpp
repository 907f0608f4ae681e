#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "prcnn/tensor.hpp"

namespace prcnn {

// GRU weight record. The gate convention follows
//   u = sigma(b_u + U_u x + W_u h_prev)
//   r = sigma(b_r + U_r x + W_r h_prev)
//   h~ = tanh(b + U x + W (r * h_prev))
//   h = u * h~ + (1 - u) * h_prev
// i.e. the update gate multiplies the candidate.
struct GruParams {
    Tensor U_u, U_r, U;  // [H x D]
    Tensor W_u, W_r, W;  // [H x H]
    Tensor b_u, b_r, b;  // [H]

    std::size_t hidden() const { return U.extent(0); }
    std::size_t input_dim() const { return U.extent(1); }

    static GruParams init(std::size_t hidden, std::size_t input_dim, Rng& rng);
    static GruParams zeros(std::size_t hidden, std::size_t input_dim);

    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
};

struct GruStepTrace {
    Tensor x;        // input at this step
    Tensor h_carry;  // state carried into this step
    Tensor u;        // update gate
    Tensor r;        // reset gate
    Tensor h_cand;   // candidate activation
    Tensor h;        // new state
};

enum class Direction { forward, backward };

std::pair<Tensor, GruStepTrace> gru_step(const Tensor& x, const Tensor& h_carry,
                                         const GruParams& p);

struct GruRunResult {
    Tensor states;  // [T x H], original time order in both directions
    std::vector<GruStepTrace> traces;  // in computation order
};

GruRunResult gru_run_direction(const Tensor& seq, const GruParams& p, Direction dir,
                               const Tensor& h0);
GruRunResult gru_run_direction(const Tensor& seq, const GruParams& p, Direction dir);

struct GruGrads {
    Tensor seq;  // [T x D]
    GruParams params;
};

// BPTT over one direction. d_states is [T x H] in original time order.
GruGrads gru_direction_backward(const std::vector<GruStepTrace>& traces,
                                const Tensor& d_states, const GruParams& p, Direction dir);

enum class SummaryMode { final_states, mean_over_time };

struct BgruLayer {
    GruParams forward_params;
    GruParams backward_params;  // independent weights, no cross connections

    std::size_t hidden() const { return forward_params.hidden(); }

    static BgruLayer init(std::size_t hidden, std::size_t input_dim, Rng& rng);
    static BgruLayer zeros(std::size_t hidden, std::size_t input_dim);

    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
};

struct BgruTrace {
    std::vector<GruStepTrace> forward_traces;
    std::vector<GruStepTrace> backward_traces;
    std::size_t time_steps = 0;
};

struct BgruForwardResult {
    Tensor states;   // [T x 2H]: forward states then backward states per step
    Tensor summary;  // [2H]: concat(last forward state, first backward state)
    BgruTrace trace;
};

BgruForwardResult bgru_layer_forward(const Tensor& seq, const BgruLayer& layer,
                                     SummaryMode mode = SummaryMode::final_states);

struct BgruGrads {
    Tensor seq;
    BgruLayer params;  // same structure, holds gradients
};

// d_states may be empty (zero); d_summary may be empty (zero).
BgruGrads bgru_layer_backward(const BgruTrace& trace, const BgruLayer& layer,
                              const Tensor& d_states, const Tensor& d_summary,
                              SummaryMode mode = SummaryMode::final_states);

struct StackedBgruResult {
    Tensor feature;  // concatenated per-layer summaries
    std::vector<BgruForwardResult> layers;
};

StackedBgruResult stacked_bgru_forward(const Tensor& seq,
                                       const std::vector<BgruLayer>& layers,
                                       SummaryMode mode = SummaryMode::final_states);

struct StackedBgruGrads {
    Tensor seq;
    std::vector<BgruLayer> layers;
};

StackedBgruGrads stacked_bgru_backward(const StackedBgruResult& run,
                                       const std::vector<BgruLayer>& layers,
                                       const Tensor& d_feature,
                                       SummaryMode mode = SummaryMode::final_states);

}  // namespace prcnn
