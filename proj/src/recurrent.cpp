#include "prcnn/recurrent.hpp"

#include <cmath>

namespace prcnn {

namespace {

// dst[i][:] += u[i] * v  (outer product accumulation)
void outer_accumulate(Tensor& dst, const Tensor& u, const Tensor& v) {
    const std::size_t m = dst.extent(0), n = dst.extent(1);
    for (std::size_t i = 0; i < m; ++i) {
        const double ui = u[i];
        double* row = dst.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += ui * v[j];
    }
}

Tensor row_of(const Tensor& mat, std::size_t i) {
    const std::size_t n = mat.extent(1);
    Tensor out({n});
    std::copy(mat.data() + i * n, mat.data() + (i + 1) * n, out.data());
    return out;
}

}  // namespace

GruParams GruParams::init(std::size_t hidden, std::size_t input_dim, Rng& rng) {
    GruParams p;
    p.U_u = uniform_scaled({hidden, input_dim}, input_dim, hidden, rng);
    p.U_r = uniform_scaled({hidden, input_dim}, input_dim, hidden, rng);
    p.U = uniform_scaled({hidden, input_dim}, input_dim, hidden, rng);
    p.W_u = uniform_scaled({hidden, hidden}, hidden, hidden, rng);
    p.W_r = uniform_scaled({hidden, hidden}, hidden, hidden, rng);
    p.W = uniform_scaled({hidden, hidden}, hidden, hidden, rng);
    p.b_u = Tensor({hidden});
    p.b_r = Tensor({hidden});
    p.b = Tensor({hidden});
    return p;
}

GruParams GruParams::zeros(std::size_t hidden, std::size_t input_dim) {
    GruParams p;
    p.U_u = Tensor({hidden, input_dim});
    p.U_r = Tensor({hidden, input_dim});
    p.U = Tensor({hidden, input_dim});
    p.W_u = Tensor({hidden, hidden});
    p.W_r = Tensor({hidden, hidden});
    p.W = Tensor({hidden, hidden});
    p.b_u = Tensor({hidden});
    p.b_r = Tensor({hidden});
    p.b = Tensor({hidden});
    return p;
}

std::vector<Tensor*> GruParams::tensors() {
    return {&U_u, &U_r, &U, &W_u, &W_r, &W, &b_u, &b_r, &b};
}

std::vector<const Tensor*> GruParams::tensors() const {
    return {&U_u, &U_r, &U, &W_u, &W_r, &W, &b_u, &b_r, &b};
}

std::pair<Tensor, GruStepTrace> gru_step(const Tensor& x, const Tensor& h_carry,
                                         const GruParams& p) {
    const std::size_t h = p.hidden();
    if (x.rank() != 1 || x.extent(0) != p.input_dim() || h_carry.rank() != 1 ||
        h_carry.extent(0) != h) {
        throw DimensionError("gru_step shapes " + x.shape_string() + ", " +
                             h_carry.shape_string() + " do not match params U " +
                             p.U.shape_string());
    }
    GruStepTrace tr;
    tr.x = x;
    tr.h_carry = h_carry;

    Tensor au = matvec(p.U_u, x);
    Tensor ar = matvec(p.U_r, x);
    Tensor wu = matvec(p.W_u, h_carry);
    Tensor wr = matvec(p.W_r, h_carry);
    tr.u = Tensor({h});
    tr.r = Tensor({h});
    for (std::size_t i = 0; i < h; ++i) {
        tr.u[i] = 1.0 / (1.0 + std::exp(-(p.b_u[i] + au[i] + wu[i])));
        tr.r[i] = 1.0 / (1.0 + std::exp(-(p.b_r[i] + ar[i] + wr[i])));
    }

    Tensor gated({h});
    for (std::size_t i = 0; i < h; ++i) gated[i] = tr.r[i] * h_carry[i];
    Tensor ac = matvec(p.U, x);
    Tensor wc = matvec(p.W, gated);
    tr.h_cand = Tensor({h});
    tr.h = Tensor({h});
    for (std::size_t i = 0; i < h; ++i) {
        tr.h_cand[i] = std::tanh(p.b[i] + ac[i] + wc[i]);
        tr.h[i] = tr.u[i] * tr.h_cand[i] + (1.0 - tr.u[i]) * h_carry[i];
    }
    Tensor out = tr.h;
    return {std::move(out), std::move(tr)};
}

GruRunResult gru_run_direction(const Tensor& seq, const GruParams& p, Direction dir,
                               const Tensor& h0) {
    if (seq.rank() != 2 || seq.extent(1) != p.input_dim()) {
        throw DimensionError("gru_run_direction sequence " + seq.shape_string() +
                             " does not match input dim " + std::to_string(p.input_dim()));
    }
    const std::size_t steps = seq.extent(0), h = p.hidden();
    GruRunResult res;
    res.states = Tensor({steps, h});
    res.traces.reserve(steps);
    Tensor carry = h0;
    for (std::size_t k = 0; k < steps; ++k) {
        const std::size_t t = (dir == Direction::forward) ? k : steps - 1 - k;
        auto [state, tr] = gru_step(row_of(seq, t), carry, p);
        std::copy(state.data(), state.data() + h, res.states.data() + t * h);
        carry = std::move(state);
        res.traces.push_back(std::move(tr));
    }
    return res;
}

GruRunResult gru_run_direction(const Tensor& seq, const GruParams& p, Direction dir) {
    return gru_run_direction(seq, p, dir, Tensor({p.hidden()}));
}

GruGrads gru_direction_backward(const std::vector<GruStepTrace>& traces,
                                const Tensor& d_states, const GruParams& p, Direction dir) {
    const std::size_t steps = traces.size(), h = p.hidden(), d = p.input_dim();
    if (d_states.rank() != 2 || d_states.extent(0) != steps || d_states.extent(1) != h) {
        throw DimensionError("gru_direction_backward d_states " + d_states.shape_string() +
                             " does not match " + std::to_string(steps) + " traces of H=" +
                             std::to_string(h));
    }
    GruGrads g;
    g.seq = Tensor({steps, d});
    g.params = GruParams::zeros(h, d);

    Tensor carry({h});  // gradient flowing to the state carried into step k
    for (std::size_t k = steps; k-- > 0;) {
        const GruStepTrace& tr = traces[k];
        const std::size_t t = (dir == Direction::forward) ? k : steps - 1 - k;

        Tensor dh({h});
        for (std::size_t i = 0; i < h; ++i) dh[i] = d_states(t, i) + carry[i];

        Tensor du({h}), dc({h}), dh_prev({h});
        for (std::size_t i = 0; i < h; ++i) {
            du[i] = dh[i] * (tr.h_cand[i] - tr.h_carry[i]);
            dc[i] = dh[i] * tr.u[i];
            dh_prev[i] = dh[i] * (1.0 - tr.u[i]);
        }

        Tensor dac({h});
        for (std::size_t i = 0; i < h; ++i) {
            dac[i] = dc[i] * (1.0 - tr.h_cand[i] * tr.h_cand[i]);
        }
        add_inplace(g.params.b, dac);
        outer_accumulate(g.params.U, dac, tr.x);
        Tensor gated({h});
        for (std::size_t i = 0; i < h; ++i) gated[i] = tr.r[i] * tr.h_carry[i];
        outer_accumulate(g.params.W, dac, gated);

        Tensor d_gated = matvec_transposed(p.W, dac);
        Tensor dr({h});
        for (std::size_t i = 0; i < h; ++i) {
            dr[i] = d_gated[i] * tr.h_carry[i];
            dh_prev[i] += d_gated[i] * tr.r[i];
        }

        Tensor dau({h}), dar({h});
        for (std::size_t i = 0; i < h; ++i) {
            dau[i] = du[i] * tr.u[i] * (1.0 - tr.u[i]);
            dar[i] = dr[i] * tr.r[i] * (1.0 - tr.r[i]);
        }
        add_inplace(g.params.b_u, dau);
        add_inplace(g.params.b_r, dar);
        outer_accumulate(g.params.U_u, dau, tr.x);
        outer_accumulate(g.params.U_r, dar, tr.x);
        outer_accumulate(g.params.W_u, dau, tr.h_carry);
        outer_accumulate(g.params.W_r, dar, tr.h_carry);
        add_inplace(dh_prev, matvec_transposed(p.W_u, dau));
        add_inplace(dh_prev, matvec_transposed(p.W_r, dar));

        Tensor dx = matvec_transposed(p.U_u, dau);
        add_inplace(dx, matvec_transposed(p.U_r, dar));
        add_inplace(dx, matvec_transposed(p.U, dac));
        double* seq_row = g.seq.data() + t * d;
        for (std::size_t j = 0; j < d; ++j) seq_row[j] += dx[j];

        carry = std::move(dh_prev);
    }
    return g;
}

BgruLayer BgruLayer::init(std::size_t hidden, std::size_t input_dim, Rng& rng) {
    BgruLayer l;
    l.forward_params = GruParams::init(hidden, input_dim, rng);
    l.backward_params = GruParams::init(hidden, input_dim, rng);
    return l;
}

BgruLayer BgruLayer::zeros(std::size_t hidden, std::size_t input_dim) {
    return BgruLayer{GruParams::zeros(hidden, input_dim), GruParams::zeros(hidden, input_dim)};
}

std::vector<Tensor*> BgruLayer::tensors() {
    auto f = forward_params.tensors();
    auto b = backward_params.tensors();
    f.insert(f.end(), b.begin(), b.end());
    return f;
}

std::vector<const Tensor*> BgruLayer::tensors() const {
    auto f = forward_params.tensors();
    auto b = backward_params.tensors();
    f.insert(f.end(), b.begin(), b.end());
    return f;
}

BgruForwardResult bgru_layer_forward(const Tensor& seq, const BgruLayer& layer,
                                     SummaryMode mode) {
    const std::size_t steps = seq.extent(0), h = layer.hidden();
    GruRunResult fwd = gru_run_direction(seq, layer.forward_params, Direction::forward);
    GruRunResult bwd = gru_run_direction(seq, layer.backward_params, Direction::backward);

    BgruForwardResult res;
    res.states = Tensor({steps, 2 * h});
    for (std::size_t t = 0; t < steps; ++t) {
        std::copy(fwd.states.data() + t * h, fwd.states.data() + (t + 1) * h,
                  res.states.data() + t * 2 * h);
        std::copy(bwd.states.data() + t * h, bwd.states.data() + (t + 1) * h,
                  res.states.data() + t * 2 * h + h);
    }
    res.summary = Tensor({2 * h});
    if (mode == SummaryMode::final_states) {
        // last state each direction computes: forward at t = T-1, backward at t = 0
        std::copy(fwd.states.data() + (steps - 1) * h, fwd.states.data() + steps * h,
                  res.summary.data());
        std::copy(bwd.states.data(), bwd.states.data() + h, res.summary.data() + h);
    } else {
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t i = 0; i < 2 * h; ++i) res.summary[i] += res.states(t, i);
        }
        scale_inplace(res.summary, 1.0 / static_cast<double>(steps));
    }
    res.trace.forward_traces = std::move(fwd.traces);
    res.trace.backward_traces = std::move(bwd.traces);
    res.trace.time_steps = steps;
    return res;
}

BgruGrads bgru_layer_backward(const BgruTrace& trace, const BgruLayer& layer,
                              const Tensor& d_states, const Tensor& d_summary,
                              SummaryMode mode) {
    const std::size_t steps = trace.time_steps, h = layer.hidden();
    if (steps == 0 || trace.forward_traces.size() != steps) {
        throw DataError("bgru_layer_backward: trace does not match one forward invocation");
    }
    Tensor d_fwd({steps, h}), d_bwd({steps, h});
    if (d_states.size() != 0) {
        if (d_states.rank() != 2 || d_states.extent(0) != steps ||
            d_states.extent(1) != 2 * h) {
            throw DimensionError("bgru_layer_backward d_states " + d_states.shape_string() +
                                 " does not match [" + std::to_string(steps) + "x" +
                                 std::to_string(2 * h) + "]");
        }
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t i = 0; i < h; ++i) {
                d_fwd(t, i) = d_states(t, i);
                d_bwd(t, i) = d_states(t, h + i);
            }
        }
    }
    if (d_summary.size() != 0) {
        if (d_summary.rank() != 1 || d_summary.extent(0) != 2 * h) {
            throw DimensionError("bgru_layer_backward d_summary " + d_summary.shape_string() +
                                 " does not match [" + std::to_string(2 * h) + "]");
        }
        if (mode == SummaryMode::final_states) {
            for (std::size_t i = 0; i < h; ++i) {
                d_fwd(steps - 1, i) += d_summary[i];
                d_bwd(0, i) += d_summary[h + i];
            }
        } else {
            const double inv = 1.0 / static_cast<double>(steps);
            for (std::size_t t = 0; t < steps; ++t) {
                for (std::size_t i = 0; i < h; ++i) {
                    d_fwd(t, i) += d_summary[i] * inv;
                    d_bwd(t, i) += d_summary[h + i] * inv;
                }
            }
        }
    }

    GruGrads gf = gru_direction_backward(trace.forward_traces, d_fwd, layer.forward_params,
                                         Direction::forward);
    GruGrads gb = gru_direction_backward(trace.backward_traces, d_bwd, layer.backward_params,
                                         Direction::backward);
    BgruGrads out;
    out.seq = std::move(gf.seq);
    add_inplace(out.seq, gb.seq);
    out.params.forward_params = std::move(gf.params);
    out.params.backward_params = std::move(gb.params);
    return out;
}

StackedBgruResult stacked_bgru_forward(const Tensor& seq,
                                       const std::vector<BgruLayer>& layers,
                                       SummaryMode mode) {
    StackedBgruResult res;
    res.layers.reserve(layers.size());
    const Tensor* current = &seq;
    std::size_t feat_len = 0;
    for (const BgruLayer& layer : layers) {
        res.layers.push_back(bgru_layer_forward(*current, layer, mode));
        current = &res.layers.back().states;
        feat_len += res.layers.back().summary.size();
    }
    res.feature = Tensor({feat_len});
    std::size_t offset = 0;
    for (const BgruForwardResult& lr : res.layers) {
        std::copy(lr.summary.data(), lr.summary.data() + lr.summary.size(),
                  res.feature.data() + offset);
        offset += lr.summary.size();
    }
    return res;
}

StackedBgruGrads stacked_bgru_backward(const StackedBgruResult& run,
                                       const std::vector<BgruLayer>& layers,
                                       const Tensor& d_feature, SummaryMode mode) {
    if (run.layers.size() != layers.size()) {
        throw DataError("stacked_bgru_backward: run does not match layer stack");
    }
    StackedBgruGrads out;
    out.layers.resize(layers.size());

    // slice the feature gradient into per-layer summary gradients
    std::vector<Tensor> d_summaries;
    std::size_t offset = 0;
    for (const BgruForwardResult& lr : run.layers) {
        const std::size_t n = lr.summary.size();
        Tensor ds({n});
        std::copy(d_feature.data() + offset, d_feature.data() + offset + n, ds.data());
        offset += n;
        d_summaries.push_back(std::move(ds));
    }

    Tensor d_states;  // empty = zero, for the topmost layer
    for (std::size_t li = layers.size(); li-- > 0;) {
        BgruGrads g = bgru_layer_backward(run.layers[li].trace, layers[li], d_states,
                                          d_summaries[li], mode);
        out.layers[li] = std::move(g.params);
        d_states = std::move(g.seq);  // becomes d_states of the layer below
    }
    out.seq = std::move(d_states);
    return out;
}

}  // namespace prcnn
