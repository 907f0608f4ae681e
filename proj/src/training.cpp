#include "prcnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

namespace prcnn {

namespace {

void check_parity(const ModelParams& params, const ModelParams& grads) {
    auto p = params.tensors();
    auto g = grads.tensors();
    if (p.size() != g.size()) {
        throw DataError("gradient structure has " + std::to_string(g.size()) +
                        " tensors, parameters have " + std::to_string(p.size()));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i]->shape() != g[i]->shape()) {
            throw DataError("gradient tensor " + std::to_string(i) + " has shape " +
                            g[i]->shape_string() + ", parameter has " + p[i]->shape_string());
        }
    }
}

std::vector<Tensor> mirror_zeros(const ModelParams& shape) {
    std::vector<Tensor> out;
    for (const Tensor* t : shape.tensors()) out.emplace_back(t->shape());
    return out;
}

void accumulate_params(ModelParams& dst, const ModelParams& src) {
    auto d = dst.tensors();
    auto s = src.tensors();
    for (std::size_t i = 0; i < d.size(); ++i) add_inplace(*d[i], *s[i]);
}

void scale_params(ModelParams& p, double alpha) {
    for (Tensor* t : p.tensors()) scale_inplace(*t, alpha);
}

}  // namespace

OptimizerState OptimizerState::make_sgd(double lr, double momentum,
                                        const ModelParams& shape) {
    OptimizerState st;
    st.kind = OptimizerKind::sgd;
    st.learning_rate = lr;
    st.momentum = momentum;
    st.velocity = mirror_zeros(shape);
    return st;
}

OptimizerState OptimizerState::make_adam(double lr, const ModelParams& shape) {
    OptimizerState st;
    st.kind = OptimizerKind::adam;
    st.learning_rate = lr;
    st.first_moment = mirror_zeros(shape);
    st.second_moment = mirror_zeros(shape);
    return st;
}

void optimizer_apply(ModelParams& params, const ModelParams& grads, OptimizerState& state) {
    check_parity(params, grads);
    auto p = params.tensors();
    auto g = grads.tensors();
    state.step_count += 1;

    if (state.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            Tensor& vel = state.velocity[i];
            for (std::size_t k = 0; k < vel.size(); ++k) {
                vel[k] = state.momentum * vel[k] + (*g[i])[k];
                (*p[i])[k] -= state.learning_rate * vel[k];
            }
        }
        return;
    }

    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < p.size(); ++i) {
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        for (std::size_t k = 0; k < m.size(); ++k) {
            const double grad = (*g[i])[k];
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * grad;
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * grad * grad;
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            (*p[i])[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

void clip_global_norm(ModelParams& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor* t : grads.tensors()) {
        for (std::size_t i = 0; i < t->size(); ++i) sq += (*t)[i] * (*t)[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        scale_params(grads, max_norm / norm);
    }
}

TrainResult train(const Shard& train_shard, const std::vector<std::string>& label_names,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    if (train_shard.records.empty()) throw DataError("training shard is empty");
    if (train_shard.class_count != config.model.class_count) {
        throw DataError("shard has " + std::to_string(train_shard.class_count) +
                        " classes but model is configured for " +
                        std::to_string(config.model.class_count));
    }

    const NormStats stats = compute_norm_stats(train_shard.records);
    std::vector<Tensor> inputs;
    std::vector<std::size_t> labels;
    inputs.reserve(train_shard.records.size());
    for (const Spectrogram& rec : train_shard.records) {
        if (rec.label < 0 || static_cast<std::size_t>(rec.label) >= config.model.class_count) {
            throw DataError("record '" + rec.source_id + "' has invalid label " +
                            std::to_string(rec.label));
        }
        inputs.push_back(normalize(rec.values, stats));
        labels.push_back(static_cast<std::size_t>(rec.label));
    }

    ModelParams params = ModelParams::init(config.model, config.seed);
    OptimizerState opt = (config.optimizer == OptimizerKind::adam)
                             ? OptimizerState::make_adam(config.learning_rate, params)
                             : OptimizerState::make_sgd(config.learning_rate,
                                                        config.momentum, params);

    std::size_t threads = config.deterministic ? 1 : config.threads;
    if (threads == 0) {
        threads = std::min<std::size_t>(8, std::max(1u, std::thread::hardware_concurrency()));
    }

    Rng shuffle_rng(config.seed.value ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    std::vector<double> last_good = params.flatten();

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        bool nan_seen = false;

        for (std::size_t start = 0; start < order.size() && !nan_seen;
             start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const std::size_t count = end - start;

            std::vector<ModelParams> partial;
            std::vector<double> part_loss(threads, 0.0);
            std::vector<std::size_t> part_correct(threads, 0);
            partial.reserve(threads);
            for (std::size_t i = 0; i < threads; ++i) {
                partial.push_back(ModelParams::zeros(config.model));
            }

            auto worker = [&](std::size_t tid) {
                for (std::size_t k = start + tid; k < end; k += threads) {
                    const std::size_t idx = order[k];
                    auto [probs, trace] = model_forward(inputs[idx], params, config.model);
                    part_loss[tid] += cross_entropy(probs, labels[idx]);
                    const std::size_t pred = static_cast<std::size_t>(
                        std::max_element(probs.data(), probs.data() + probs.size()) -
                        probs.data());
                    if (pred == labels[idx]) part_correct[tid] += 1;
                    ModelParams g = model_backward(trace, labels[idx], params, config.model);
                    accumulate_params(partial[tid], g);
                }
            };
            if (threads == 1) {
                worker(0);
            } else {
                std::vector<std::thread> pool;
                for (std::size_t tid = 0; tid < threads; ++tid) {
                    pool.emplace_back(worker, tid);
                }
                for (std::thread& t : pool) t.join();
            }

            ModelParams batch_grads = std::move(partial[0]);
            for (std::size_t tid = 1; tid < threads; ++tid) {
                accumulate_params(batch_grads, partial[tid]);
            }
            scale_params(batch_grads, 1.0 / static_cast<double>(count));

            double batch_loss = 0.0;
            for (std::size_t tid = 0; tid < threads; ++tid) {
                batch_loss += part_loss[tid];
                correct += part_correct[tid];
            }
            if (!std::isfinite(batch_loss)) {
                nan_seen = true;
                break;
            }
            loss_sum += batch_loss;

            if (config.clip_norm) clip_global_norm(batch_grads, *config.clip_norm);
            optimizer_apply(params, batch_grads, opt);
        }

        if (nan_seen) {
            result.diverged = true;
            result.diagnostic = "loss became non-finite at epoch " + std::to_string(epoch) +
                                "; returning the last finite checkpoint";
            break;
        }
        last_good = params.flatten();

        const auto t1 = std::chrono::steady_clock::now();
        EpochMetrics m;
        m.epoch = epoch;
        m.mean_loss = loss_sum / static_cast<double>(inputs.size());
        m.train_accuracy =
            static_cast<double>(correct) / static_cast<double>(inputs.size());
        m.wall_seconds = config.deterministic
                             ? 0.0
                             : std::chrono::duration<double>(t1 - t0).count();
        result.metrics.push_back(m);
        if (on_epoch && !on_epoch(m)) break;
    }

    result.checkpoint.version = kCheckpointVersion;
    result.checkpoint.config = config.model;
    result.checkpoint.norm_stats = stats;
    result.checkpoint.label_names = label_names;
    result.checkpoint.flat_params = std::move(last_good);
    return result;
}

EvalResult evaluate(const ModelParams& params, const ModelConfig& config,
                    const NormStats& stats, const Shard& shard, Aggregation aggregation) {
    if (shard.class_count != config.class_count) {
        throw DataError("shard has " + std::to_string(shard.class_count) +
                        " classes but model is configured for " +
                        std::to_string(config.class_count));
    }
    const std::size_t k = config.class_count;
    EvalResult res;
    res.confusion.assign(k, std::vector<std::size_t>(k, 0));

    struct SongVote {
        std::size_t label = 0;
        std::vector<std::size_t> votes;
        std::vector<double> prob_sums;
    };
    std::map<std::string, SongVote> songs;

    for (const Spectrogram& rec : shard.records) {
        if (rec.label < 0 || static_cast<std::size_t>(rec.label) >= k) {
            throw DataError("record '" + rec.source_id + "' has invalid label " +
                            std::to_string(rec.label));
        }
        Tensor input = normalize(rec.values, stats);
        auto [probs, trace] = model_forward(input, params, config);
        const std::size_t pred = static_cast<std::size_t>(
            std::max_element(probs.data(), probs.data() + probs.size()) - probs.data());
        const std::size_t truth = static_cast<std::size_t>(rec.label);

        if (aggregation == Aggregation::per_clip) {
            res.confusion[truth][pred] += 1;
        } else {
            SongVote& v = songs[rec.source_id];
            if (v.votes.empty()) {
                v.votes.assign(k, 0);
                v.prob_sums.assign(k, 0.0);
                v.label = truth;
            }
            v.votes[pred] += 1;
            for (std::size_t c = 0; c < k; ++c) v.prob_sums[c] += probs[c];
        }
    }

    if (aggregation == Aggregation::per_song_majority) {
        for (const auto& [id, v] : songs) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < k; ++c) {
                if (v.votes[c] > v.votes[best] ||
                    (v.votes[c] == v.votes[best] && v.prob_sums[c] > v.prob_sums[best])) {
                    best = c;
                }
            }
            res.confusion[v.label][best] += 1;
        }
    }

    std::size_t diag = 0;
    for (std::size_t i = 0; i < k; ++i) {
        diag += res.confusion[i][i];
        for (std::size_t j = 0; j < k; ++j) res.total += res.confusion[i][j];
    }
    res.accuracy =
        res.total == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(res.total);
    return res;
}

GradCheckReport gradient_check(const GradCheckConfig& config) {
    ModelConfig mc = config.reduced ? ModelConfig::reduced() : ModelConfig();
    if (!config.reduced) mc.bgru_layers = 2;  // cover stacked recurrence on the full model

    Rng rng(config.seed.value);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Tensor input({mc.input_time, mc.input_freq});
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = gauss(rng);
    std::uniform_int_distribution<std::size_t> label_dist(0, mc.class_count - 1);
    const std::size_t label = label_dist(rng);

    ModelParams params = ModelParams::init(mc, Seed{config.seed.value + 1});

    auto [probs, trace] = model_forward(input, params, mc);
    if (config.corrupt_relu) {
        for (ReluCache& cache : trace.cnn.relu_caches) {
            for (std::size_t i = 0; i < cache.positive.size(); ++i) {
                cache.positive[i] = !cache.positive[i];
            }
        }
    }
    ModelParams analytic = model_backward(trace, label, params, mc);

    auto loss_at = [&]() {
        auto [p, t] = model_forward(input, params, mc);
        return cross_entropy(p, label);
    };

    auto named = params.named_tensors();
    auto analytic_named = analytic.named_tensors();

    // enumerate (tensor, coordinate) pairs; sample on the full model
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t ti = 0; ti < named.size(); ++ti) {
        for (std::size_t i = 0; i < named[ti].second->size(); ++i) {
            coords.emplace_back(ti, i);
        }
    }
    if (!config.reduced && coords.size() > config.sample_size) {
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(config.sample_size);
    }

    GradCheckReport report;
    report.coordinates_checked = coords.size();
    for (const auto& [ti, i] : coords) {
        Tensor& t = *named[ti].second;
        const double original = t[i];
        t[i] = original + config.epsilon;
        const double plus = loss_at();
        t[i] = original - config.epsilon;
        const double minus = loss_at();
        t[i] = original;

        const double numeric = (plus - minus) / (2.0 * config.epsilon);
        const double a = (*analytic_named[ti].second)[i];
        const double rel =
            std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
        if (rel > report.max_relative_error) {
            report.max_relative_error = rel;
            report.worst_tensor = named[ti].first;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    return report;
}

}  // namespace prcnn
