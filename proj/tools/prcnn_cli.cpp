#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "prcnn/dataset.hpp"
#include "prcnn/training.hpp"
#include "prcnn/wav.hpp"

namespace {

using namespace prcnn;

std::string shard_stem(const std::string& out) {
    const std::string suffix = ".prcn";
    if (out.size() > suffix.size() &&
        out.compare(out.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return out.substr(0, out.size() - suffix.size());
    }
    return out;
}

void write_metrics(const std::vector<EpochMetrics>& metrics, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write metrics log: " + path);
        for (const EpochMetrics& m : metrics) {
            nlohmann::json line{{"epoch", m.epoch},
                                {"mean_loss", m.mean_loss},
                                {"train_accuracy", m.train_accuracy},
                                {"wall_seconds", m.wall_seconds}};
            out << line.dump() << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

void print_eval(const EvalResult& res, const std::vector<std::string>& labels) {
    std::printf("accuracy %.6f\n", res.accuracy);
    std::printf("confusion matrix (rows = true class):\n");
    for (std::size_t i = 0; i < res.confusion.size(); ++i) {
        std::printf("%-12s", i < labels.size() ? labels[i].c_str() : "?");
        for (std::size_t j = 0; j < res.confusion[i].size(); ++j) {
            std::printf(" %5zu", res.confusion[i][j]);
        }
        std::printf("\n");
    }
}

// per-class stratified clip split for shards whose records are independent
std::pair<Shard, Shard> split_shard(const Shard& shard, double fraction, Seed seed) {
    Rng rng(seed.value ^ 0xd1b54a32d192ed03ull);
    Shard train, test;
    train.class_count = test.class_count = shard.class_count;
    for (std::uint32_t c = 0; c < shard.class_count; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < shard.records.size(); ++i) {
            if (shard.records[i].label == static_cast<std::int32_t>(c)) idx.push_back(i);
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t train_count = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size()))),
            1, idx.empty() ? 1 : idx.size() - 1);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            (k < train_count ? train : test).records.push_back(shard.records[idx[k]]);
        }
    }
    return {std::move(train), std::move(test)};
}

int cmd_preprocess(const std::string& data_root, const std::string& out,
                   const std::string& manifest_path, double fraction, std::uint64_t seed) {
    DatasetManifest manifest = scan_dataset(data_root);
    split(manifest, fraction, Seed{seed});

    Shard train, test;
    train.class_count = test.class_count =
        static_cast<std::uint32_t>(manifest.label_names.size());
    for (const ManifestEntry& entry : manifest.entries) {
        WavData wav = load_wav(entry.path);
        std::vector<AudioClip> clips = segment_clips(wav.samples, wav.sample_rate, entry.path);
        Shard& side = entry.split == SplitSide::train ? train : test;
        for (const AudioClip& clip : clips) {
            Spectrogram spec = stft_magnitude(clip);
            spec.label = static_cast<std::int32_t>(entry.label);
            side.records.push_back(std::move(spec));
        }
    }

    const std::string stem = shard_stem(out);
    save_shard(train, stem + ".train.prcn");
    save_shard(test, stem + ".test.prcn");
    const std::string mpath =
        manifest_path.empty() ? stem + ".manifest.txt" : manifest_path;
    save_manifest(manifest, mpath);
    std::printf("wrote %zu train and %zu test spectrograms (%zu classes)\n",
                train.records.size(), test.records.size(), manifest.label_names.size());
    return 0;
}

int cmd_synth(const std::string& out, std::size_t classes, std::size_t clips, double noise,
              std::uint64_t seed, double fraction) {
    SynthSpec spec;
    spec.class_count = classes;
    spec.clips_per_class = clips;
    spec.noise_amplitude = noise;
    spec.seed = Seed{seed};
    Shard shard = synth_generate(spec);
    if (fraction <= 0.0) {
        save_shard(shard, out);
        std::printf("wrote %zu spectrograms to %s\n", shard.records.size(), out.c_str());
        return 0;
    }
    auto [train, test] = split_shard(shard, fraction, Seed{seed});
    const std::string stem = shard_stem(out);
    save_shard(train, stem + ".train.prcn");
    save_shard(test, stem + ".test.prcn");
    std::printf("wrote %zu train and %zu test spectrograms (%zu classes)\n",
                train.records.size(), test.records.size(), classes);
    return 0;
}

int cmd_train(const std::string& train_path, const std::string& test_path,
              const std::string& out, const std::string& metrics_path, TrainConfig config,
              const std::string& manifest_path) {
    Shard train_shard = load_shard(train_path);
    config.model.class_count = train_shard.class_count;

    std::vector<std::string> labels;
    if (!manifest_path.empty()) {
        labels = load_manifest(manifest_path).label_names;
    } else {
        for (std::size_t c = 0; c < config.model.class_count; ++c) {
            labels.push_back("class" + std::to_string(c));
        }
    }

    TrainResult result = train(train_shard, labels, config, [](const EpochMetrics& m) {
        std::printf("epoch %zu  loss %.6f  train_accuracy %.4f\n", m.epoch, m.mean_loss,
                    m.train_accuracy);
        std::fflush(stdout);
        return true;
    });

    save_checkpoint(result.checkpoint, out);
    write_metrics(result.metrics,
                  metrics_path.empty() ? out + ".metrics.jsonl" : metrics_path);
    if (result.diverged) {
        std::fprintf(stderr, "training diverged: %s\n", result.diagnostic.c_str());
        return 2;
    }

    if (!test_path.empty()) {
        Shard test_shard = load_shard(test_path);
        ModelParams params = params_from_checkpoint(result.checkpoint);
        EvalResult res = evaluate(params, result.checkpoint.config,
                                  result.checkpoint.norm_stats, test_shard,
                                  Aggregation::per_clip);
        std::printf("test ");
        print_eval(res, labels);
    }
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path, bool by_song) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    ModelParams params = params_from_checkpoint(ckpt);
    Shard shard = load_shard(data_path);
    EvalResult res =
        evaluate(params, ckpt.config, ckpt.norm_stats, shard,
                 by_song ? Aggregation::per_song_majority : Aggregation::per_clip);
    print_eval(res, ckpt.label_names);
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& wav_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    ModelParams params = params_from_checkpoint(ckpt);
    WavData wav = load_wav(wav_path);
    std::vector<AudioClip> clips = segment_clips(wav.samples, wav.sample_rate, wav_path);

    const std::size_t k = ckpt.config.class_count;
    std::vector<double> aggregate(k, 0.0);
    for (const AudioClip& clip : clips) {
        Spectrogram spec = stft_magnitude(clip);
        Tensor input = normalize(spec.values, ckpt.norm_stats);
        auto [probs, trace] = model_forward(input, params, ckpt.config);
        std::printf("clip %u:", clip.clip_index);
        for (std::size_t c = 0; c < k; ++c) {
            std::printf(" %.4f", probs[c]);
            aggregate[c] += probs[c];
        }
        std::printf("\n");
    }
    std::printf("aggregate:\n");
    for (std::size_t c = 0; c < k; ++c) {
        const char* name = c < ckpt.label_names.size() ? ckpt.label_names[c].c_str() : "?";
        std::printf("  %-12s %.4f\n", name, aggregate[c] / static_cast<double>(clips.size()));
    }
    return 0;
}

int cmd_gradcheck(bool reduced, double eps, std::uint64_t seed, double tolerance) {
    GradCheckConfig config;
    config.reduced = reduced;
    config.epsilon = eps;
    config.seed = Seed{seed};
    GradCheckReport report = gradient_check(config);
    std::printf("checked %zu coordinates\n", report.coordinates_checked);
    std::printf("max relative error %.3e at %s[%zu] (analytic %.6e, numeric %.6e)\n",
                report.max_relative_error, report.worst_tensor.c_str(), report.worst_index,
                report.analytic, report.numeric);
    if (report.max_relative_error >= tolerance) {
        std::fprintf(stderr, "gradient check FAILED: %.3e >= tolerance %.3e\n",
                     report.max_relative_error, tolerance);
        return 2;
    }
    std::printf("gradient check passed (tolerance %.1e)\n", tolerance);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PRCNN music genre classifier: parallel CNN + bidirectional GRU"};
    app.require_subcommand(1);

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "scan a WAV tree, split, write shards");
    std::string pre_data, pre_out, pre_manifest;
    double pre_split = 0.9;
    std::uint64_t pre_seed = 0;
    pre->add_option("--data", pre_data, "dataset root: <root>/<genre>/*.wav")->required();
    pre->add_option("--out", pre_out, "output shard stem")->required();
    pre->add_option("--manifest", pre_manifest, "manifest output path");
    pre->add_option("--split", pre_split, "train fraction")->capture_default_str();
    pre->add_option("--seed", pre_seed, "split seed")->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic tonal dataset");
    std::string synth_out;
    std::size_t synth_classes = 10, synth_clips = 40;
    double synth_noise = 0.05, synth_split = 0.8;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output shard (stem when splitting)")->required();
    synth->add_option("--classes", synth_classes, "class count")->capture_default_str();
    synth->add_option("--clips", synth_clips, "clips per class")->capture_default_str();
    synth->add_option("--noise", synth_noise, "noise amplitude")->capture_default_str();
    synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
    synth->add_option("--split", synth_split, "train fraction (0 = single shard)")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "train a model on a shard");
    std::string tr_train, tr_test, tr_out, tr_metrics, tr_manifest;
    std::string tr_fusion = "concat", tr_optimizer = "adam";
    TrainConfig tc;
    std::uint64_t tr_seed = 0;
    double tr_clip = 0.0;
    tr->add_option("--train", tr_train, "training shard")->required();
    tr->add_option("--test", tr_test, "held-out shard to evaluate after training");
    tr->add_option("--out", tr_out, "checkpoint output path")->required();
    tr->add_option("--metrics", tr_metrics, "metrics log path (default <out>.metrics.jsonl)");
    tr->add_option("--manifest", tr_manifest, "manifest providing label names");
    tr->add_option("--epochs", tc.epochs, "epochs")->capture_default_str();
    tr->add_option("--batch", tc.batch_size, "batch size")->capture_default_str();
    tr->add_option("--lr", tc.learning_rate, "learning rate")->capture_default_str();
    tr->add_option("--fusion", tr_fusion, "concat|add")->capture_default_str();
    tr->add_option("--rnn-layers", tc.model.bgru_layers, "1|2")->capture_default_str();
    tr->add_option("--optimizer", tr_optimizer, "adam|sgd")->capture_default_str();
    tr->add_option("--momentum", tc.momentum, "sgd momentum")->capture_default_str();
    tr->add_option("--clip-norm", tr_clip, "global gradient norm clip (0 = off)")->capture_default_str();
    tr->add_option("--seed", tr_seed, "training seed")->capture_default_str();
    tr->add_option("--threads", tc.threads, "worker threads (0 = auto)")->capture_default_str();
    tr->add_flag("--deterministic", tc.deterministic, "single-threaded, reproducible");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a shard");
    std::string ev_ckpt, ev_data;
    bool ev_by_song = false;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
    ev->add_option("--data", ev_data, "shard")->required();
    ev->add_flag("--by-song", ev_by_song, "aggregate clip votes per song");

    // predict
    auto* pr = app.add_subcommand("predict", "classify one WAV file");
    std::string pr_ckpt, pr_wav;
    pr->add_option("--ckpt", pr_ckpt, "checkpoint")->required();
    pr->add_option("--wav", pr_wav, "22050 Hz 16-bit PCM WAV")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    bool gc_reduced = false;
    double gc_eps = 1e-6, gc_tol = 1e-5;
    std::uint64_t gc_seed = 0;
    gc->add_flag("--reduced", gc_reduced, "use the small exhaustive-check model");
    gc->add_option("--eps", gc_eps, "central-difference step")->capture_default_str();
    gc->add_option("--seed", gc_seed, "seed")->capture_default_str();
    gc->add_option("--tol", gc_tol, "failure tolerance")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;  // --help
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (pre->parsed()) {
            return cmd_preprocess(pre_data, pre_out, pre_manifest, pre_split, pre_seed);
        }
        if (synth->parsed()) {
            return cmd_synth(synth_out, synth_classes, synth_clips, synth_noise, synth_seed,
                             synth_split);
        }
        if (tr->parsed()) {
            tc.seed = Seed{tr_seed};
            tc.model.fusion_mode =
                tr_fusion == "add" ? FusionMode::add : FusionMode::concat;
            tc.optimizer =
                tr_optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
            if (tr_clip > 0.0) tc.clip_norm = tr_clip;
            return cmd_train(tr_train, tr_test, tr_out, tr_metrics, tc, tr_manifest);
        }
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_by_song);
        if (pr->parsed()) return cmd_predict(pr_ckpt, pr_wav);
        if (gc->parsed()) return cmd_gradcheck(gc_reduced, gc_eps, gc_seed, gc_tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
