#include "prcnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace prcnn {

namespace fs = std::filesystem;

DatasetManifest scan_dataset(const std::string& root) {
    if (!fs::is_directory(root)) {
        throw DataError("dataset root is not a directory: " + root);
    }
    std::vector<std::string> genres;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) genres.push_back(entry.path().filename().string());
    }
    if (genres.empty()) {
        throw DataError("dataset root has no genre directories: " + root);
    }
    std::sort(genres.begin(), genres.end());

    DatasetManifest manifest;
    manifest.label_names = genres;
    for (std::size_t label = 0; label < genres.size(); ++label) {
        const fs::path dir = fs::path(root) / genres[label];
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".wav") {
                files.push_back(entry.path().string());
            }
        }
        if (files.empty()) {
            throw DataError("genre directory has no .wav files: " + dir.string());
        }
        std::sort(files.begin(), files.end());
        for (std::string& f : files) {
            manifest.entries.push_back({std::move(f), label, SplitSide::unassigned});
        }
    }
    std::sort(manifest.entries.begin(), manifest.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
    return manifest;
}

void split(DatasetManifest& manifest, double fraction, Seed seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ArgumentError("split fraction must be in (0,1), got " + std::to_string(fraction));
    }
    manifest.split_seed = seed;
    manifest.split_fraction = fraction;

    Rng rng(seed.value);
    for (std::size_t label = 0; label < manifest.label_names.size(); ++label) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
            if (manifest.entries[i].label == label) idx.push_back(i);
        }
        if (idx.size() < 2) {
            throw DataError("class '" + manifest.label_names[label] +
                            "' has fewer than 2 songs; cannot split");
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        std::size_t train_count = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(idx.size())));
        train_count = std::clamp<std::size_t>(train_count, 1, idx.size() - 1);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            manifest.entries[idx[k]].split =
                (k < train_count) ? SplitSide::train : SplitSide::test;
        }
    }
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write manifest: " + path);
        out << "labels: ";
        for (std::size_t i = 0; i < manifest.label_names.size(); ++i) {
            if (i) out << ',';
            out << manifest.label_names[i];
        }
        out << '\n';
        for (const ManifestEntry& e : manifest.entries) {
            const char* side = e.split == SplitSide::train  ? "train"
                               : e.split == SplitSide::test ? "test"
                                                            : "unassigned";
            out << e.path << '\t' << e.label << '\t' << side << '\n';
        }
        if (!out) throw DataError("write failure on manifest: " + path);
    }
    fs::rename(tmp, path);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    DatasetManifest manifest;
    std::string line;
    if (!std::getline(in, line) || line.rfind("labels: ", 0) != 0) {
        throw FormatError("manifest missing 'labels:' header: " + path);
    }
    std::stringstream labels(line.substr(8));
    std::string name;
    while (std::getline(labels, name, ',')) manifest.label_names.push_back(name);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t t1 = line.find('\t');
        const std::size_t t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw FormatError("malformed manifest line: " + line);
        }
        ManifestEntry e;
        e.path = line.substr(0, t1);
        e.label = static_cast<std::size_t>(std::stoul(line.substr(t1 + 1, t2 - t1 - 1)));
        const std::string side = line.substr(t2 + 1);
        e.split = side == "train"  ? SplitSide::train
                  : side == "test" ? SplitSide::test
                                   : SplitSide::unassigned;
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

std::vector<std::vector<double>> default_tones(std::size_t class_count) {
    std::vector<std::vector<double>> tones(class_count);
    const double bin_hz = static_cast<double>(kSampleRate) / static_cast<double>(kFftSize);
    for (std::size_t c = 0; c < class_count; ++c) {
        for (std::size_t k = 0; k < 3; ++k) {
            tones[c].push_back(static_cast<double>(40 + 12 * c + 4 * k) * bin_hz);
        }
    }
    return tones;
}

std::vector<double> synth_tone_signal(const std::vector<double>& tones_hz,
                                      std::size_t sample_count, double noise_amplitude,
                                      Rng& rng) {
    constexpr double kPi = 3.14159265358979323846;
    for (double f : tones_hz) {
        if (f >= kSampleRate / 2.0) {
            throw ArgumentError("tone " + std::to_string(f) + " Hz is at or above Nyquist (" +
                                std::to_string(kSampleRate / 2.0) + " Hz)");
        }
    }
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    std::vector<double> phases;
    for (std::size_t i = 0; i < tones_hz.size(); ++i) phases.push_back(phase(rng));

    std::vector<double> signal(sample_count, 0.0);
    for (std::size_t k = 0; k < tones_hz.size(); ++k) {
        const double w = 2.0 * kPi * tones_hz[k] / static_cast<double>(kSampleRate);
        for (std::size_t i = 0; i < sample_count; ++i) {
            signal[i] += std::sin(w * static_cast<double>(i) + phases[k]);
        }
    }
    if (noise_amplitude > 0.0) {
        std::uniform_real_distribution<double> noise(-noise_amplitude, noise_amplitude);
        for (double& s : signal) s += noise(rng);
    }
    double peak = 0.0;
    for (double s : signal) peak = std::max(peak, std::abs(s));
    if (peak > 0.0) {
        const double scale = 0.9 / peak;
        for (double& s : signal) s *= scale;
    }
    return signal;
}

Shard synth_generate(const SynthSpec& spec) {
    SynthSpec s = spec;
    if (s.tones_per_class.empty()) s.tones_per_class = default_tones(s.class_count);
    if (s.tones_per_class.size() != s.class_count) {
        throw ArgumentError("tones_per_class has " + std::to_string(s.tones_per_class.size()) +
                            " entries for " + std::to_string(s.class_count) + " classes");
    }
    Rng rng(s.seed.value);
    Shard shard;
    shard.class_count = static_cast<std::uint32_t>(s.class_count);
    for (std::size_t c = 0; c < s.class_count; ++c) {
        for (std::size_t k = 0; k < s.clips_per_class; ++k) {
            std::vector<double> signal =
                synth_tone_signal(s.tones_per_class[c], kClipSamples, s.noise_amplitude, rng);
            const std::string source_id =
                "synth/class" + std::to_string(c) + "/clip" + std::to_string(k);
            std::vector<AudioClip> clips = segment_clips(signal, kSampleRate, source_id);
            for (const AudioClip& clip : clips) {
                Spectrogram sp = stft_magnitude(clip);
                sp.label = static_cast<std::int32_t>(c);
                shard.records.push_back(std::move(sp));
            }
        }
    }
    return shard;
}

}  // namespace prcnn
