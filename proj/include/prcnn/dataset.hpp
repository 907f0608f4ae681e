#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prcnn/audio.hpp"
#include "prcnn/tensor.hpp"

namespace prcnn {

enum class SplitSide { unassigned, train, test };

struct ManifestEntry {
    std::string path;
    std::size_t label = 0;
    SplitSide split = SplitSide::unassigned;
};

struct DatasetManifest {
    std::vector<std::string> label_names;  // sorted genre directory names
    std::vector<ManifestEntry> entries;    // sorted by path
    Seed split_seed{0};
    double split_fraction = 0.0;
};

// Expects <root>/<genre>/*.wav; labels are the sorted subdirectory names.
DatasetManifest scan_dataset(const std::string& root);

// Per-class stratified song-level split. All clips of one file land on the
// same side, so 50%-overlap clips never leak across the split.
void split(DatasetManifest& manifest, double fraction, Seed seed);

void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

struct SynthSpec {
    std::size_t class_count = 10;
    std::size_t clips_per_class = 40;
    std::vector<std::vector<double>> tones_per_class;  // Hz; filled by default_tones
    double noise_amplitude = 0.05;
    Seed seed{0};
};

// Disjoint bin triplets per class: class c sits on FFT bins
// {40+12c, 44+12c, 48+12c}.
std::vector<std::vector<double>> default_tones(std::size_t class_count);

// Sum of unit sinusoids with seeded random phases plus uniform noise,
// peak-normalized to 0.9.
std::vector<double> synth_tone_signal(const std::vector<double>& tones_hz,
                                      std::size_t sample_count, double noise_amplitude,
                                      Rng& rng);

// Labeled spectrogram shard: clips_per_class 3-second clips per class.
Shard synth_generate(const SynthSpec& spec);

}  // namespace prcnn
