#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prcnn/tensor.hpp"

namespace prcnn {

inline constexpr std::uint32_t kSampleRate = 22050;
inline constexpr std::size_t kClipSamples = 66150;   // 3 s
inline constexpr std::size_t kClipHop = 33075;       // 50% overlap
inline constexpr std::size_t kFftSize = 1024;
inline constexpr std::size_t kFftHop = 512;
inline constexpr std::size_t kFrameCount = 128;      // floor((66150 - 1024) / 512) + 1
inline constexpr std::size_t kBinCount = 513;        // 1024 / 2 + 1

struct AudioClip {
    std::vector<double> samples;  // exactly kClipSamples
    std::uint32_t sample_rate = kSampleRate;
    std::string source_id;
    std::uint32_t clip_index = 0;
};

struct Spectrogram {
    Tensor values;  // [128 x 513], nonnegative magnitudes
    std::string source_id;
    std::uint32_t clip_index = 0;
    std::int32_t label = -1;  // -1 = unlabeled
};

struct NormStats {
    double mean = 0.0;
    double std_dev = 1.0;
};

// 3 s windows with 50% overlap; trailing partial window discarded.
std::vector<AudioClip> segment_clips(const std::vector<double>& samples,
                                     std::uint32_t sample_rate,
                                     const std::string& source_id);

// 1024-point frames, hop 512, magnitude of bins 0..512. No window function
// and no log scaling by default; `hann` enables a Hann analysis window.
Spectrogram stft_magnitude(const AudioClip& clip, bool hann = false);

NormStats compute_norm_stats(const std::vector<Spectrogram>& specs);
Tensor normalize(const Tensor& values, const NormStats& stats);

// ".prcn" shard: magic "PRCN", version, record count, class count, then
// per record label/source-id/clip-index and 128x513 f32 little-endian values.
struct Shard {
    std::uint32_t class_count = 0;
    std::vector<Spectrogram> records;
};

inline constexpr std::uint32_t kShardVersion = 1;

void save_shard(const Shard& shard, const std::string& path);
Shard load_shard(const std::string& path);

}  // namespace prcnn
