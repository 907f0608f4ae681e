#include "prcnn/audio.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace prcnn {

namespace {

constexpr double kPi = 3.14159265358979323846;

// iterative radix-2 FFT, in place; n must be a power of two
void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError("truncated shard while reading " + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

float get_f32(std::istream& in, const std::string& what) {
    const std::uint32_t bits = get_u32(in, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

std::vector<AudioClip> segment_clips(const std::vector<double>& samples,
                                     std::uint32_t sample_rate,
                                     const std::string& source_id) {
    if (sample_rate != kSampleRate) {
        throw ArgumentError("sample rate " + std::to_string(sample_rate) + " Hz; expected " +
                            std::to_string(kSampleRate) +
                            " Hz. Resample the file externally (e.g. ffmpeg -ar 22050).");
    }
    if (samples.size() < kClipSamples) {
        throw DataError("input of " + std::to_string(samples.size()) +
                        " samples is shorter than one 3-second clip (" +
                        std::to_string(kClipSamples) + " samples): " + source_id);
    }
    const std::size_t count = (samples.size() - kClipSamples) / kClipHop + 1;
    std::vector<AudioClip> clips;
    clips.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        AudioClip clip;
        clip.samples.assign(samples.begin() + k * kClipHop,
                            samples.begin() + k * kClipHop + kClipSamples);
        clip.source_id = source_id;
        clip.clip_index = static_cast<std::uint32_t>(k);
        clips.push_back(std::move(clip));
    }
    return clips;
}

Spectrogram stft_magnitude(const AudioClip& clip, bool hann) {
    if (clip.samples.size() != kClipSamples) {
        throw DimensionError("stft_magnitude expects " + std::to_string(kClipSamples) +
                             " samples, got " + std::to_string(clip.samples.size()));
    }
    std::vector<double> window;
    if (hann) {
        window.resize(kFftSize);
        for (std::size_t i = 0; i < kFftSize; ++i) {
            window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) /
                                              static_cast<double>(kFftSize)));
        }
    }

    Spectrogram spec;
    spec.values = Tensor({kFrameCount, kBinCount});
    spec.source_id = clip.source_id;
    spec.clip_index = clip.clip_index;

    std::vector<std::complex<double>> buf(kFftSize);
    for (std::size_t frame = 0; frame < kFrameCount; ++frame) {
        const double* src = clip.samples.data() + frame * kFftHop;
        for (std::size_t i = 0; i < kFftSize; ++i) {
            buf[i] = hann ? src[i] * window[i] : src[i];
        }
        fft_inplace(buf);
        double* row = spec.values.data() + frame * kBinCount;
        for (std::size_t b = 0; b < kBinCount; ++b) {
            row[b] = std::abs(buf[b]);
        }
    }
    return spec;
}

NormStats compute_norm_stats(const std::vector<Spectrogram>& specs) {
    if (specs.empty()) throw DataError("cannot compute normalization stats on empty set");
    double sum = 0.0;
    std::size_t n = 0;
    for (const Spectrogram& s : specs) {
        for (std::size_t i = 0; i < s.values.size(); ++i) sum += s.values[i];
        n += s.values.size();
    }
    const double mean = sum / static_cast<double>(n);
    double var = 0.0;
    for (const Spectrogram& s : specs) {
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            const double d = s.values[i] - mean;
            var += d * d;
        }
    }
    NormStats stats;
    stats.mean = mean;
    stats.std_dev = std::sqrt(var / static_cast<double>(n));
    if (stats.std_dev <= 0.0) {
        throw DataError("degenerate normalization statistics: zero variance");
    }
    return stats;
}

Tensor normalize(const Tensor& values, const NormStats& stats) {
    if (stats.std_dev <= 0.0) {
        throw DataError("degenerate normalization statistics: std must be > 0");
    }
    Tensor out = values;
    const double inv = 1.0 / stats.std_dev;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - stats.mean) * inv;
    return out;
}

void save_shard(const Shard& shard, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write shard: " + path);
        out.write("PRCN", 4);
        put_u32(out, kShardVersion);
        put_u32(out, static_cast<std::uint32_t>(shard.records.size()));
        put_u32(out, shard.class_count);
        for (const Spectrogram& rec : shard.records) {
            put_u32(out, static_cast<std::uint32_t>(rec.label));
            put_u32(out, static_cast<std::uint32_t>(rec.source_id.size()));
            out.write(rec.source_id.data(),
                      static_cast<std::streamsize>(rec.source_id.size()));
            put_u32(out, rec.clip_index);
            if (rec.values.shape() != std::vector<std::size_t>{kFrameCount, kBinCount}) {
                throw DimensionError("shard record has shape " + rec.values.shape_string() +
                                     ", expected [128x513]");
            }
            for (std::size_t i = 0; i < rec.values.size(); ++i) {
                put_f32(out, static_cast<float>(rec.values[i]));
            }
        }
        if (!out) throw DataError("write failure on shard: " + path);
    }
    std::filesystem::rename(tmp, path);
}

Shard load_shard(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open shard: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "PRCN", 4) != 0) {
        throw FormatError("not a PRCN shard: " + path);
    }
    const std::uint32_t version = get_u32(in, "version");
    if (version != kShardVersion) {
        throw FormatError("shard version " + std::to_string(version) + " unsupported; this " +
                          "build reads version " + std::to_string(kShardVersion));
    }
    const std::uint32_t count = get_u32(in, "record count");
    Shard shard;
    shard.class_count = get_u32(in, "class count");
    shard.records.reserve(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        Spectrogram rec;
        rec.label = static_cast<std::int32_t>(get_u32(in, "label"));
        const std::uint32_t id_len = get_u32(in, "source-id length");
        rec.source_id.resize(id_len);
        if (!in.read(rec.source_id.data(), id_len)) {
            throw FormatError("truncated shard while reading source id");
        }
        rec.clip_index = get_u32(in, "clip index");
        rec.values = Tensor({kFrameCount, kBinCount});
        for (std::size_t i = 0; i < rec.values.size(); ++i) {
            rec.values[i] = static_cast<double>(get_f32(in, "spectrogram values"));
        }
        shard.records.push_back(std::move(rec));
    }
    return shard;
}

}  // namespace prcnn
