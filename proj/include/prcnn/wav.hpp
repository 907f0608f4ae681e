#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prcnn {

struct WavData {
    std::vector<double> samples;  // mixed down to mono, in [-1, 1]
    std::uint32_t sample_rate = 0;
    std::uint16_t channel_count = 0;
};

// RIFF/WAVE, PCM 16-bit only. Multichannel input is mixed down by
// channel average. Throws FormatError on anything else.
WavData decode_wav(const std::vector<std::uint8_t>& bytes);
WavData load_wav(const std::string& path);

// 16-bit PCM mono writer (test fixtures and sample generation).
void write_wav(const std::string& path, const std::vector<double>& samples,
               std::uint32_t sample_rate);

}  // namespace prcnn
