#include "prcnn/wav.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "prcnn/tensor.hpp"

namespace prcnn {

namespace {

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t off) {
    if (off + 4 > b.size()) {
        throw FormatError("truncated WAV container at byte offset " + std::to_string(off));
    }
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

std::uint16_t read_u16(const std::vector<std::uint8_t>& b, std::size_t off) {
    if (off + 2 > b.size()) {
        throw FormatError("truncated WAV container at byte offset " + std::to_string(off));
    }
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

bool tag_is(const std::vector<std::uint8_t>& b, std::size_t off, const char* tag) {
    return off + 4 <= b.size() && std::memcmp(b.data() + off, tag, 4) == 0;
}

}  // namespace

WavData decode_wav(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
        throw FormatError("not a RIFF/WAVE container");
    }

    WavData out;
    std::uint16_t format_code = 0, bits = 0;
    bool have_fmt = false;
    std::size_t data_off = 0, data_len = 0;

    std::size_t off = 12;
    while (off + 8 <= bytes.size()) {
        const std::size_t chunk_len = read_u32(bytes, off + 4);
        const std::size_t body = off + 8;
        if (body + chunk_len > bytes.size()) {
            throw FormatError("truncated WAV chunk at byte offset " + std::to_string(off));
        }
        if (tag_is(bytes, off, "fmt ")) {
            if (chunk_len < 16) throw FormatError("malformed fmt chunk");
            format_code = read_u16(bytes, body);
            out.channel_count = read_u16(bytes, body + 2);
            out.sample_rate = read_u32(bytes, body + 4);
            bits = read_u16(bytes, body + 14);
            have_fmt = true;
        } else if (tag_is(bytes, off, "data")) {
            data_off = body;
            data_len = chunk_len;
        }
        off = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data_off == 0) {
        throw FormatError("WAV container missing fmt or data chunk");
    }
    if (format_code != 1) {
        throw FormatError("unsupported WAV codec " + std::to_string(format_code) +
                          " (only PCM integer is supported)");
    }
    if (bits != 16) {
        throw FormatError("unsupported PCM width " + std::to_string(bits) +
                          " bits (only 16-bit is supported)");
    }
    if (out.channel_count == 0) throw FormatError("WAV declares zero channels");

    const std::size_t frame_bytes = 2 * out.channel_count;
    const std::size_t frames = data_len / frame_bytes;
    out.samples.resize(frames);
    const double scale = 1.0 / (32768.0 * out.channel_count);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < out.channel_count; ++c) {
            const std::size_t p = data_off + i * frame_bytes + 2 * c;
            const std::int16_t s =
                static_cast<std::int16_t>(bytes[p] | (bytes[p + 1] << 8));
            acc += static_cast<double>(s);
        }
        out.samples[i] = acc * scale;
    }
    return out;
}

WavData load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open WAV file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_wav(bytes);
}

void write_wav(const std::string& path, const std::vector<double>& samples,
               std::uint32_t sample_rate) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write WAV file: " + path);

    const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
    auto put_u32 = [&](std::uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
        out.write(b, 4);
    };
    auto put_u16 = [&](std::uint16_t v) {
        char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
        out.write(b, 2);
    };

    out.write("RIFF", 4);
    put_u32(36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(sample_rate);
    put_u32(sample_rate * 2);
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_len);
    for (double s : samples) {
        const double clamped = std::clamp(s, -1.0, 1.0);
        const std::int16_t q = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
        put_u16(static_cast<std::uint16_t>(q));
    }
}

}  // namespace prcnn
