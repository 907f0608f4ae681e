#include <cstring>
#include <filesystem>
#include <fstream>

#include <zlib.h>

#include "json.hpp"
#include "prcnn/training.hpp"

namespace prcnn {

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
    json pools = json::array();
    for (const PoolSpec& p : c.pools) pools.push_back({p.h, p.w});
    return json{
        {"fusion_mode", c.fusion_mode == FusionMode::concat ? "concat" : "add"},
        {"conv_axis", c.conv_axis == ConvAxis::time ? "time" : "frequency"},
        {"bgru_layers", c.bgru_layers},
        {"hidden_size", c.hidden_size},
        {"class_count", c.class_count},
        {"summary_mode",
         c.summary_mode == SummaryMode::final_states ? "final_states" : "mean_over_time"},
        {"input_time", c.input_time},
        {"input_freq", c.input_freq},
        {"conv_filters", c.conv_filters},
        {"pools", pools},
        {"rnn_pool_width", c.rnn_pool_width},
        {"embed_dim", c.embed_dim},
    };
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.fusion_mode =
        j.at("fusion_mode") == "concat" ? FusionMode::concat : FusionMode::add;
    c.conv_axis = j.at("conv_axis") == "time" ? ConvAxis::time : ConvAxis::frequency;
    c.bgru_layers = j.at("bgru_layers");
    c.hidden_size = j.at("hidden_size");
    c.class_count = j.at("class_count");
    c.summary_mode = j.at("summary_mode") == "final_states" ? SummaryMode::final_states
                                                            : SummaryMode::mean_over_time;
    c.input_time = j.at("input_time");
    c.input_freq = j.at("input_freq");
    c.conv_filters = j.at("conv_filters").get<std::vector<std::size_t>>();
    c.pools.clear();
    for (const auto& p : j.at("pools")) {
        c.pools.push_back(PoolSpec{p.at(0), p.at(1)});
    }
    c.rnn_pool_width = j.at("rnn_pool_width");
    c.embed_dim = j.at("embed_dim");
    return c;
}

void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& buf, std::size_t off) {
    if (off + 4 > buf.size()) throw FormatError("truncated checkpoint");
    return static_cast<std::uint32_t>(buf[off]) |
           (static_cast<std::uint32_t>(buf[off + 1]) << 8) |
           (static_cast<std::uint32_t>(buf[off + 2]) << 16) |
           (static_cast<std::uint32_t>(buf[off + 3]) << 24);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json header{
        {"config", config_to_json(ckpt.config)},
        {"labels", ckpt.label_names},
        {"norm_stats", {{"mean", ckpt.norm_stats.mean}, {"std", ckpt.norm_stats.std_dev}}},
        {"param_bytes", ckpt.flat_params.size() * 8},
    };
    const std::string header_str = header.dump();

    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), {'P', 'C', 'K', 'P'});
    append_u32(buf, ckpt.version);
    append_u32(buf, static_cast<std::uint32_t>(header_str.size()));
    buf.insert(buf.end(), header_str.begin(), header_str.end());
    for (double v : ckpt.flat_params) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int k = 0; k < 8; ++k) {
            buf.push_back(static_cast<std::uint8_t>((bits >> (8 * k)) & 0xff));
        }
    }
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
    append_u32(buf, crc);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint: " + path);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
        if (!out) throw DataError("write failure on checkpoint: " + path);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() < 16 || std::memcmp(buf.data(), "PCKP", 4) != 0) {
        throw FormatError("not a PCKP checkpoint: " + path);
    }
    Checkpoint ckpt;
    ckpt.version = read_u32(buf, 4);
    if (ckpt.version != kCheckpointVersion) {
        throw FormatError("checkpoint version " + std::to_string(ckpt.version) +
                          " unsupported; this build reads version " +
                          std::to_string(kCheckpointVersion));
    }
    const std::uint32_t stored_crc = read_u32(buf, buf.size() - 4);
    const std::uint32_t actual_crc = static_cast<std::uint32_t>(
        crc32(0L, buf.data(), static_cast<uInt>(buf.size() - 4)));
    if (stored_crc != actual_crc) {
        throw FormatError("checkpoint checksum mismatch (file is corrupt): " + path);
    }
    const std::uint32_t header_len = read_u32(buf, 8);
    if (12 + static_cast<std::size_t>(header_len) + 4 > buf.size()) {
        throw FormatError("truncated checkpoint header: " + path);
    }
    const std::string header_str(buf.begin() + 12, buf.begin() + 12 + header_len);
    json header = json::parse(header_str);
    ckpt.config = config_from_json(header.at("config"));
    ckpt.label_names = header.at("labels").get<std::vector<std::string>>();
    ckpt.norm_stats.mean = header.at("norm_stats").at("mean");
    ckpt.norm_stats.std_dev = header.at("norm_stats").at("std");

    const std::size_t param_bytes = header.at("param_bytes");
    const std::size_t body = 12 + header_len;
    if (body + param_bytes + 4 != buf.size()) {
        throw FormatError("checkpoint parameter block has wrong length: " + path);
    }
    ckpt.flat_params.resize(param_bytes / 8);
    for (std::size_t i = 0; i < ckpt.flat_params.size(); ++i) {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) {
            bits |= static_cast<std::uint64_t>(buf[body + i * 8 + k]) << (8 * k);
        }
        std::memcpy(&ckpt.flat_params[i], &bits, 8);
    }
    return ckpt;
}

ModelParams params_from_checkpoint(const Checkpoint& ckpt) {
    ModelParams params = ModelParams::zeros(ckpt.config);
    params.unflatten(ckpt.flat_params);
    return params;
}

}  // namespace prcnn
