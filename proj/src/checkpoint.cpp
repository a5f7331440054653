#include "sslhar/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sslhar/netspec.hpp"

namespace sslhar {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'L', 'H', 'A', 'R', '0', '1'};
constexpr int kVersion = 1;

using nlohmann::json;

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw std::runtime_error("checkpoint: unexpected end of file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json manifest;
    manifest["version"] = ckpt.version;
    manifest["model_kind"] = ckpt.model_kind;
    manifest["spec"] = ckpt.spec;
    manifest["in_channels"] = ckpt.in_channels;
    manifest["in_len"] = ckpt.in_len;
    manifest["n_classes"] = ckpt.n_classes;
    manifest["window_seconds"] = ckpt.window_seconds;
    manifest["overlap"] = ckpt.overlap;
    manifest["classes"] = ckpt.classes;
    manifest["norm"] = {{"mean", ckpt.norm.mean},
                        {"scale", ckpt.norm.scale},
                        {"zero_variance_channels", ckpt.norm.zero_variance_channels}};
    manifest["rng"] = {{"seed", ckpt.rng_seed}, {"state", ckpt.rng_state}};

    json arrays = json::array();
    uint64_t offset = 0;
    for (const auto& [name, tensor] : ckpt.arrays) {
        json entry;
        entry["name"] = name;
        entry["shape"] = tensor.shape();
        entry["dtype"] = "f32";
        entry["offset"] = offset;
        arrays.push_back(std::move(entry));
        offset += static_cast<uint64_t>(tensor.size()) * 4;
    }
    manifest["arrays"] = std::move(arrays);

    const std::string text = manifest.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out.write(kMagic, 8);
    write_u32(out, static_cast<uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, tensor] : ckpt.arrays) {
        std::vector<float> buf(static_cast<size_t>(tensor.size()));
        for (int64_t i = 0; i < tensor.size(); ++i) buf[static_cast<size_t>(i)] =
            static_cast<float>(tensor[i]);
        // Array payloads are little-endian on disk; this writes the host
        // representation, which matches on every platform this targets.
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * 4));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint");
    }
    const uint32_t manifest_len = read_u32(in);
    std::string text(manifest_len, '\0');
    in.read(text.data(), manifest_len);
    if (in.gcount() != static_cast<std::streamsize>(manifest_len)) {
        throw std::runtime_error("checkpoint: unexpected end of file");
    }
    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error("checkpoint: bad manifest: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    ckpt.version = manifest.at("version").get<int>();
    if (ckpt.version != kVersion) {
        throw std::runtime_error("checkpoint: version " + std::to_string(ckpt.version) +
                                 " not supported (expected " + std::to_string(kVersion) + ")");
    }
    ckpt.model_kind = manifest.at("model_kind").get<std::string>();
    ckpt.spec = manifest.at("spec").get<std::string>();
    ckpt.in_channels = manifest.at("in_channels").get<int>();
    ckpt.in_len = manifest.at("in_len").get<int>();
    ckpt.n_classes = manifest.at("n_classes").get<int>();
    ckpt.window_seconds = manifest.at("window_seconds").get<double>();
    ckpt.overlap = manifest.at("overlap").get<double>();
    ckpt.classes = manifest.at("classes").get<std::vector<std::string>>();
    ckpt.norm.mean = manifest.at("norm").at("mean").get<std::vector<double>>();
    ckpt.norm.scale = manifest.at("norm").at("scale").get<std::vector<double>>();
    ckpt.norm.zero_variance_channels =
        manifest.at("norm").at("zero_variance_channels").get<std::vector<int>>();
    ckpt.rng_seed = manifest.at("rng").at("seed").get<uint64_t>();
    ckpt.rng_state = manifest.at("rng").at("state").get<uint64_t>();

    for (const json& entry : manifest.at("arrays")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        if (entry.at("dtype").get<std::string>() != "f32") {
            throw std::runtime_error("checkpoint: array '" + name + "' has unsupported dtype");
        }
        const int64_t count = numel(shape);
        std::vector<float> buf(static_cast<size_t>(count));
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * 4));
        if (in.gcount() != static_cast<std::streamsize>(count * 4)) {
            throw std::runtime_error("checkpoint: unexpected end of file");
        }
        std::vector<double> data(static_cast<size_t>(count));
        for (int64_t i = 0; i < count; ++i) data[static_cast<size_t>(i)] =
            static_cast<double>(buf[static_cast<size_t>(i)]);
        ckpt.arrays.emplace_back(name, Tensor(shape, std::move(data)));
    }
    return ckpt;
}

Checkpoint checkpoint_from_model(const Model& model, const std::vector<std::string>& classes,
                                 const NormStats& norm, double window_seconds, double overlap) {
    Checkpoint ckpt;
    ckpt.model_kind = to_string(model.kind());
    ckpt.spec = model.spec().source;
    ckpt.in_channels = model.spec().in_channels;
    ckpt.in_len = model.spec().in_len;
    ckpt.n_classes = model.spec().n_classes;
    ckpt.window_seconds = window_seconds;
    ckpt.overlap = overlap;
    ckpt.classes = classes;
    ckpt.norm = norm;
    for (const std::string& name : model.params().names()) {
        ckpt.arrays.emplace_back(name, model.params().value(name));
    }
    for (const std::string& name : model.buffers().names()) {
        ckpt.arrays.emplace_back(name, model.buffers().value(name));
    }
    return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    const NetworkSpec spec =
        parse_spec(ckpt.spec, ckpt.in_channels, ckpt.in_len, ckpt.n_classes);
    Model model(spec, model_kind_from_string(ckpt.model_kind));
    for (const auto& [name, tensor] : ckpt.arrays) {
        Tensor* dst = nullptr;
        if (model.params().has(name)) {
            dst = &model.params().value(name);
        } else if (model.buffers().has(name)) {
            dst = &model.buffers().value(name);
        } else {
            throw std::runtime_error("checkpoint: array '" + name +
                                     "' does not exist in a " + ckpt.model_kind + " model");
        }
        if (!dst->same_shape(tensor)) {
            throw std::runtime_error("checkpoint: array '" + name + "' has shape " +
                                     shape_str(tensor) + ", model expects " + shape_str(*dst));
        }
        *dst = tensor;
    }
    return model;
}

}  // namespace sslhar
