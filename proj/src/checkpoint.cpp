#include "surgseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace surgseg {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint truncated");
    return v;
}

json read_header(std::istream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error(path + " is not a checkpoint (bad magic)");
    }
    const auto version = read_pod<uint32_t>(in);
    if (version != kVersion) {
        throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = read_pod<uint64_t>(in);
    std::string text(header_len, '\0');
    in.read(text.data(), std::streamsize(header_len));
    if (!in) throw std::runtime_error("checkpoint truncated");
    return json::parse(text);
}

CheckpointMeta meta_from_header(const json& h) {
    CheckpointMeta meta;
    meta.model = ModelConfig::from_json(h.at("model").dump());
    meta.registry = LabelRegistry::from_json(h.at("registry").dump());
    meta.step = h.at("step").get<int64_t>();
    return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const SegModel& model, const LabelRegistry& registry,
                     int64_t step) {
    json header;
    header["model"] = json::parse(model.config().to_json());
    header["registry"] = json::parse(registry.to_json());
    header["step"] = step;
    json manifest = json::array();
    for (const auto& [name, p] : model.params().items()) {
        manifest.push_back({{"name", name}, {"shape", p->value.shape}, {"dtype", "f32"}});
    }
    header["params"] = std::move(manifest);
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    write_pod(out, kVersion);
    write_pod(out, uint64_t(text.size()));
    out.write(text.data(), std::streamsize(text.size()));

    std::vector<float> buf;
    for (const auto& [name, p] : model.params().items()) {
        buf.resize(size_t(p->value.numel()));
        for (int64_t i = 0; i < p->value.numel(); ++i) buf[size_t(i)] = float(p->value[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  std::streamsize(buf.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

CheckpointMeta load_checkpoint_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    return meta_from_header(read_header(in, path));
}

std::unique_ptr<SegModel> load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    const json header = read_header(in, path);
    CheckpointMeta meta = meta_from_header(header);

    auto model = std::make_unique<SegModel>(meta.model);
    const auto& items = model->params().items();
    const json& manifest = header.at("params");
    if (manifest.size() != items.size()) {
        throw std::runtime_error(path + ": checkpoint has " + std::to_string(manifest.size()) +
                                 " parameters, model expects " + std::to_string(items.size()));
    }
    std::vector<float> buf;
    for (size_t i = 0; i < items.size(); ++i) {
        const json& entry = manifest[i];
        const auto name = entry.at("name").get<std::string>();
        if (name != items[i].first) {
            throw std::runtime_error(path + ": parameter order mismatch at '" + name + "' vs '" +
                                     items[i].first + "'");
        }
        if (entry.at("dtype").get<std::string>() != "f32") {
            throw std::runtime_error(path + ": unsupported dtype for " + name);
        }
        Tensor& value = items[i].second->value;
        const auto shape = entry.at("shape").get<Shape>();
        if (shape != value.shape) {
            throw std::runtime_error(path + ": shape mismatch for " + name);
        }
        buf.resize(size_t(value.numel()));
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
        if (!in) throw std::runtime_error("checkpoint truncated in tensor data: " + path);
        for (int64_t j = 0; j < value.numel(); ++j) value[j] = double(buf[size_t(j)]);
    }
    if (meta_out) *meta_out = std::move(meta);
    return model;
}

}  // namespace surgseg
