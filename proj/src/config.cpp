#include "surgseg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace surgseg {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw std::invalid_argument("config section '" + where + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) {
            throw std::invalid_argument("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
        }
    }
}

template <typename T>
void grab(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

DecoderKind TrainConfig::resolved_decoder() const {
    if (decoder == "mlp") return DecoderKind::mlp;
    if (decoder == "skip") return DecoderKind::skip;
    if (decoder == "auto") return head == Head::anatomy ? DecoderKind::mlp : DecoderKind::skip;
    throw std::invalid_argument("model.decoder must be auto, mlp or skip (got '" + decoder + "')");
}

void TrainConfig::validate() const {
    resolved_decoder();
    if (embed_dim <= 0) throw std::invalid_argument("model.embed_dim must be positive");
    if (epochs <= 0) throw std::invalid_argument("train.epochs must be positive");
    if (batch_size <= 0) throw std::invalid_argument("train.batch_size must be positive");
    if (log_every <= 0) throw std::invalid_argument("train.log_every must be positive");
    optim.validate();
    loss.validate();
    augment.validate();
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    require_keys(j, "", {"data", "model", "optim", "loss", "train", "augment"});

    TrainConfig cfg;
    if (j.contains("data")) {
        const json& d = j["data"];
        require_keys(d, "data", {"root", "train_split", "val_split"});
        grab(d, "root", cfg.data_root);
        grab(d, "train_split", cfg.train_split);
        grab(d, "val_split", cfg.val_split);
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        require_keys(m, "model", {"head", "encoder_preset", "decoder", "embed_dim", "ablate_skip"});
        if (m.contains("head")) cfg.head = head_from_name(m.at("head").get<std::string>());
        grab(m, "encoder_preset", cfg.encoder_preset);
        grab(m, "decoder", cfg.decoder);
        grab(m, "embed_dim", cfg.embed_dim);
        grab(m, "ablate_skip", cfg.ablate_skip);
    }
    if (j.contains("optim")) {
        const json& o = j["optim"];
        require_keys(o, "optim",
                     {"lr_base", "lr_max", "cycle_steps", "beta1", "beta2", "eps", "weight_decay"});
        grab(o, "lr_base", cfg.optim.lr_base);
        cfg.optim.lr_max = cfg.optim.lr_base;  // constant schedule unless raised
        grab(o, "lr_max", cfg.optim.lr_max);
        grab(o, "cycle_steps", cfg.optim.cycle_steps);
        grab(o, "beta1", cfg.optim.beta1);
        grab(o, "beta2", cfg.optim.beta2);
        grab(o, "eps", cfg.optim.eps);
        grab(o, "weight_decay", cfg.optim.weight_decay);
    }
    if (j.contains("loss")) {
        const json& l = j["loss"];
        require_keys(l, "loss", {"alpha", "beta", "lambda", "smooth"});
        grab(l, "alpha", cfg.loss.alpha);
        grab(l, "beta", cfg.loss.beta);
        if (l.contains("lambda")) cfg.loss.lambda_combined = l.at("lambda").get<double>();
        grab(l, "smooth", cfg.loss.smooth);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        require_keys(t, "train",
                     {"epochs", "batch_size", "seed", "log_every", "checkpoint"});
        grab(t, "epochs", cfg.epochs);
        grab(t, "batch_size", cfg.batch_size);
        grab(t, "seed", cfg.seed);
        grab(t, "log_every", cfg.log_every);
        grab(t, "checkpoint", cfg.checkpoint_out);
    }
    if (j.contains("augment")) {
        const json& a = j["augment"];
        require_keys(a, "augment", {"hflip_prob", "vflip_prob", "rotation_degrees", "crop_fraction"});
        grab(a, "hflip_prob", cfg.augment.hflip_prob);
        grab(a, "vflip_prob", cfg.augment.vflip_prob);
        grab(a, "rotation_degrees", cfg.augment.rotation_degrees);
        grab(a, "crop_fraction", cfg.augment.crop_fraction);
    }
    cfg.validate();
    return cfg;
}

TrainConfig TrainConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
    std::string text = "{}";
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    for (const std::string& assignment : overrides) {
        text = apply_config_override(text, assignment);
    }
    return from_json_text(text);
}

std::string TrainConfig::to_json() const {
    json j;
    j["data"] = {{"root", data_root}, {"train_split", train_split}, {"val_split", val_split}};
    j["model"] = {{"head", head_name(head)},
                  {"encoder_preset", encoder_preset},
                  {"decoder", decoder},
                  {"embed_dim", embed_dim},
                  {"ablate_skip", ablate_skip}};
    j["optim"] = {{"lr_base", optim.lr_base},   {"lr_max", optim.lr_max},
                  {"cycle_steps", optim.cycle_steps}, {"beta1", optim.beta1},
                  {"beta2", optim.beta2},       {"eps", optim.eps},
                  {"weight_decay", optim.weight_decay}};
    j["loss"] = {{"alpha", loss.alpha},
                 {"beta", loss.beta},
                 {"lambda", loss.lambda_combined},
                 {"smooth", loss.smooth}};
    j["train"] = {{"epochs", epochs},
                  {"batch_size", batch_size},
                  {"seed", seed},
                  {"log_every", log_every},
                  {"checkpoint", checkpoint_out}};
    j["augment"] = {{"hflip_prob", augment.hflip_prob},
                    {"vflip_prob", augment.vflip_prob},
                    {"rotation_degrees", augment.rotation_degrees},
                    {"crop_fraction", augment.crop_fraction}};
    return j.dump(2);
}

std::string apply_config_override(const std::string& json_text, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw std::invalid_argument("override must look like section.key=value, got '" + assignment + "'");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);

    json doc = json::parse(json_text);
    json* node = &doc;
    size_t start = 0;
    for (;;) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw std::invalid_argument("bad override path '" + path + "'");
        if (dot == std::string::npos) {
            json parsed = json::parse(value_text, nullptr, /*allow_exceptions=*/false);
            (*node)[key] = parsed.is_discarded() ? json(value_text) : parsed;
            break;
        }
        node = &(*node)[key];
        if (!node->is_object() && !node->is_null()) {
            throw std::invalid_argument("override path '" + path + "' crosses a non-object value");
        }
        start = dot + 1;
    }
    return doc.dump();
}

}  // namespace surgseg
