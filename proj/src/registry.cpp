#include "surgseg/registry.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

namespace surgseg {

const char* head_name(Head h) { return h == Head::anatomy ? "anatomy" : "tool"; }

Head head_from_name(const std::string& s) {
    if (s == "anatomy") return Head::anatomy;
    if (s == "tool") return Head::tool;
    throw std::invalid_argument("unknown head '" + s + "' (expected anatomy or tool)");
}

void LabelRegistry::add(int global_id, Head head, const std::string& name,
                        std::array<uint8_t, 3> color) {
    if (global_id <= 0 || global_id >= 255) {
        throw std::invalid_argument("class id " + std::to_string(global_id) +
                                    " out of range (1..254; 0 is background, 255 ignore)");
    }
    if (by_global_.count(global_id)) {
        throw std::invalid_argument("duplicate class id " + std::to_string(global_id));
    }
    Entry e;
    e.global_id = global_id;
    e.head = head;
    e.name = name;
    e.color = color;
    by_global_[global_id] = std::move(e);
    reindex_locals();
}

void LabelRegistry::reindex_locals() {
    int next_anat = 1, next_tool = 1;
    for (auto& [id, e] : by_global_) {
        e.local_id = (e.head == Head::anatomy) ? next_anat++ : next_tool++;
    }
}

const LabelRegistry::Entry& LabelRegistry::entry(int global_id) const {
    auto it = by_global_.find(global_id);
    if (it == by_global_.end()) {
        throw std::out_of_range("unregistered class id " + std::to_string(global_id));
    }
    return it->second;
}

int LabelRegistry::global_from_local(Head head, int local_id) const {
    if (local_id == 0) return 0;
    for (const auto& [id, e] : by_global_) {
        if (e.head == head && e.local_id == local_id) return id;
    }
    throw std::out_of_range(std::string("unregistered ") + head_name(head) + " local id " +
                            std::to_string(local_id));
}

int LabelRegistry::num_global() const {
    return by_global_.empty() ? 1 : by_global_.rbegin()->first + 1;
}

int LabelRegistry::num_local(Head head) const {
    int n = 0;
    for (const auto& [id, e] : by_global_) {
        if (e.head == head) ++n;
    }
    return n + 1;
}

std::vector<const LabelRegistry::Entry*> LabelRegistry::entries_for(Head head) const {
    std::vector<const Entry*> out;
    for (const auto& [id, e] : by_global_) {
        if (e.head == head) out.push_back(&e);
    }
    return out;
}

bool LabelRegistry::operator==(const LabelRegistry& o) const {
    if (by_global_.size() != o.by_global_.size()) return false;
    for (const auto& [id, e] : by_global_) {
        auto it = o.by_global_.find(id);
        if (it == o.by_global_.end()) return false;
        const Entry& f = it->second;
        if (e.head != f.head || e.local_id != f.local_id || e.name != f.name || e.color != f.color) {
            return false;
        }
    }
    return true;
}

LabelRegistry LabelRegistry::from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    if (!j.is_array()) throw std::invalid_argument("classes manifest must be a JSON array");
    LabelRegistry reg;
    for (const auto& e : j) {
        const int id = e.at("id").get<int>();
        const std::string name = e.at("name").get<std::string>();
        const Head head = head_from_name(e.at("head").get<std::string>());
        const auto col = e.at("color");
        if (!col.is_array() || col.size() != 3) {
            throw std::invalid_argument("class " + std::to_string(id) + ": color must be [r,g,b]");
        }
        reg.add(id, head, name,
                {col[0].get<uint8_t>(), col[1].get<uint8_t>(), col[2].get<uint8_t>()});
    }
    return reg;
}

std::string LabelRegistry::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [id, e] : by_global_) {
        nlohmann::json o;
        o["id"] = id;
        o["name"] = e.name;
        o["head"] = head_name(e.head);
        o["color"] = {e.color[0], e.color[1], e.color[2]};
        j.push_back(o);
    }
    return j.dump(2);
}

}  // namespace surgseg
