#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace surgseg {

enum class Head { anatomy, tool };

const char* head_name(Head h);
Head head_from_name(const std::string& s);

// Maps between the shared global label space and the two per-head label
// spaces. Global id 0 and head-local id 0 are background everywhere; head
// local ids are assigned 1.. in ascending global-id order within each head.
class LabelRegistry {
public:
    struct Entry {
        int global_id = 0;
        Head head = Head::anatomy;
        int local_id = 0;
        std::string name;
        std::array<uint8_t, 3> color{0, 0, 0};
    };

    LabelRegistry() = default;
    static LabelRegistry from_json(const std::string& json_text);
    std::string to_json() const;

    // add() assigns the head-local id; entries must come in any order but
    // global ids must be unique, nonzero and < 255 (255 is the ignore value).
    void add(int global_id, Head head, const std::string& name,
             std::array<uint8_t, 3> color);

    bool has_global(int global_id) const { return by_global_.count(global_id) > 0; }
    const Entry& entry(int global_id) const;
    int global_from_local(Head head, int local_id) const;

    int num_global() const;              // max global id + 1 (incl. background)
    int num_local(Head head) const;      // head-local class count incl. background
    std::vector<const Entry*> entries_for(Head head) const;
    const std::map<int, Entry>& all() const { return by_global_; }

    bool operator==(const LabelRegistry& o) const;

private:
    void reindex_locals();
    std::map<int, Entry> by_global_;
};

}  // namespace surgseg
