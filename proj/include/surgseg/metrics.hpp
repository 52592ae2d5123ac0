#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "surgseg/tensor.hpp"

namespace surgseg {

class LabelRegistry;

// K x K pixel tally; rows are ground truth, columns prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes);

    int num_classes() const { return k_; }
    uint64_t at(int gt, int pred) const { return counts_[static_cast<size_t>(gt) * k_ + pred]; }
    uint64_t& at(int gt, int pred) { return counts_[static_cast<size_t>(gt) * k_ + pred]; }
    uint64_t total() const;

    void accumulate(const LabelMask& pred, const LabelMask& gt, int ignore_index = 255);

    // Elementwise sum; the merge used for parallel per-image accumulation.
    ConfusionMatrix& merge(const ConfusionMatrix& other);

    // IoU_k = tp / (row + col - tp); nullopt when the class is absent from
    // both ground truth and prediction.
    std::vector<std::optional<double>> iou_per_class() const;
    std::vector<std::optional<double>> dice_per_class() const;
    double miou(bool include_background = true) const;
    double mean_dice(bool include_background = true) const;

private:
    int k_;
    std::vector<uint64_t> counts_;
};

struct MetricsReport {
    struct PerClass {
        int id = 0;
        std::string name;
        bool defined = false;
        double iou = 0.0;
        double dice = 0.0;
        uint64_t gt_pixels = 0;
        uint64_t pred_pixels = 0;
    };
    std::vector<PerClass> per_class;
    double miou = 0.0;
    double mean_dice = 0.0;
    double miou_no_background = 0.0;
    double mean_dice_no_background = 0.0;
    uint64_t total_pixels = 0;
    bool include_background = true;

    std::string to_json(const std::string& config_echo = "{}") const;
    std::string to_csv() const;
};

// Names come from the registry when given; otherwise "class_<k>".
MetricsReport make_report(const ConfusionMatrix& cm, const LabelRegistry* registry = nullptr,
                          bool include_background = true);

// Same, with caller-chosen class names (index == class id in the matrix);
// used for head-local matrices where index is not a global id.
MetricsReport make_report_named(const ConfusionMatrix& cm, const std::vector<std::string>& names,
                                bool include_background = true);

}  // namespace surgseg
