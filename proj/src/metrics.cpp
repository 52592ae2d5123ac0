#include "surgseg/metrics.hpp"

#include <sstream>
#include <stdexcept>

#include "surgseg/registry.hpp"

#include <nlohmann/json.hpp>

namespace surgseg {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
    if (num_classes < 1) throw std::invalid_argument("confusion matrix needs at least one class");
    counts_.assign(static_cast<size_t>(k_) * k_, 0);
}

uint64_t ConfusionMatrix::total() const {
    uint64_t t = 0;
    for (uint64_t c : counts_) t += c;
    return t;
}

void ConfusionMatrix::accumulate(const LabelMask& pred, const LabelMask& gt, int ignore_index) {
    if (pred.h != gt.h || pred.w != gt.w) {
        throw std::invalid_argument("confusion matrix: prediction/ground-truth size mismatch");
    }
    for (size_t i = 0; i < gt.v.size(); ++i) {
        const int g = gt.v[i];
        if (g == ignore_index) continue;
        const int p = pred.v[i];
        if (g >= k_ || p >= k_) {
            throw std::invalid_argument("confusion matrix: label out of range (gt " +
                                        std::to_string(g) + ", pred " + std::to_string(p) + ")");
        }
        ++counts_[static_cast<size_t>(g) * k_ + p];
    }
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw std::invalid_argument("confusion matrix: merge class-count mismatch");
    for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

std::vector<std::optional<double>> ConfusionMatrix::iou_per_class() const {
    std::vector<std::optional<double>> out(k_);
    for (int c = 0; c < k_; ++c) {
        uint64_t row = 0, col = 0;
        for (int j = 0; j < k_; ++j) {
            row += at(c, j);
            col += at(j, c);
        }
        const uint64_t tp = at(c, c);
        const uint64_t denom = row + col - tp;
        if (denom > 0) out[c] = static_cast<double>(tp) / static_cast<double>(denom);
    }
    return out;
}

std::vector<std::optional<double>> ConfusionMatrix::dice_per_class() const {
    std::vector<std::optional<double>> out(k_);
    for (int c = 0; c < k_; ++c) {
        uint64_t row = 0, col = 0;
        for (int j = 0; j < k_; ++j) {
            row += at(c, j);
            col += at(j, c);
        }
        if (row + col > 0) out[c] = 2.0 * static_cast<double>(at(c, c)) / static_cast<double>(row + col);
    }
    return out;
}

namespace {

double mean_defined(const std::vector<std::optional<double>>& vals, bool include_background) {
    double acc = 0.0;
    int n = 0;
    for (size_t c = include_background ? 0 : 1; c < vals.size(); ++c) {
        if (vals[c]) {
            acc += *vals[c];
            ++n;
        }
    }
    if (n == 0) throw std::runtime_error("empty evaluation: no class defined");
    return acc / n;
}

}  // namespace

double ConfusionMatrix::miou(bool include_background) const {
    return mean_defined(iou_per_class(), include_background);
}

double ConfusionMatrix::mean_dice(bool include_background) const {
    return mean_defined(dice_per_class(), include_background);
}

MetricsReport make_report(const ConfusionMatrix& cm, const LabelRegistry* registry,
                          bool include_background) {
    std::vector<std::string> names;
    for (int c = 0; c < cm.num_classes(); ++c) {
        if (c == 0) {
            names.push_back("background");
        } else if (registry && registry->has_global(c)) {
            names.push_back(registry->entry(c).name);
        } else {
            names.push_back("class_" + std::to_string(c));
        }
    }
    return make_report_named(cm, names, include_background);
}

MetricsReport make_report_named(const ConfusionMatrix& cm, const std::vector<std::string>& names,
                                bool include_background) {
    if (int(names.size()) != cm.num_classes()) {
        throw std::invalid_argument("make_report_named: one name per class required");
    }
    MetricsReport rep;
    rep.include_background = include_background;
    rep.total_pixels = cm.total();
    const auto ious = cm.iou_per_class();
    const auto dices = cm.dice_per_class();
    for (int c = 0; c < cm.num_classes(); ++c) {
        MetricsReport::PerClass pc;
        pc.id = c;
        pc.name = names[size_t(c)];
        pc.defined = ious[c].has_value();
        pc.iou = ious[c].value_or(0.0);
        pc.dice = dices[c].value_or(0.0);
        for (int j = 0; j < cm.num_classes(); ++j) {
            pc.gt_pixels += cm.at(c, j);
            pc.pred_pixels += cm.at(j, c);
        }
        rep.per_class.push_back(std::move(pc));
    }
    rep.miou = cm.miou(true);
    rep.mean_dice = cm.mean_dice(true);
    // Foreground-only means are undefined for all-background data; report 0.
    try {
        rep.miou_no_background = cm.miou(false);
        rep.mean_dice_no_background = cm.mean_dice(false);
    } catch (const std::runtime_error&) {
        rep.miou_no_background = 0.0;
        rep.mean_dice_no_background = 0.0;
    }
    return rep;
}

std::string MetricsReport::to_json(const std::string& config_echo) const {
    nlohmann::json j;
    j["per_class"] = nlohmann::json::array();
    for (const auto& pc : per_class) {
        nlohmann::json e;
        e["id"] = pc.id;
        e["name"] = pc.name;
        e["defined"] = pc.defined;
        e["iou"] = pc.defined ? nlohmann::json(pc.iou) : nlohmann::json(nullptr);
        e["dice"] = pc.defined ? nlohmann::json(pc.dice) : nlohmann::json(nullptr);
        e["gt_pixels"] = pc.gt_pixels;
        e["pred_pixels"] = pc.pred_pixels;
        j["per_class"].push_back(e);
    }
    j["miou"] = include_background ? miou : miou_no_background;
    j["mean_dice"] = include_background ? mean_dice : mean_dice_no_background;
    j["miou_with_background"] = miou;
    j["mean_dice_with_background"] = mean_dice;
    j["miou_no_background"] = miou_no_background;
    j["mean_dice_no_background"] = mean_dice_no_background;
    j["include_background"] = include_background;
    j["total_pixels"] = total_pixels;
    j["config"] = nlohmann::json::parse(config_echo);
    return j.dump(2);
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os << "id,name,iou,dice,defined,gt_pixels,pred_pixels\n";
    for (const auto& pc : per_class) {
        os << pc.id << "," << pc.name << "," << (pc.defined ? std::to_string(pc.iou) : "") << ","
           << (pc.defined ? std::to_string(pc.dice) : "") << "," << (pc.defined ? 1 : 0) << ","
           << pc.gt_pixels << "," << pc.pred_pixels << "\n";
    }
    os << "mean,mIoU," << (include_background ? miou : miou_no_background) << ","
       << (include_background ? mean_dice : mean_dice_no_background) << ",1,," << "\n";
    return os.str();
}

}  // namespace surgseg
