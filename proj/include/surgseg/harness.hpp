#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "surgseg/config.hpp"
#include "surgseg/data.hpp"
#include "surgseg/fusion.hpp"
#include "surgseg/metrics.hpp"
#include "surgseg/model.hpp"
#include "surgseg/png_io.hpp"

namespace surgseg {

// Resolves the model half of a training config against the label registry.
ModelConfig model_config_from(const TrainConfig& cfg, const LabelRegistry& registry);

struct TrainResult {
    std::vector<double> epoch_mean_loss;
    std::vector<uint64_t> epoch_param_hash;  // parameter hash after each epoch
    std::vector<double> epoch_val_miou;      // filled when a val set is given
    int best_epoch = -1;                     // epoch whose weights the model keeps
    int64_t steps = 0;
    double final_loss = 0.0;
};

// Full training run over cfg.epochs. Shuffling, augmentation draws and init
// all derive from cfg.seed, so a rerun reproduces parameters exactly. Throws
// before the optimizer step if the loss turns non-finite. With a validation
// set the model is scored after every epoch and ends up holding the weights
// of its best validation epoch.
TrainResult train_model(SegModel& model, const std::vector<Sample>& train, const TrainConfig& cfg,
                        std::ostream* log = nullptr, const std::vector<Sample>* val = nullptr,
                        const LabelRegistry* registry = nullptr);

// Head-local evaluation of one instance against its own masks.
MetricsReport evaluate_head(const SegModel& model, const std::vector<Sample>& data,
                            const LabelRegistry& registry, ConfusionMatrix* cm_out = nullptr);

// Ground truth in the global label space: ignore wins, then instrument
// foreground, then anatomy.
LabelMask fused_ground_truth(const Sample& s, const LabelRegistry& registry);

// Wraps a head-local mask as a perfectly confident prediction. Debug path:
// lets the fusion/metrics plumbing run without any model in the loop.
SegOutput output_from_mask(const LabelMask& local, Head head, int num_local);

struct FuseOptions {
    FusionRule rule = FusionRule::priority;
    int morph_radius = 0;    // 0 = no morphological cleanup
    bool inject_gt = false;  // bypass the models and fuse the ground truth
};

// Fused (global-label) evaluation of an instrument + anatomy model pair.
MetricsReport evaluate_fused(const SegModel& inst, const SegModel& anat,
                             const std::vector<Sample>& data, const LabelRegistry& registry,
                             const FuseOptions& opt = {}, ConfusionMatrix* cm_out = nullptr);

// Runs both models on one image of arbitrary size: replicate-pads to the next
// multiple of 32, infers, crops back, fuses.
LabelMask infer_fused(const SegModel& inst, const SegModel& anat, const Tensor& image,
                      const LabelRegistry& registry, const FuseOptions& opt = {});

// Blends each predicted class color over the frame; background pixels keep
// the original frame content.
ImageU8 overlay_image(const Tensor& image, const LabelMask& fused_global,
                      const LabelRegistry& registry, double blend = 0.5);

struct AblationRow {
    std::string variant;           // "tversky", "cross_entropy" or "combined"
    std::vector<double> val_miou;  // one entry per seed
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
    // Loss values of the trained model on a fixed probe image, one per seed.
    // probe_loss is the variant's own objective; the components let a caller
    // verify what the blend weight actually selected.
    std::vector<double> probe_loss;
    std::vector<double> probe_tversky;
    std::vector<double> probe_ce;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    std::vector<uint64_t> seeds;

    std::string to_json(const std::string& config_echo = "{}") const;
    std::string to_csv() const;
};

// Trains the configured instance from scratch once per (loss variant, seed):
// pure overlap loss, pure cross-entropy, and the blended objective. Scores
// head-local validation mIoU for each run.
AblationResult ablate_losses(const TrainConfig& cfg, const LabelRegistry& registry,
                             const std::vector<Sample>& train, const std::vector<Sample>& val,
                             const std::vector<uint64_t>& seeds, std::ostream* log = nullptr);

}  // namespace surgseg
