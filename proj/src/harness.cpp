#include "surgseg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "surgseg/loss.hpp"

namespace surgseg {

using nlohmann::json;

ModelConfig model_config_from(const TrainConfig& cfg, const LabelRegistry& registry) {
    ModelConfig mc;
    mc.encoder_preset = cfg.encoder_preset;
    mc.decoder = cfg.resolved_decoder();
    mc.embed_dim = cfg.embed_dim;
    mc.head = cfg.head;
    mc.num_classes = registry.num_local(cfg.head);
    mc.ablate_skip = cfg.ablate_skip;
    mc.init_seed = cfg.seed;
    return mc;
}

namespace {

const LabelMask& head_mask(const Sample& s, Head head) {
    return head == Head::anatomy ? s.anat_mask : s.tool_mask;
}

void check_batchable(const std::vector<Sample>& data) {
    if (data.empty()) throw std::invalid_argument("empty sample set");
    const int64_t h = data[0].image.dim(1), w = data[0].image.dim(2);
    for (const Sample& s : data) {
        if (s.image.dim(1) != h || s.image.dim(2) != w) {
            throw std::invalid_argument("sample '" + s.id + "' differs in size from the first sample");
        }
    }
}

Tensor stack_images(const std::vector<Sample>& batch) {
    const int64_t h = batch[0].image.dim(1), w = batch[0].image.dim(2);
    Tensor out = Tensor::zeros({int64_t(batch.size()), 3, h, w});
    for (size_t b = 0; b < batch.size(); ++b) {
        std::copy(batch[b].image.data.begin(), batch[b].image.data.end(),
                  out.data.begin() + int64_t(b) * 3 * h * w);
    }
    return out;
}

std::vector<uint8_t> stack_targets(const std::vector<Sample>& batch, Head head) {
    std::vector<uint8_t> out;
    out.reserve(batch.size() * batch[0].anat_mask.v.size());
    for (const Sample& s : batch) {
        const LabelMask& m = head_mask(s, head);
        out.insert(out.end(), m.v.begin(), m.v.end());
    }
    return out;
}

std::vector<std::string> local_names(const LabelRegistry& registry, Head head) {
    std::vector<std::string> names{"background"};
    for (const auto* e : registry.entries_for(head)) names.push_back(e->name);
    return names;
}

}  // namespace

TrainResult train_model(SegModel& model, const std::vector<Sample>& train, const TrainConfig& cfg,
                        std::ostream* log, const std::vector<Sample>* val,
                        const LabelRegistry* registry) {
    check_batchable(train);
    if (val && !registry) throw std::invalid_argument("train_model: validation needs a registry");
    Adam opt(model.params(), cfg.optim);
    TrainResult result;
    double best_miou = -1.0;
    std::vector<Tensor> best_params;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Deterministic shuffle, then per-position augmentation streams.
        std::vector<size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = Rng::derive(cfg.seed, 0x5u, uint64_t(epoch));
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[size_t(shuffle_rng.uniform_int(int64_t(i)))]);
        }

        double loss_sum = 0.0;
        int64_t batches = 0;
        for (size_t pos = 0; pos < order.size(); pos += size_t(cfg.batch_size)) {
            std::vector<Sample> batch;
            for (size_t k = pos; k < std::min(order.size(), pos + size_t(cfg.batch_size)); ++k) {
                Rng aug_rng = Rng::derive(cfg.seed ^ 0xA06ULL, uint64_t(epoch), uint64_t(k));
                batch.push_back(augment(train[order[k]], cfg.augment, aug_rng));
            }
            const Tensor images = stack_images(batch);
            const std::vector<uint8_t> targets = stack_targets(batch, cfg.head);

            ad::Var probs = model.probs(images);
            ad::Var loss = combined_loss(probs, targets, cfg.loss);
            const double loss_value = loss->value[0];
            if (!std::isfinite(loss_value)) {
                throw std::runtime_error("training diverged: non-finite loss at step " +
                                         std::to_string(opt.steps_done()));
            }
            opt.zero_grad();
            ad::backward(loss);
            const double lr = opt.step();

            loss_sum += loss_value;
            ++batches;
            result.final_loss = loss_value;
            if (log && (opt.steps_done() - 1) % cfg.log_every == 0) {
                (*log) << "epoch " << (epoch + 1) << "/" << cfg.epochs << " step " << opt.steps_done()
                       << " loss " << loss_value << " lr " << lr << "\n";
            }
        }
        result.epoch_mean_loss.push_back(loss_sum / double(batches));
        result.epoch_param_hash.push_back(model.params().value_hash());
        if (log) {
            (*log) << "epoch " << (epoch + 1) << "/" << cfg.epochs << " mean loss "
                   << result.epoch_mean_loss.back() << "\n";
        }
        if (val && !val->empty()) {
            const MetricsReport rep = evaluate_head(model, *val, *registry);
            result.epoch_val_miou.push_back(rep.miou);
            if (rep.miou > best_miou) {
                best_miou = rep.miou;
                result.best_epoch = epoch;
                best_params.clear();
                for (const auto& item : model.params().items()) best_params.push_back(item.second->value);
            }
            if (log) {
                (*log) << "epoch " << (epoch + 1) << "/" << cfg.epochs << " val mIoU " << rep.miou
                       << "\n";
            }
        }
    }
    // Keep the weights of the best validation epoch rather than the last one.
    if (!best_params.empty()) {
        const auto& items = model.params().items();
        for (size_t i = 0; i < items.size(); ++i) items[i].second->value = best_params[i];
    }
    result.steps = opt.steps_done();
    return result;
}

MetricsReport evaluate_head(const SegModel& model, const std::vector<Sample>& data,
                            const LabelRegistry& registry, ConfusionMatrix* cm_out) {
    const Head head = model.config().head;
    ConfusionMatrix cm(model.config().num_classes);
    for (const Sample& s : data) {
        const SegOutput out = model.infer(s.image);
        cm.accumulate(out.labels, head_mask(s, head));
    }
    if (cm_out) *cm_out = cm;
    return make_report_named(cm, local_names(registry, head));
}

LabelMask fused_ground_truth(const Sample& s, const LabelRegistry& registry) {
    LabelMask gt(s.anat_mask.h, s.anat_mask.w);
    for (size_t i = 0; i < gt.v.size(); ++i) {
        const uint8_t a = s.anat_mask.v[i], t = s.tool_mask.v[i];
        if (a == 255 || t == 255) {
            gt.v[i] = 255;
        } else if (t != 0) {
            gt.v[i] = uint8_t(registry.global_from_local(Head::tool, t));
        } else if (a != 0) {
            gt.v[i] = uint8_t(registry.global_from_local(Head::anatomy, a));
        }
    }
    return gt;
}

SegOutput output_from_mask(const LabelMask& local, Head head, int num_local) {
    SegOutput out;
    out.head = head;
    out.num_classes = num_local;
    out.probs = Tensor::zeros({num_local, local.h, local.w});
    out.labels = LabelMask(local.h, local.w);
    out.confidence = Tensor::full({local.h, local.w}, 1.0);
    const int64_t plane = int64_t(local.h) * local.w;
    for (int64_t i = 0; i < plane; ++i) {
        const uint8_t v = local.v[size_t(i)] == 255 ? 0 : local.v[size_t(i)];  // ignore -> background
        out.labels.v[size_t(i)] = v;
        out.probs.data[size_t(v * plane + i)] = 1.0;
    }
    return out;
}

namespace {

MetricsReport fused_report(const std::vector<LabelMask>& fused, const std::vector<Sample>& data,
                           const LabelRegistry& registry, ConfusionMatrix* cm_out) {
    ConfusionMatrix cm(registry.num_global());
    for (size_t i = 0; i < data.size(); ++i) {
        cm.accumulate(fused[i], fused_ground_truth(data[i], registry));
    }
    if (cm_out) *cm_out = cm;
    return make_report(cm, &registry);
}

}  // namespace

MetricsReport evaluate_fused(const SegModel& inst, const SegModel& anat,
                             const std::vector<Sample>& data, const LabelRegistry& registry,
                             const FuseOptions& opt, ConfusionMatrix* cm_out) {
    if (inst.config().head != Head::tool || anat.config().head != Head::anatomy) {
        throw std::invalid_argument("evaluate_fused expects an instrument model and an anatomy model");
    }
    std::vector<LabelMask> fused;
    fused.reserve(data.size());
    for (const Sample& s : data) {
        SegOutput io = opt.inject_gt
                           ? output_from_mask(s.tool_mask, Head::tool, registry.num_local(Head::tool))
                           : inst.infer(s.image);
        SegOutput ao = opt.inject_gt
                           ? output_from_mask(s.anat_mask, Head::anatomy,
                                              registry.num_local(Head::anatomy))
                           : anat.infer(s.image);
        LabelMask f = priority_fuse(io, ao, registry, opt.rule);
        if (opt.morph_radius > 0) f = morph_refine(f, opt.morph_radius);
        fused.push_back(std::move(f));
    }
    return fused_report(fused, data, registry, cm_out);
}

namespace {

Tensor replicate_pad(const Tensor& image, int64_t out_h, int64_t out_w) {
    const int64_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    Tensor out = Tensor::zeros({C, out_h, out_w});
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t r = 0; r < out_h; ++r) {
            const int64_t sr = std::min(r, H - 1);
            for (int64_t x = 0; x < out_w; ++x) {
                out.data[(c * out_h + r) * out_w + x] =
                    image.data[(c * H + sr) * W + std::min(x, W - 1)];
            }
        }
    }
    return out;
}

}  // namespace

LabelMask infer_fused(const SegModel& inst, const SegModel& anat, const Tensor& image,
                      const LabelRegistry& registry, const FuseOptions& opt) {
    if (image.ndim() != 3 || image.dim(0) != 3) {
        throw std::invalid_argument("expected a single (3,H,W) image, got " + image.shape_str());
    }
    const int64_t H = image.dim(1), W = image.dim(2);
    const int64_t ph = (H + 31) / 32 * 32, pw = (W + 31) / 32 * 32;
    const Tensor padded = (ph == H && pw == W) ? image : replicate_pad(image, ph, pw);
    const SegOutput io = inst.infer(padded);
    const SegOutput ao = anat.infer(padded);
    LabelMask fused = priority_fuse(io, ao, registry, opt.rule);
    if (opt.morph_radius > 0) fused = morph_refine(fused, opt.morph_radius);
    if (ph == H && pw == W) return fused;
    LabelMask cropped{int(H), int(W)};
    for (int64_t r = 0; r < H; ++r)
        for (int64_t c = 0; c < W; ++c) cropped.at(int(r), int(c)) = fused.at(int(r), int(c));
    return cropped;
}

ImageU8 overlay_image(const Tensor& image, const LabelMask& fused_global,
                      const LabelRegistry& registry, double blend) {
    if (image.dim(1) != fused_global.h || image.dim(2) != fused_global.w) {
        throw std::invalid_argument("overlay: image and label sizes differ");
    }
    Tensor mixed = image;
    const int64_t plane = image.dim(1) * image.dim(2);
    for (int64_t i = 0; i < plane; ++i) {
        const uint8_t g = fused_global.v[size_t(i)];
        if (g == 0 || g == 255) continue;
        const auto& color = registry.entry(g).color;
        for (int64_t c = 0; c < 3; ++c) {
            double& px = mixed.data[size_t(c * plane + i)];
            px = (1.0 - blend) * px + blend * (color[size_t(c)] / 255.0);
        }
    }
    return tensor_to_image(mixed);
}

std::string AblationResult::to_json(const std::string& config_echo) const {
    json j;
    j["seeds"] = seeds;
    j["rows"] = json::array();
    for (const AblationRow& r : rows) {
        j["rows"].push_back({{"variant", r.variant},
                             {"miou_per_seed", r.val_miou},
                             {"mean_miou", r.mean},
                             {"stddev", r.stddev},
                             {"probe_loss", r.probe_loss},
                             {"probe_tversky", r.probe_tversky},
                             {"probe_cross_entropy", r.probe_ce}});
    }
    j["config"] = json::parse(config_echo);
    return j.dump(2);
}

std::string AblationResult::to_csv() const {
    std::string out = "variant,mean_miou,stddev";
    for (uint64_t s : seeds) out += ",miou_seed_" + std::to_string(s);
    out += "\n";
    for (const AblationRow& r : rows) {
        out += r.variant + "," + std::to_string(r.mean) + "," + std::to_string(r.stddev);
        for (double v : r.val_miou) out += "," + std::to_string(v);
        out += "\n";
    }
    return out;
}

AblationResult ablate_losses(const TrainConfig& cfg, const LabelRegistry& registry,
                             const std::vector<Sample>& train, const std::vector<Sample>& val,
                             const std::vector<uint64_t>& seeds, std::ostream* log) {
    if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
    const struct {
        const char* name;
        double lambda;
    } variants[] = {{"tversky", 1.0}, {"cross_entropy", 0.0}, {"combined", cfg.loss.lambda_combined}};

    AblationResult result;
    result.seeds = seeds;
    for (const auto& variant : variants) {
        AblationRow row;
        row.variant = variant.name;
        for (uint64_t seed : seeds) {
            TrainConfig run_cfg = cfg;
            run_cfg.seed = seed;
            run_cfg.loss.lambda_combined = variant.lambda;
            SegModel model(model_config_from(run_cfg, registry));
            if (log) (*log) << "[ablate] variant " << variant.name << " seed " << seed << "\n";
            train_model(model, train, run_cfg, nullptr);
            const MetricsReport rep = evaluate_head(model, val, registry);
            row.val_miou.push_back(rep.miou);

            // Score the trained model's own objective and both components on
            // a fixed probe frame, so the report shows what each blend weight
            // actually optimized.
            const Sample& probe = val[0];
            const Tensor probs =
                softmax_channels(model.logits(probe.image.reshaped(
                                     {1, 3, probe.image.dim(1), probe.image.dim(2)})))
                    ->value;
            const std::vector<uint8_t> target = head_mask(probe, run_cfg.head).v;
            row.probe_loss.push_back(combined_loss(probs, target, run_cfg.loss));
            row.probe_tversky.push_back(tversky_loss(probs, target, run_cfg.loss));
            row.probe_ce.push_back(cross_entropy_loss(probs, target, run_cfg.loss));
            if (log) (*log) << "[ablate]   val mIoU " << rep.miou << "\n";
        }
        const double n = double(row.val_miou.size());
        row.mean = std::accumulate(row.val_miou.begin(), row.val_miou.end(), 0.0) / n;
        double var = 0.0;
        for (double v : row.val_miou) var += (v - row.mean) * (v - row.mean);
        row.stddev = std::sqrt(var / n);
        result.rows.push_back(std::move(row));
    }
    return result;
}

}  // namespace surgseg
