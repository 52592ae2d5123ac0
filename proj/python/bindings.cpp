// Python bindings for the main operations: dataset synthesis, training,
// evaluation, loss math and mask fusion. Heavy lifting stays in the C++ core;
// numpy arrays cross the boundary as copies.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>

#include "surgseg/checkpoint.hpp"
#include "surgseg/harness.hpp"
#include "surgseg/loss.hpp"
#include "surgseg/synth.hpp"

namespace py = pybind11;
using namespace surgseg;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[size_t(i)] = a.shape(i);
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

LabelMask mask_from_array(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("mask must be a 2-d uint8 array");
    LabelMask m(int(a.shape(0)), int(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.v.begin());
    return m;
}

py::array_t<uint8_t> mask_to_array(const LabelMask& m) {
    py::array_t<uint8_t> out({m.h, m.w});
    std::copy(m.v.begin(), m.v.end(), out.mutable_data());
    return out;
}

std::vector<uint8_t> flat_targets(
    const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
    return std::vector<uint8_t>(a.data(), a.data() + a.size());
}

LossConfig make_loss_config(double alpha, double beta, double lambda, double smooth) {
    LossConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.lambda_combined = lambda;
    cfg.smooth = smooth;
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "dual-model surgical scene segmentation core";

    m.def("default_registry_json", [](int n_anatomy, int n_tool) {
        return default_synth_registry(n_anatomy, n_tool).to_json();
    }, py::arg("n_anatomy") = 2, py::arg("n_tool") = 2,
       "classes.json text for a synthetic label space");

    m.def("synthesize",
          [](const std::string& out, uint64_t seed, int train, int val, int test, int size,
             int anatomy_classes, int tool_classes) {
              SynthSpec spec;
              spec.seed = seed;
              spec.n_train = train;
              spec.n_val = val;
              spec.n_test = test;
              spec.size = size;
              synth_generate(out, spec, default_synth_registry(anatomy_classes, tool_classes));
          },
          py::arg("out"), py::arg("seed") = 0, py::arg("train") = 200, py::arg("val") = 50,
          py::arg("test") = 0, py::arg("size") = 64, py::arg("anatomy_classes") = 2,
          py::arg("tool_classes") = 2, "write a synthetic dataset to disk");

    m.def("train",
          [](const std::string& config_json) {
              TrainConfig cfg = TrainConfig::from_json_text(config_json);
              if (cfg.data_root.empty()) throw std::invalid_argument("data.root is required");
              LabelRegistry registry = LabelRegistry::from_json([&] {
                  std::ifstream in(cfg.data_root + "/classes.json");
                  if (!in) throw std::runtime_error("missing classes.json under " + cfg.data_root);
                  return std::string(std::istreambuf_iterator<char>(in), {});
              }());
              const HeadSelect select =
                  cfg.head == Head::anatomy ? HeadSelect::anatomy : HeadSelect::tool;
              std::vector<Sample> data = load_dataset(cfg.data_root, cfg.train_split, registry, select);
              SegModel model(model_config_from(cfg, registry));
              TrainResult r = train_model(model, data, cfg, nullptr);
              if (!cfg.checkpoint_out.empty()) {
                  save_checkpoint(cfg.checkpoint_out, model, registry, r.steps);
              }
              py::dict out;
              out["steps"] = r.steps;
              out["final_loss"] = r.final_loss;
              out["epoch_mean_loss"] = r.epoch_mean_loss;
              out["param_hash"] = r.epoch_param_hash.back();
              return out;
          },
          py::arg("config_json"), "run one training job described by a JSON config string");

    m.def("evaluate",
          [](const std::string& checkpoint, const std::string& data_root, const std::string& split) {
              CheckpointMeta meta;
              auto model = load_checkpoint(checkpoint, &meta);
              const HeadSelect select =
                  meta.model.head == Head::anatomy ? HeadSelect::anatomy : HeadSelect::tool;
              std::vector<Sample> data = load_dataset(data_root, split, meta.registry, select);
              return evaluate_head(*model, data, meta.registry).to_json();
          },
          py::arg("checkpoint"), py::arg("data_root"), py::arg("split") = "val",
          "head-local metrics report (JSON text)");

    m.def("evaluate_fused",
          [](const std::string& ckpt_tool, const std::string& ckpt_anatomy,
             const std::string& data_root, const std::string& split, const std::string& rule,
             int morph) {
              CheckpointMeta mt, ma;
              auto inst = load_checkpoint(ckpt_tool, &mt);
              auto anat = load_checkpoint(ckpt_anatomy, &ma);
              std::vector<Sample> data = load_dataset(data_root, split, mt.registry, HeadSelect::both);
              FuseOptions opt;
              opt.rule = rule == "plain_or" ? FusionRule::plain_or : FusionRule::priority;
              opt.morph_radius = morph;
              return evaluate_fused(*inst, *anat, data, mt.registry, opt).to_json();
          },
          py::arg("checkpoint_tool"), py::arg("checkpoint_anatomy"), py::arg("data_root"),
          py::arg("split") = "val", py::arg("rule") = "priority", py::arg("morph") = 0,
          "fused global-label metrics report (JSON text)");

    m.def("tversky_index",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> probs,
             py::array_t<uint8_t, py::array::c_style | py::array::forcecast> target, int cls,
             double alpha, double beta, double smooth) {
              return tversky_index(tensor_from_array(probs), flat_targets(target), cls,
                                   make_loss_config(alpha, beta, 0.7, smooth));
          },
          py::arg("probs"), py::arg("target"), py::arg("cls"), py::arg("alpha") = 0.7,
          py::arg("beta") = 0.3, py::arg("smooth") = 1e-6,
          "soft Tversky index of one class; probs (B,K,H,W), target (B,H,W)");

    m.def("loss_values",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> probs,
             py::array_t<uint8_t, py::array::c_style | py::array::forcecast> target, double alpha,
             double beta, double lambda, double smooth) {
              const LossConfig cfg = make_loss_config(alpha, beta, lambda, smooth);
              const Tensor p = tensor_from_array(probs);
              const std::vector<uint8_t> t = flat_targets(target);
              const double tv = tversky_loss(p, t, cfg);
              const double ce = cross_entropy_loss(p, t, cfg);
              py::dict out;
              out["tversky"] = tv;
              out["cross_entropy"] = ce;
              out["combined"] = combined_from_components(tv, ce, cfg.lambda_combined);
              return out;
          },
          py::arg("probs"), py::arg("target"), py::arg("alpha") = 0.7, py::arg("beta") = 0.3,
          py::arg("lam") = 0.7, py::arg("smooth") = 1e-6,
          "loss components for probs (B,K,H,W) against labels (B,H,W)");

    m.def("fuse_masks",
          [](py::array_t<uint8_t, py::array::c_style | py::array::forcecast> tool_mask,
             py::array_t<uint8_t, py::array::c_style | py::array::forcecast> anatomy_mask,
             const std::string& classes_json, const std::string& rule, int morph) {
              LabelRegistry registry = LabelRegistry::from_json(classes_json);
              SegOutput inst = output_from_mask(mask_from_array(tool_mask), Head::tool,
                                                registry.num_local(Head::tool));
              SegOutput anat = output_from_mask(mask_from_array(anatomy_mask), Head::anatomy,
                                                registry.num_local(Head::anatomy));
              LabelMask fused = priority_fuse(
                  inst, anat, registry,
                  rule == "plain_or" ? FusionRule::plain_or : FusionRule::priority);
              if (morph > 0) fused = morph_refine(fused, morph);
              return mask_to_array(fused);
          },
          py::arg("tool_mask"), py::arg("anatomy_mask"), py::arg("classes_json"),
          py::arg("rule") = "priority", py::arg("morph") = 0,
          "fuse two head-local uint8 masks into global labels");

    m.def("miou",
          [](py::array_t<uint8_t, py::array::c_style | py::array::forcecast> pred,
             py::array_t<uint8_t, py::array::c_style | py::array::forcecast> gt, int num_classes,
             bool include_background) {
              ConfusionMatrix cm(num_classes);
              cm.accumulate(mask_from_array(pred), mask_from_array(gt));
              return cm.miou(include_background);
          },
          py::arg("pred"), py::arg("gt"), py::arg("num_classes"),
          py::arg("include_background") = true, "mean IoU of one prediction/target pair");
}
