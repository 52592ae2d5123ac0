// Command-line front end: dataset synthesis, training, evaluation, mask
// fusion, overlay rendering and the loss ablation study.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "surgseg/checkpoint.hpp"
#include "surgseg/harness.hpp"
#include "surgseg/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace surgseg;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << text;
}

LabelRegistry registry_for_root(const std::string& data_root) {
    return LabelRegistry::from_json(read_file((fs::path(data_root) / "classes.json").string()));
}

Palette global_palette(const LabelRegistry& registry) {
    Palette pal(size_t(registry.num_global()), {0, 0, 0});
    for (const auto& [gid, e] : registry.all()) pal[size_t(gid)] = e.color;
    return pal;
}

FusionRule parse_rule(const std::string& s) {
    if (s == "priority") return FusionRule::priority;
    if (s == "plain_or") return FusionRule::plain_or;
    throw std::runtime_error("unknown fusion rule '" + s + "' (expected priority or plain_or)");
}

json registry_json(const LabelRegistry& registry) { return json::parse(registry.to_json()); }

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
    std::string out;
    uint64_t seed = 0;
    int train = 200, val = 50, test = 0;
    int size = 64;
    int anatomy_classes = 2, tool_classes = 2;
    std::string classes_file;
};

void run_synth(const SynthArgs& a) {
    LabelRegistry registry = a.classes_file.empty()
                                 ? default_synth_registry(a.anatomy_classes, a.tool_classes)
                                 : LabelRegistry::from_json(read_file(a.classes_file));
    SynthSpec spec;
    spec.seed = a.seed;
    spec.n_train = a.train;
    spec.n_val = a.val;
    spec.n_test = a.test;
    spec.size = a.size;
    synth_generate(a.out, spec, registry);
    json j{{"out", a.out},    {"seed", a.seed}, {"train", a.train},
           {"val", a.val},    {"test", a.test}, {"size", a.size},
           {"classes", registry.all().size()}};
    std::cout << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
    std::string config;
    std::vector<std::string> sets;
    bool quiet = false;
};

void run_train(const TrainArgs& a) {
    TrainConfig cfg = TrainConfig::load(a.config, a.sets);
    if (cfg.data_root.empty()) throw std::runtime_error("data.root is required for training");
    LabelRegistry registry = registry_for_root(cfg.data_root);
    const HeadSelect select = cfg.head == Head::anatomy ? HeadSelect::anatomy : HeadSelect::tool;
    std::vector<Sample> train_data = load_dataset(cfg.data_root, cfg.train_split, registry, select);

    // Validation is optional: without a split the run just keeps final weights.
    std::vector<Sample> val_data;
    if (!cfg.val_split.empty() &&
        std::filesystem::is_directory(std::filesystem::path(cfg.data_root) / "images" / cfg.val_split)) {
        val_data = load_dataset(cfg.data_root, cfg.val_split, registry, select);
    }

    SegModel model(model_config_from(cfg, registry));
    std::ostream* log = a.quiet ? nullptr : &std::cout;
    TrainResult result = train_model(model, train_data, cfg, log,
                                     val_data.empty() ? nullptr : &val_data, &registry);
    if (!cfg.checkpoint_out.empty()) {
        save_checkpoint(cfg.checkpoint_out, model, registry, result.steps);
    }
    json j{{"steps", result.steps},
           {"epochs", cfg.epochs},
           {"final_loss", result.final_loss},
           {"mean_loss_last_epoch", result.epoch_mean_loss.back()},
           {"checkpoint", cfg.checkpoint_out},
           {"param_hash", result.epoch_param_hash.back()}};
    if (!result.epoch_val_miou.empty()) {
        j["best_epoch"] = result.best_epoch + 1;
        j["best_val_miou"] = result.epoch_val_miou[size_t(result.best_epoch)];
    }
    std::cout << j.dump(2) << "\n";
}

// ----------------------------------------------------------------- eval ----

struct EvalArgs {
    std::string checkpoint;       // single-head mode
    std::string checkpoint_tool;  // fused mode (with checkpoint_anatomy)
    std::string checkpoint_anatomy;
    std::string data_root;
    std::string split = "val";
    std::string report_out, csv_out;
    std::string rule = "priority";
    int morph = 0;
    bool no_background = false;
    bool inject_gt = false;
};

void run_eval(const EvalArgs& a) {
    const bool fused_mode = !a.checkpoint_tool.empty() || !a.checkpoint_anatomy.empty();
    if (fused_mode && (a.checkpoint_tool.empty() || a.checkpoint_anatomy.empty())) {
        throw std::runtime_error("fused evaluation needs both --checkpoint-tool and --checkpoint-anatomy");
    }
    if (fused_mode == !a.checkpoint.empty()) {
        throw std::runtime_error("pass either --checkpoint or the two fused checkpoints");
    }

    MetricsReport report;
    std::string echo;
    if (!fused_mode) {
        CheckpointMeta meta;
        auto model = load_checkpoint(a.checkpoint, &meta);
        const HeadSelect select =
            meta.model.head == Head::anatomy ? HeadSelect::anatomy : HeadSelect::tool;
        std::vector<Sample> data = load_dataset(a.data_root, a.split, meta.registry, select);
        report = evaluate_head(*model, data, meta.registry);
        echo = json{{"checkpoint", a.checkpoint}, {"split", a.split}, {"model", json::parse(meta.model.to_json())}}
                   .dump();
    } else {
        CheckpointMeta meta_t, meta_a;
        auto inst = load_checkpoint(a.checkpoint_tool, &meta_t);
        auto anat = load_checkpoint(a.checkpoint_anatomy, &meta_a);
        if (!(meta_t.registry == meta_a.registry)) {
            throw std::runtime_error("checkpoints disagree on the label registry");
        }
        std::vector<Sample> data = load_dataset(a.data_root, a.split, meta_t.registry, HeadSelect::both);
        FuseOptions opt;
        opt.rule = parse_rule(a.rule);
        opt.morph_radius = a.morph;
        opt.inject_gt = a.inject_gt;
        report = evaluate_fused(*inst, *anat, data, meta_t.registry, opt);
        echo = json{{"checkpoint_tool", a.checkpoint_tool},
                    {"checkpoint_anatomy", a.checkpoint_anatomy},
                    {"split", a.split},
                    {"rule", a.rule},
                    {"morph_radius", a.morph},
                    {"inject_gt", a.inject_gt}}
                   .dump();
    }
    report.include_background = !a.no_background;
    const std::string text = report.to_json(echo);
    std::cout << text << "\n";
    if (!a.report_out.empty()) write_file(a.report_out, text);
    if (!a.csv_out.empty()) write_file(a.csv_out, report.to_csv());
}

// ----------------------------------------------------------------- fuse ----

struct FuseArgs {
    std::string tool_mask, anatomy_mask;
    std::string tool_conf, anatomy_conf;
    std::string classes;
    std::string out;
    std::string rule = "priority";
    int morph = 0;
};

SegOutput output_from_files(const std::string& mask_path, const std::string& conf_path, Head head,
                            const LabelRegistry& registry) {
    const LabelMask mask = read_mask_png(mask_path);
    const int num_local = registry.num_local(head);
    for (uint8_t v : mask.v) {
        if (v != 255 && v >= num_local) {
            throw std::runtime_error(mask_path + ": label " + std::to_string(int(v)) +
                                     " outside the " + head_name(head) + " head's range");
        }
    }
    SegOutput out = output_from_mask(mask, head, num_local);
    if (!conf_path.empty()) {
        const ImageU8 conf = read_image_png(conf_path);
        if (conf.h != mask.h || conf.w != mask.w) {
            throw std::runtime_error(conf_path + ": confidence size differs from the mask");
        }
        for (int64_t i = 0; i < out.confidence.numel(); ++i) {
            out.confidence[i] = conf.rgb[size_t(i) * 3] / 255.0;  // grayscale: take red
        }
    }
    return out;
}

void run_fuse(const FuseArgs& a) {
    LabelRegistry registry = LabelRegistry::from_json(read_file(a.classes));
    // With no confidence files both heads are equally sure, so overlapping
    // foreground resolves to the anatomy label; pass --rule plain_or to give
    // the instrument unconditional priority instead.
    SegOutput inst = output_from_files(a.tool_mask, a.tool_conf, Head::tool, registry);
    SegOutput anat = output_from_files(a.anatomy_mask, a.anatomy_conf, Head::anatomy, registry);
    LabelMask fused = priority_fuse(inst, anat, registry, parse_rule(a.rule));
    if (a.morph > 0) fused = morph_refine(fused, a.morph);
    write_mask_png(a.out, fused, global_palette(registry));

    uint64_t foreground = 0;
    for (uint8_t v : fused.v) foreground += v != 0;
    json j{{"out", a.out},
           {"height", fused.h},
           {"width", fused.w},
           {"foreground_pixels", foreground},
           {"rule", a.rule},
           {"morph_radius", a.morph}};
    std::cout << j.dump(2) << "\n";
}

// -------------------------------------------------------------- overlay ----

struct OverlayArgs {
    std::string checkpoint_tool, checkpoint_anatomy;
    std::string image;
    std::string out;
    std::string labels_out;
    std::string rule = "priority";
    int morph = 0;
    double blend = 0.5;
};

void run_overlay(const OverlayArgs& a) {
    CheckpointMeta meta_t, meta_a;
    auto inst = load_checkpoint(a.checkpoint_tool, &meta_t);
    auto anat = load_checkpoint(a.checkpoint_anatomy, &meta_a);
    if (!(meta_t.registry == meta_a.registry)) {
        throw std::runtime_error("checkpoints disagree on the label registry");
    }
    const LabelRegistry& registry = meta_t.registry;
    const Tensor image = image_to_tensor(read_image_png(a.image));

    FuseOptions opt;
    opt.rule = parse_rule(a.rule);
    opt.morph_radius = a.morph;
    LabelMask fused = infer_fused(*inst, *anat, image, registry, opt);
    write_image_png(a.out, overlay_image(image, fused, registry, a.blend));
    if (!a.labels_out.empty()) write_mask_png(a.labels_out, fused, global_palette(registry));

    json meta{{"image", a.image},
              {"height", fused.h},
              {"width", fused.w},
              {"checkpoint_tool", a.checkpoint_tool},
              {"checkpoint_anatomy", a.checkpoint_anatomy},
              {"rule", a.rule},
              {"morph_radius", a.morph},
              {"blend", a.blend},
              {"labels", a.labels_out},
              {"classes", registry_json(registry)}};
    write_file(a.out + ".json", meta.dump(2) + "\n");
    std::cout << meta.dump(2) << "\n";
}

// --------------------------------------------------------------- ablate ----

struct AblateArgs {
    std::string config;
    std::vector<std::string> sets;
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
    std::string report_out, csv_out;
    bool quiet = false;
};

void run_ablate(const AblateArgs& a) {
    TrainConfig cfg = TrainConfig::load(a.config, a.sets);
    if (cfg.data_root.empty()) throw std::runtime_error("data.root is required for the ablation");
    LabelRegistry registry = registry_for_root(cfg.data_root);
    const HeadSelect select = cfg.head == Head::anatomy ? HeadSelect::anatomy : HeadSelect::tool;
    std::vector<Sample> train_data = load_dataset(cfg.data_root, cfg.train_split, registry, select);
    std::vector<Sample> val_data = load_dataset(cfg.data_root, cfg.val_split, registry, select);

    AblationResult result = ablate_losses(cfg, registry, train_data, val_data, a.seeds,
                                          a.quiet ? nullptr : &std::cout);
    const std::string text = result.to_json(cfg.to_json());
    std::cout << text << "\n";
    if (!a.report_out.empty()) write_file(a.report_out, text);
    if (!a.csv_out.empty()) write_file(a.csv_out, result.to_csv());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-model surgical scene segmentation"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", synth_args.out, "output dataset root")->required();
    synth->add_option("--seed", synth_args.seed, "generator seed");
    synth->add_option("--train", synth_args.train, "training samples");
    synth->add_option("--val", synth_args.val, "validation samples");
    synth->add_option("--test", synth_args.test, "test samples");
    synth->add_option("--size", synth_args.size, "square image side (multiple of 32)");
    synth->add_option("--anatomy-classes", synth_args.anatomy_classes, "anatomy class count");
    synth->add_option("--tool-classes", synth_args.tool_classes, "instrument class count");
    synth->add_option("--classes", synth_args.classes_file, "use an existing classes.json instead");
    synth->callback([&] { run_synth(synth_args); });

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train one segmentation instance");
    train->add_option("--config", train_args.config, "JSON config file");
    train->add_option("--set", train_args.sets, "override, e.g. optim.lr_base=1e-4")
        ->take_all();
    train->add_flag("--quiet", train_args.quiet, "suppress step logs");
    train->callback([&] { run_train(train_args); });

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
    eval->add_option("--checkpoint", eval_args.checkpoint, "single-head checkpoint");
    eval->add_option("--checkpoint-tool", eval_args.checkpoint_tool, "instrument checkpoint (fused)");
    eval->add_option("--checkpoint-anatomy", eval_args.checkpoint_anatomy, "anatomy checkpoint (fused)");
    eval->add_option("--data", eval_args.data_root, "dataset root")->required();
    eval->add_option("--split", eval_args.split, "dataset split");
    eval->add_option("--report", eval_args.report_out, "write the JSON report here");
    eval->add_option("--csv", eval_args.csv_out, "write the CSV report here");
    eval->add_option("--rule", eval_args.rule, "fusion rule: priority or plain_or");
    eval->add_option("--morph", eval_args.morph, "morphological cleanup radius (0 = off)");
    eval->add_flag("--no-background", eval_args.no_background, "headline means skip background");
    eval->add_flag("--inject-gt", eval_args.inject_gt,
                   "debug: fuse the ground-truth masks instead of predictions");
    eval->callback([&] { run_eval(eval_args); });

    FuseArgs fuse_args;
    auto* fuse = app.add_subcommand("fuse", "fuse two head-local mask files");
    fuse->add_option("--tool-mask", fuse_args.tool_mask, "instrument mask PNG")->required();
    fuse->add_option("--anatomy-mask", fuse_args.anatomy_mask, "anatomy mask PNG")->required();
    fuse->add_option("--tool-conf", fuse_args.tool_conf, "instrument confidence PNG (grayscale)");
    fuse->add_option("--anatomy-conf", fuse_args.anatomy_conf, "anatomy confidence PNG (grayscale)");
    fuse->add_option("--classes", fuse_args.classes, "classes.json")->required();
    fuse->add_option("--out", fuse_args.out, "fused palette PNG")->required();
    fuse->add_option("--rule", fuse_args.rule, "fusion rule: priority or plain_or");
    fuse->add_option("--morph", fuse_args.morph, "morphological cleanup radius (0 = off)");
    fuse->callback([&] { run_fuse(fuse_args); });

    OverlayArgs overlay_args;
    auto* overlay = app.add_subcommand("overlay", "render a fused prediction over an image");
    overlay->add_option("--checkpoint-tool", overlay_args.checkpoint_tool)->required();
    overlay->add_option("--checkpoint-anatomy", overlay_args.checkpoint_anatomy)->required();
    overlay->add_option("--image", overlay_args.image, "input RGB PNG")->required();
    overlay->add_option("--out", overlay_args.out, "overlay PNG (metadata goes to <out>.json)")
        ->required();
    overlay->add_option("--labels", overlay_args.labels_out, "also write the fused label PNG");
    overlay->add_option("--rule", overlay_args.rule, "fusion rule: priority or plain_or");
    overlay->add_option("--morph", overlay_args.morph, "morphological cleanup radius (0 = off)");
    overlay->add_option("--blend", overlay_args.blend, "color blend weight in [0,1]");
    overlay->callback([&] { run_overlay(overlay_args); });

    AblateArgs ablate_args;
    auto* ablate = app.add_subcommand("ablate", "compare loss variants over several seeds");
    ablate->add_option("--config", ablate_args.config, "JSON config file");
    ablate->add_option("--set", ablate_args.sets, "override, e.g. train.epochs=6")->take_all();
    ablate->add_option("--seeds", ablate_args.seeds, "comma-separated seed list")->delimiter(',');
    ablate->add_option("--report", ablate_args.report_out, "write the JSON report here");
    ablate->add_option("--csv", ablate_args.csv_out, "write the CSV report here");
    ablate->add_flag("--quiet", ablate_args.quiet, "suppress per-run logs");
    ablate->callback([&] { run_ablate(ablate_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
