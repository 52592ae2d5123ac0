#pragma once

#include <string>
#include <vector>

#include "surgseg/data.hpp"
#include "surgseg/loss.hpp"
#include "surgseg/model.hpp"
#include "surgseg/optim.hpp"

namespace surgseg {

// Everything a training run needs, loadable from a JSON file. Unknown keys
// anywhere in the document are an error; values can be overridden from the
// command line with dotted paths ("optim.lr_base=1e-4").
struct TrainConfig {
    // data
    std::string data_root;
    std::string train_split = "train";
    std::string val_split = "val";
    // model
    Head head = Head::tool;
    std::string encoder_preset = "tiny";
    std::string decoder = "auto";  // auto | mlp | skip; auto pairs anatomy->mlp, tool->skip
    int embed_dim = 32;
    bool ablate_skip = false;
    // optimizer / loss
    OptimConfig optim;
    LossConfig loss;
    // schedule
    int epochs = 100;
    int batch_size = 4;
    uint64_t seed = 0;
    int log_every = 10;  // steps between loss log lines
    std::string checkpoint_out;
    // augmentation (train split only)
    AugmentationSpec augment;

    static TrainConfig from_json_text(const std::string& text);
    // Reads the file (or starts from defaults when path is empty) and applies
    // "a.b.c=value" overrides in order.
    static TrainConfig load(const std::string& path, const std::vector<std::string>& overrides = {});

    std::string to_json() const;
    DecoderKind resolved_decoder() const;
    void validate() const;
};

// Applies one dotted-path assignment to a JSON document. The value text is
// parsed as JSON when possible (numbers, booleans, arrays), else kept verbatim
// as a string.
std::string apply_config_override(const std::string& json_text, const std::string& assignment);

}  // namespace surgseg
