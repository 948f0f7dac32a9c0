#pragma once

#include "ctdn/common.hpp"
#include "ctdn/crf.hpp"
#include "ctdn/encoders.hpp"
#include "ctdn/losses.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace ctdn {

// Flat `key = value` run configuration with dotted-prefix sections.
// Precedence: built-in default < config file < `--set key=value` override.
struct RunConfig {
    // loss.*
    LossWeights loss;
    bool kl_student_first = true;  // loss.kl_student_first: argument order of Eq. (6)

    // model.*
    EncoderConfig model;

    // optim.*
    double lr = 3e-4;
    double weight_decay = 1e-4;
    double poly_power = 0.9;
    int batch_size = 16;
    int epochs = 30;
    int pretrain_epochs = 10;
    double pretrain_lr = 1e-3;
    bool pretrain_bg_phrases = true;  // add present bg-distractor phrases as contrastive rows
    uint64_t seed = 1;

    // cam.*
    double tau_box = 0.4;
    double tau_fg = 0.3;
    double gamma = 1.0;
    int last_k = 3;
    double sinkhorn_tol = 1e-3;
    int sinkhorn_max_iters = 10;
    bool identity_affinity = false;  // debug bypass of the affinity refinement

    // crf.*
    CrfParams crf;

    // seg.*
    int seg_epochs = 12;
    double seg_lr = 3e-3;
    int seg_base_channels = 16;
    bool seg_use_gt = false;  // upper-bound flag: train on ground-truth masks

    // data.* / paths
    std::string data_dir = "data";
    std::string checkpoint_dir = "checkpoints";
    std::string masks_dir = "pseudo_masks";
    int crop_h = 64;
    int crop_w = 64;

    void validate() const;

    static RunConfig defaults();
    static RunConfig from_file(const std::string& path);
    void apply(const std::string& key, const std::string& value);  // one `--set`
    std::string to_text() const;
    void save(const std::string& path) const;
};

}  // namespace ctdn
