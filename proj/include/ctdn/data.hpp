#pragma once

#include "ctdn/encoders.hpp"
#include "ctdn/losses.hpp"
#include "ctdn/rng.hpp"

#include <string>
#include <vector>

namespace ctdn {

// Spec for the procedural egocentric scene generator. Class phrases encode
// their placement rules: "my"/"your" selects the bottom/top half, "left"/
// "right" the horizontal half, and "object in ... hand" shapes must touch a
// matching hand.
struct SceneSpec {
    int canvas_h = 96;
    int canvas_w = 96;
    std::vector<std::string> classes;
    std::vector<std::string> distractors;
    uint64_t rng_seed = 0;

    void validate() const;
};

std::vector<std::string> default_class_phrases();
std::vector<std::string> default_fg_cognition();
std::vector<std::string> default_bg_cognition();

struct SceneSample {
    ImageTensor image;
    Eigen::MatrixXi mask;         // (H, W), 0 = background, k >= 1 = class index
    ClassLabelVector labels;      // length = spec.classes.size()
    std::vector<int> distractor_ids;  // indices into spec.distractors
    uint64_t scene_seed = 0;
};

// Deterministic in (spec.rng_seed, index).
SceneSample generate_scene(const SceneSpec& spec, int index);

// Re-derives the distractor list of a scene from its stored seed (used when
// a manifest was loaded from disk and the renderer output is not needed).
std::vector<int> distractors_for_seed(const SceneSpec& spec, uint64_t scene_seed);

struct ManifestEntry {
    std::string id;
    std::string split;            // "train" or "val"
    std::vector<int> labels;
    uint64_t seed = 0;

    std::string image_path(const std::string& root) const;
    std::string mask_path(const std::string& root) const;
};

struct DatasetManifest {
    std::string root;
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_phrases;
    std::vector<std::string> fg_cognition;
    std::vector<std::string> bg_cognition;

    std::vector<int> split_indices(const std::string& split) const;
    int n_classes() const { return static_cast<int>(class_phrases.size()); }
};

DatasetManifest build_dataset(const SceneSpec& spec, int n_train, int n_val,
                              const std::string& out_dir,
                              const std::vector<std::string>& fg_cognition,
                              const std::vector<std::string>& bg_cognition);

DatasetManifest load_manifest(const std::string& dir);

// Class k is present iff it occupies at least 16 pixels.
ClassLabelVector derive_multilabel(const Eigen::MatrixXi& mask, int n_classes);

struct BatchItem {
    ImageTensor image;
    ClassLabelVector labels;
};

// Random crops with labels recomputed from the cropped ground-truth mask;
// all-background crops are rejected and re-sampled.
std::vector<BatchItem> load_batch(const DatasetManifest& manifest, const std::vector<int>& indices,
                                  int crop_h, int crop_w, Rng& rng);

// Full-resolution variant used by the CAM / CRF stages.
BatchItem load_full(const DatasetManifest& manifest, int index);
Eigen::MatrixXi load_gt_mask(const DatasetManifest& manifest, int index);

}  // namespace ctdn
