#pragma once

#include "ctdn/cam.hpp"
#include "ctdn/config.hpp"
#include "ctdn/crf.hpp"
#include "ctdn/data.hpp"
#include "ctdn/losses.hpp"
#include "ctdn/metrics.hpp"
#include "ctdn/segmenter.hpp"

#include <memory>
#include <ostream>
#include <string>

namespace ctdn {

inline constexpr const char* kPromptEgocentric = "an egocentric origami {}.";
inline constexpr const char* kPromptClean = "a clean origami {}.";

// Teacher/student vision encoders, the shared text encoder, their joint-space
// projection heads and logit scales. Vocabulary order: class phrases, then
// foreground cognition, then background cognition phrases.
struct CtdnModel {
    EncoderConfig cfg;
    Vocabulary vocab;
    int n_classes = 0;
    int n_fg_cog = 0;
    int n_bg_cog = 0;

    std::unique_ptr<VisionTransformer> teacher;
    std::unique_ptr<VisionTransformer> student;
    std::unique_ptr<TextEncoder> text;
    nn::ParamStore teacher_extra, student_extra;
    ProjectionHead teacher_head, student_head;
    std::unique_ptr<LogitScale> teacher_mu, student_mu;

    static CtdnModel create(const RunConfig& config, const DatasetManifest& manifest);

    // Copies teacher weights (encoder, head, scale) into the student.
    void init_student_from_teacher();
    void freeze_teacher_side();  // teacher encoder + text encoder + teacher extras

    CognitionSet cognition_set() const;
    std::vector<int> class_ids() const;  // phrase ids of the class vocabulary
    std::vector<int> bg_cognition_ids() const;
};

// Frozen per-run text features (the text encoder never trains in stage 1+).
struct TextBank {
    TextFeatures cls_student;     // class phrases, egocentric prompt
    TextFeatures cog_student;     // cognition phrases, egocentric prompt
    TextFeatures cog_teacher;     // cognition phrases, clean prompt
    TextFeatures bg_student;      // background cognition phrases, egocentric prompt
    CognitionSet cog_set;
};
TextBank build_text_bank(const CtdnModel& model);

// Checkpoint plumbing: every parameter store under a role prefix plus
// optimizer state, step counter and a config snapshot.
void save_checkpoint(const std::string& path, const CtdnModel& model, const RunConfig& config,
                     const nn::AdamW* opt, int64_t step);
void load_checkpoint(const std::string& path, CtdnModel& model, nn::AdamW* opt);

// Deterministic digest of all values in a store (frozen-contract checks).
uint64_t params_checksum(const nn::ParamStore& ps);

// Stage-1 loss terms for one crop. `psi_frozen` is the frozen projector
// snapshot used for prototype partitioning.
struct Stage1Terms {
    ag::Tensor l_rel, l_ct, l_vrd, l_fbd, total;
    TokenPartition partition;
};
Stage1Terms stage1_loss(const CtdnModel& model, const BatchItem& item, const TextBank& bank,
                        const ProjectionHead& psi_frozen, const RunConfig& config);

// Trains teacher + text encoder with a symmetric in-batch contrastive
// objective, then freezes them and initializes the student.
void pretrain_teacher(const RunConfig& config, const DatasetManifest& manifest, CtdnModel& model,
                      std::ostream* log = nullptr);

void train_stage1(const RunConfig& config, const DatasetManifest& manifest, CtdnModel& model,
                  std::ostream* log = nullptr);

struct MaskGenReport {
    MetricsReport metrics;
    int generated = 0;
    int skipped = 0;  // images with no present class (warned, not failed)
};
MaskGenReport generate_pseudo_masks(const RunConfig& config, const DatasetManifest& manifest,
                                    const CtdnModel& model, const std::string& out_dir,
                                    const std::string& split, std::ostream* log = nullptr);

// Trains the stage-3 segmenter on pseudo (or ground-truth) masks; returns the
// final validation report.
MetricsReport train_segmenter_stage3(const RunConfig& config, const DatasetManifest& manifest,
                                     const std::string& masks_dir, Segmenter& seg,
                                     std::ostream* log = nullptr);

MetricsReport evaluate_segmenter(const DatasetManifest& manifest, const Segmenter& seg,
                                 const std::string& split);

void save_segmenter(const std::string& path, const Segmenter& seg, const RunConfig& config);
std::unique_ptr<Segmenter> load_segmenter(const std::string& path, const DatasetManifest& manifest);

}  // namespace ctdn
