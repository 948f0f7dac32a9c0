#pragma once

#include "ctdn/autograd.hpp"
#include "ctdn/encoders.hpp"

#include <utility>
#include <vector>

namespace ctdn {

struct ClassLabelVector {
    std::vector<int> labels;  // 0/1 per class

    void validate() const;
    Mat as_row() const;
};

struct CognitionSet {
    std::vector<int> foreground;  // phrase ids
    std::vector<int> background;

    void validate() const;
    int size() const { return static_cast<int>(foreground.size() + background.size()); }
    std::vector<int> all_ids() const;
};

struct Prototypes {
    Mat fg;  // 1xC
    Mat bg;  // 1xC
};

struct TokenPartition {
    std::vector<int> fg_indices, bg_indices, uncertain_indices;  // 0-based token indices
    Vec fg_scores, bg_scores;
    int zero_norm_tokens = 0;  // flagged rather than fatal

    int total() const {
        return static_cast<int>(fg_indices.size() + bg_indices.size() + uncertain_indices.size());
    }
};

struct LossWeights {
    double lambda1 = 5.0;   // L_CT
    double lambda2 = 2.5;   // L_VRD
    double lambda3 = 0.2;   // L_FBD
    double delta = 0.025;   // categorization margin

    void validate() const;
};

// Scaled cosine similarities between one query (1xC graph tensor) and a set
// of fixed text vectors; entry i = cos(query, texts[i]) * mu.
ag::Tensor similarity_logits(const ag::Tensor& query, const TextFeatures& texts,
                             const ag::Tensor& mu);

// Mean binary cross-entropy over classes of sigmoid(logits) vs labels.
ag::Tensor relation_loss(const ag::Tensor& logits, const ClassLabelVector& labels);

// Max-subtracted softmax pair (student, teacher).
std::pair<ag::Tensor, ag::Tensor> cognition_distributions(const ag::Tensor& student_logits,
                                                          const ag::Tensor& teacher_logits);

// KL(P_cog || P'_cog), student distribution first.
ag::Tensor cognition_transfer_loss(const ag::Tensor& p_cog, const ag::Tensor& p_cog_teacher);

// MSE between projected mean patch tokens of the student and teacher.
ag::Tensor vrd_loss(const VisualFeatures& student, const VisualFeatures& teacher,
                    const ProjectionHead& psi, const ProjectionHead& psi_teacher);

Prototypes compute_prototypes(const TextFeatures& cog_features, const CognitionSet& cog_set);

// Hard margin-delta assignment of projected patch tokens to fg/bg/uncertain.
TokenPartition categorize_tokens(const Mat& projected, const Prototypes& protos, double delta);

// Eq-style contrastive decoupling over unordered distinct pairs, absolute
// cosine; empty pair groups contribute zero.
ag::Tensor fbd_loss(const ag::Tensor& tokens, const TokenPartition& partition);

ag::Tensor total_loss(const ag::Tensor& l_rel, const ag::Tensor& l_ct, const ag::Tensor& l_vrd,
                      const ag::Tensor& l_fbd, const LossWeights& w);

// Test oracle: O(n^2) scalar-loop evaluation of the decoupling loss.
double fbd_loss_bruteforce(const Mat& tokens, const TokenPartition& partition);

}  // namespace ctdn
