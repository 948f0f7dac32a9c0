#include "ctdn/losses.hpp"

#include <algorithm>
#include <cmath>

namespace ctdn {

using ag::Tensor;

void ClassLabelVector::validate() const {
    bool any = false;
    for (int v : labels) {
        check_arg(v == 0 || v == 1, "ClassLabelVector: entries must be 0 or 1");
        any = any || v == 1;
    }
    check_arg(any, "ClassLabelVector: at least one class must be present");
}

Mat ClassLabelVector::as_row() const {
    Mat r(1, static_cast<Eigen::Index>(labels.size()));
    for (size_t i = 0; i < labels.size(); ++i) r(0, static_cast<Eigen::Index>(i)) = labels[i];
    return r;
}

void CognitionSet::validate() const {
    check_arg(!foreground.empty() && !background.empty(),
              "CognitionSet: both foreground and background must be non-empty");
    for (int f : foreground)
        check_arg(std::find(background.begin(), background.end(), f) == background.end(),
                  "CognitionSet: foreground and background sets must be disjoint");
}

std::vector<int> CognitionSet::all_ids() const {
    std::vector<int> ids = foreground;
    ids.insert(ids.end(), background.begin(), background.end());
    return ids;
}

void LossWeights::validate() const {
    check_arg(std::isfinite(lambda1) && lambda1 >= 0.0 && std::isfinite(lambda2) &&
                  lambda2 >= 0.0 && std::isfinite(lambda3) && lambda3 >= 0.0 &&
                  std::isfinite(delta) && delta >= 0.0,
              "LossWeights: weights must be finite and nonnegative");
}

Tensor similarity_logits(const Tensor& query, const TextFeatures& texts, const Tensor& mu) {
    check_arg(query->value.rows() == 1, "similarity_logits: query must be a single row");
    check_arg(query->value.cols() == texts.vectors.cols(),
              "similarity_logits: embedding dimension mismatch");
    check_arg(query->value.norm() > 0.0, "similarity_logits: query has zero norm");
    Mat tn = texts.vectors;
    for (Eigen::Index i = 0; i < tn.rows(); ++i) {
        double n = tn.row(i).norm();
        check_arg(n > 0.0, "similarity_logits: text row " + std::to_string(i) + " has zero norm");
        tn.row(i) /= n;
    }
    Tensor qn = ag::l2_normalize_rows(query);
    Tensor cos = ag::matmul(qn, ag::constant(tn.transpose()));
    return ag::matmul(mu, cos);  // (1x1)*(1xN) broadcast via matmul
}

Tensor relation_loss(const Tensor& logits, const ClassLabelVector& labels) {
    check_arg(logits->value.rows() == 1 &&
                  logits->value.cols() == static_cast<Eigen::Index>(labels.labels.size()),
              "relation_loss: logit/label length mismatch");
    return ag::bce_with_logits(logits, labels.as_row());
}

std::pair<Tensor, Tensor> cognition_distributions(const Tensor& student_logits,
                                                  const Tensor& teacher_logits) {
    check_arg(student_logits->value.cols() == teacher_logits->value.cols() &&
                  student_logits->value.rows() == 1 && teacher_logits->value.rows() == 1,
              "cognition_distributions: length mismatch");
    check_arg(student_logits->value.allFinite() && teacher_logits->value.allFinite(),
              "cognition_distributions: non-finite logits");
    return {ag::softmax_rows(student_logits), ag::softmax_rows(teacher_logits)};
}

Tensor cognition_transfer_loss(const Tensor& p_cog, const Tensor& p_cog_teacher) {
    return ag::kl_divergence(p_cog, p_cog_teacher);
}

Tensor vrd_loss(const VisualFeatures& student, const VisualFeatures& teacher,
                const ProjectionHead& psi, const ProjectionHead& psi_teacher) {
    const int n = student.n_tokens();
    check_arg(n == teacher.n_tokens() && n >= 2, "vrd_loss: token count mismatch");
    check_arg(psi.out_dim() == psi_teacher.out_dim(), "vrd_loss: head output dims differ");
    Tensor s_tokens =
        student.tokens_node ? student.tokens_node : ag::constant(student.tokens);
    Tensor s_mean = ag::mean_of_rows(ag::slice_rows(s_tokens, 1, n - 1));
    Mat t_mean = teacher.tokens.middleRows(1, n - 1).colwise().mean();
    Tensor s_proj = psi.apply(s_mean);
    Mat t_proj = psi_teacher.apply_values(t_mean);
    return ag::mse(s_proj, ag::constant(t_proj));
}

Prototypes compute_prototypes(const TextFeatures& cog_features, const CognitionSet& cog_set) {
    cog_set.validate();
    auto row_of = [&](int phrase_id) -> Eigen::Index {
        for (size_t i = 0; i < cog_features.phrase_ids.size(); ++i)
            if (cog_features.phrase_ids[i] == phrase_id) return static_cast<Eigen::Index>(i);
        throw std::invalid_argument("compute_prototypes: features missing phrase id " +
                                    std::to_string(phrase_id));
    };
    Prototypes p;
    p.fg = Mat::Zero(1, cog_features.vectors.cols());
    p.bg = Mat::Zero(1, cog_features.vectors.cols());
    for (int id : cog_set.foreground) p.fg += cog_features.vectors.row(row_of(id));
    for (int id : cog_set.background) p.bg += cog_features.vectors.row(row_of(id));
    p.fg /= static_cast<double>(cog_set.foreground.size());
    p.bg /= static_cast<double>(cog_set.background.size());
    return p;
}

TokenPartition categorize_tokens(const Mat& projected, const Prototypes& protos, double delta) {
    check_arg(delta >= 0.0, "categorize_tokens: delta must be nonnegative");
    const double fn = protos.fg.norm(), bn = protos.bg.norm();
    check_arg(fn > 0.0 && bn > 0.0, "categorize_tokens: prototypes must be nonzero");
    const Eigen::Index n = projected.rows();
    TokenPartition part;
    part.fg_scores.resize(n);
    part.bg_scores.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double tn = projected.row(i).norm();
        if (tn < 1e-12) {
            part.fg_scores(i) = 0.0;
            part.bg_scores(i) = 0.0;
            part.uncertain_indices.push_back(static_cast<int>(i));
            ++part.zero_norm_tokens;
            continue;
        }
        double sf = projected.row(i).dot(protos.fg.row(0)) / (tn * fn);
        double sb = projected.row(i).dot(protos.bg.row(0)) / (tn * bn);
        part.fg_scores(i) = sf;
        part.bg_scores(i) = sb;
        double d = sf - sb;
        if (d > delta) part.fg_indices.push_back(static_cast<int>(i));
        else if (d < -delta) part.bg_indices.push_back(static_cast<int>(i));
        else part.uncertain_indices.push_back(static_cast<int>(i));
    }
    return part;
}

Tensor fbd_loss(const Tensor& tokens, const TokenPartition& partition) {
    const Eigen::Index n = tokens->value.rows();
    for (const auto* set : {&partition.fg_indices, &partition.bg_indices})
        for (int i : *set)
            check_arg(i >= 0 && i < n, "fbd_loss: partition index out of range");

    const auto nf = static_cast<double>(partition.fg_indices.size());
    const auto nb = static_cast<double>(partition.bg_indices.size());
    const double nf_pairs = nf * (nf - 1.0) / 2.0;
    const double nb_pairs = nb * (nb - 1.0) / 2.0;
    const double neg_pairs = nf * nb;

    // loss = 0.25*[fg pairs exist] + 0.25*[bg pairs exist] + sum(W .* |cos|)
    // with W carrying -0.25/Nf+, -0.25/Nb+ on positive pairs and +0.5/N- on
    // negative pairs; groups without pairs are dropped, not divided by zero.
    Mat w = Mat::Zero(n, n);
    double base = 0.0;
    if (nf_pairs > 0.0) {
        base += 0.25;
        for (size_t a = 0; a < partition.fg_indices.size(); ++a)
            for (size_t b = a + 1; b < partition.fg_indices.size(); ++b)
                w(partition.fg_indices[a], partition.fg_indices[b]) -= 0.25 / nf_pairs;
    }
    if (nb_pairs > 0.0) {
        base += 0.25;
        for (size_t a = 0; a < partition.bg_indices.size(); ++a)
            for (size_t b = a + 1; b < partition.bg_indices.size(); ++b)
                w(partition.bg_indices[a], partition.bg_indices[b]) -= 0.25 / nb_pairs;
    }
    if (neg_pairs > 0.0) {
        for (int i : partition.fg_indices)
            for (int j : partition.bg_indices) w(i, j) += 0.5 / neg_pairs;
    }
    if (base == 0.0 && neg_pairs == 0.0) {
        Tensor zero = ag::sum_all(ag::scale(ag::sum_all(tokens), 0.0));
        return zero;  // keeps graph connectivity for uniform handling
    }
    Tensor norm = ag::l2_normalize_rows(tokens);
    Tensor cos = ag::matmul(norm, ag::transpose(norm));
    Tensor weighted = ag::sum_all(ag::cmul(ag::constant(w), ag::abs_of(cos)));
    return ag::add(ag::constant(Mat::Constant(1, 1, base)), weighted);
}

Tensor total_loss(const Tensor& l_rel, const Tensor& l_ct, const Tensor& l_vrd,
                  const Tensor& l_fbd, const LossWeights& w) {
    w.validate();
    for (const Tensor* t : {&l_rel, &l_ct, &l_vrd, &l_fbd})
        check_arg((*t)->value.size() == 1 && std::isfinite((*t)->value(0, 0)),
                  "total_loss: loss terms must be finite scalars");
    return ag::add(ag::add(l_rel, ag::scale(l_ct, w.lambda1)),
                   ag::add(ag::scale(l_vrd, w.lambda2), ag::scale(l_fbd, w.lambda3)));
}

double fbd_loss_bruteforce(const Mat& tokens, const TokenPartition& partition) {
    auto cos = [&](int i, int j) {
        double ni = std::max(tokens.row(i).norm(), 1e-12);
        double nj = std::max(tokens.row(j).norm(), 1e-12);
        return tokens.row(i).dot(tokens.row(j)) / (ni * nj);
    };
    double fg_sum = 0.0, bg_sum = 0.0, neg_sum = 0.0;
    long fg_cnt = 0, bg_cnt = 0, neg_cnt = 0;
    const auto& f = partition.fg_indices;
    const auto& b = partition.bg_indices;
    for (size_t a = 0; a < f.size(); ++a)
        for (size_t c = a + 1; c < f.size(); ++c) {
            fg_sum += 1.0 - std::abs(cos(f[a], f[c]));
            ++fg_cnt;
        }
    for (size_t a = 0; a < b.size(); ++a)
        for (size_t c = a + 1; c < b.size(); ++c) {
            bg_sum += 1.0 - std::abs(cos(b[a], b[c]));
            ++bg_cnt;
        }
    for (int i : f)
        for (int j : b) {
            neg_sum += std::abs(cos(i, j));
            ++neg_cnt;
        }
    double loss = 0.0;
    if (fg_cnt > 0) loss += 0.25 * fg_sum / static_cast<double>(fg_cnt);
    if (bg_cnt > 0) loss += 0.25 * bg_sum / static_cast<double>(bg_cnt);
    if (neg_cnt > 0) loss += 0.5 * neg_sum / static_cast<double>(neg_cnt);
    return loss;
}

}  // namespace ctdn
