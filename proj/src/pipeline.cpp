#include "ctdn/pipeline.hpp"

#include "ctdn/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

namespace fs = std::filesystem;

namespace ctdn {

namespace {

std::vector<std::pair<std::string, const nn::ParamStore*>> model_stores(const CtdnModel& m) {
    return {{"teacher", &m.teacher->params()},
            {"student", &m.student->params()},
            {"text", &m.text->params()},
            {"teacher_extra", &m.teacher_extra},
            {"student_extra", &m.student_extra}};
}

void zero_all_grads(const CtdnModel& m) {
    for (auto& [role, ps] : model_stores(m)) const_cast<nn::ParamStore*>(ps)->zero_grad();
}

void require_finite(const ag::Tensor& loss, const char* stage) {
    check(loss->value.allFinite(),
          std::string(stage) + ": loss diverged (non-finite value)");
}

std::vector<int> shuffled(std::vector<int> v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    return v;
}

std::vector<int> present_class_ids(const std::vector<int>& labels) {
    std::vector<int> out;
    for (size_t k = 0; k < labels.size(); ++k)
        if (labels[k]) out.push_back(static_cast<int>(k) + 1);
    return out;
}

}  // namespace

CtdnModel CtdnModel::create(const RunConfig& config, const DatasetManifest& manifest) {
    config.validate();
    CtdnModel m;
    m.cfg = config.model;
    m.n_classes = manifest.n_classes();
    m.n_fg_cog = static_cast<int>(manifest.fg_cognition.size());
    m.n_bg_cog = static_cast<int>(manifest.bg_cognition.size());
    check_arg(m.n_classes >= 1 && m.n_fg_cog >= 1 && m.n_bg_cog >= 1,
              "CtdnModel: empty vocabulary section");

    std::vector<std::string> phrases = manifest.class_phrases;
    phrases.insert(phrases.end(), manifest.fg_cognition.begin(), manifest.fg_cognition.end());
    phrases.insert(phrases.end(), manifest.bg_cognition.begin(), manifest.bg_cognition.end());
    m.vocab = Vocabulary(phrases);

    m.teacher = std::make_unique<VisionTransformer>(m.cfg, "teacher", config.seed);
    m.student = std::make_unique<VisionTransformer>(m.cfg, "student", Rng::mix(config.seed, 1));
    m.text = std::make_unique<TextEncoder>(m.cfg, m.vocab,
                                           std::vector<std::string>{kPromptEgocentric, kPromptClean},
                                           Rng::mix(config.seed, 2));
    Rng head_rng(Rng::mix(config.seed, 3));
    m.teacher_head = ProjectionHead(m.teacher_extra, "teacher.head", m.cfg.c_v, m.cfg.c_txt,
                                     head_rng);
    m.student_head = ProjectionHead(m.student_extra, "student.head", m.cfg.c_v, m.cfg.c_txt,
                                     head_rng);
    m.teacher_mu = std::make_unique<LogitScale>(m.teacher_extra);
    m.student_mu = std::make_unique<LogitScale>(m.student_extra);
    return m;
}

void CtdnModel::init_student_from_teacher() {
    student->params().copy_values_from(teacher->params());
    student_extra.copy_values_from(teacher_extra);
}

void CtdnModel::freeze_teacher_side() {
    teacher->freeze();
    text->freeze();
    teacher_extra.freeze();
}

CognitionSet CtdnModel::cognition_set() const {
    CognitionSet s;
    for (int i = 0; i < n_fg_cog; ++i) s.foreground.push_back(n_classes + i);
    for (int i = 0; i < n_bg_cog; ++i) s.background.push_back(n_classes + n_fg_cog + i);
    return s;
}

std::vector<int> CtdnModel::class_ids() const {
    std::vector<int> ids(static_cast<size_t>(n_classes));
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

std::vector<int> CtdnModel::bg_cognition_ids() const {
    std::vector<int> ids(static_cast<size_t>(n_bg_cog));
    std::iota(ids.begin(), ids.end(), n_classes + n_fg_cog);
    return ids;
}

TextBank build_text_bank(const CtdnModel& model) {
    PromptTemplate ego(kPromptEgocentric), clean(kPromptClean);
    TextBank bank;
    bank.cog_set = model.cognition_set();
    bank.cls_student = model.text->encode(model.class_ids(), ego);
    bank.cog_student = model.text->encode(bank.cog_set.all_ids(), ego);
    bank.cog_teacher = model.text->encode(bank.cog_set.all_ids(), clean);
    bank.bg_student = model.text->encode(model.bg_cognition_ids(), ego);
    return bank;
}

uint64_t params_checksum(const nn::ParamStore& ps) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    auto eat = [&h](const void* data, size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [name, p] : ps.all()) {
        eat(name.data(), name.size());
        eat(p->value.data(), sizeof(double) * static_cast<size_t>(p->value.size()));
    }
    return h;
}

void save_checkpoint(const std::string& path, const CtdnModel& model, const RunConfig& config,
                     const nn::AdamW* opt, int64_t step) {
    nn::Archive ar;
    ar.seed = config.seed;
    ar.ints["step"] = step;
    ar.ints["n_classes"] = model.n_classes;
    ar.ints["n_fg_cog"] = model.n_fg_cog;
    ar.ints["n_bg_cog"] = model.n_bg_cog;
    ar.texts["config"] = config.to_text();
    for (const auto& [role, ps] : model_stores(model))
        for (const auto& [name, p] : ps->all()) ar.arrays[role + "/" + name] = p->value;
    if (opt) {
        ar.ints["opt_step"] = opt->step_count();
        for (const auto& [name, m] : opt->state()) ar.arrays["opt/" + name] = m;
    }
    if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    nn::save_archive(path, ar);
}

void load_checkpoint(const std::string& path, CtdnModel& model, nn::AdamW* opt) {
    nn::Archive ar = nn::load_archive(path);
    for (const auto& [role, psc] : model_stores(model)) {
        auto* ps = const_cast<nn::ParamStore*>(psc);
        for (const auto& [name, p] : ps->all()) {
            auto it = ar.arrays.find(role + "/" + name);
            check(it != ar.arrays.end(),
                  "load_checkpoint: '" + path + "' lacks parameter '" + role + "/" + name + "'");
            check(it->second.rows() == p->value.rows() && it->second.cols() == p->value.cols(),
                  "load_checkpoint: shape mismatch for '" + name + "'");
            p->value = it->second;
        }
    }
    if (opt) {
        std::map<std::string, Mat> st;
        for (const auto& [name, m] : ar.arrays)
            if (name.rfind("opt/", 0) == 0) st[name.substr(4)] = m;
        auto it = ar.ints.find("opt_step");
        check(it != ar.ints.end(), "load_checkpoint: '" + path + "' has no optimizer state");
        opt->load_state(st, it->second);
    }
}

Stage1Terms stage1_loss(const CtdnModel& model, const BatchItem& item, const TextBank& bank,
                        const ProjectionHead& psi_frozen, const RunConfig& config) {
    using ag::Tensor;
    VisualFeatures sf = model.student->encode(item.image);
    VisualFeatures tf = model.teacher->encode(item.image);
    check(sf.tokens_node != nullptr, "stage1_loss: student encoder must be trainable");

    Tensor mu_s = model.student_mu->scale();
    Tensor cls_s = model.student_head.apply(ag::slice_rows(sf.tokens_node, 0, 1));
    Tensor rel_logits = similarity_logits(cls_s, bank.cls_student, mu_s);

    Stage1Terms out;
    out.l_rel = relation_loss(rel_logits, item.labels);

    Tensor cog_s = similarity_logits(cls_s, bank.cog_student, mu_s);
    Tensor cls_t = model.teacher_head.apply(ag::constant(tf.tokens.row(0)));
    Tensor cog_t = similarity_logits(cls_t, bank.cog_teacher, model.teacher_mu->scale());
    auto [p_s, p_t] = cognition_distributions(cog_s, cog_t);
    out.l_ct = config.kl_student_first ? cognition_transfer_loss(p_s, p_t)
                                       : cognition_transfer_loss(p_t, p_s);

    out.l_vrd = vrd_loss(sf, tf, model.student_head, model.teacher_head);

    const int n = sf.n_tokens();
    Mat projected = psi_frozen.apply_values(sf.tokens.middleRows(1, n - 1));
    Prototypes protos = compute_prototypes(bank.cog_student, bank.cog_set);
    out.partition = categorize_tokens(projected, protos, config.loss.delta);
    Tensor proj_graph = model.student_head.apply(ag::slice_rows(sf.tokens_node, 1, n - 1));
    out.l_fbd = fbd_loss(proj_graph, out.partition);

    out.total = total_loss(out.l_rel, out.l_ct, out.l_vrd, out.l_fbd, config.loss);
    return out;
}

namespace {

// Rebuilds the scene spec implied by a manifest so distractor presence can be
// re-derived from each entry's stored seed.
SceneSpec manifest_scene_spec(const DatasetManifest& manifest, const ImageTensor& sample) {
    SceneSpec spec;
    spec.canvas_h = sample.h;
    spec.canvas_w = sample.w;
    spec.classes = manifest.class_phrases;
    spec.distractors = manifest.bg_cognition;
    return spec;
}

}  // namespace

void pretrain_teacher(const RunConfig& config, const DatasetManifest& manifest, CtdnModel& model,
                      std::ostream* log) {
    config.validate();
    PromptTemplate clean(kPromptClean);
    auto train_idx = manifest.split_indices("train");
    check(!train_idx.empty(), "pretrain_teacher: no training entries");

    nn::AdamW opt({&model.teacher->params(), &model.text->params(), &model.teacher_extra},
                  config.pretrain_lr, config.weight_decay);
    Rng rng(Rng::mix(config.seed, 100));

    const int steps_per_epoch =
        (static_cast<int>(train_idx.size()) + config.batch_size - 1) / config.batch_size;
    const int64_t total_steps = static_cast<int64_t>(steps_per_epoch) * config.pretrain_epochs;

    // Lazily cached distractor presence per entry (pure function of the seed).
    std::map<int, std::vector<int>> distractor_cache;
    SceneSpec spec;
    bool spec_ready = false;

    int64_t step = 0;
    for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
        auto order = shuffled(train_idx, rng);
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<int> batch_idx(
                order.begin() + s * config.batch_size,
                order.begin() + std::min<size_t>(order.size(),
                                                 static_cast<size_t>((s + 1) * config.batch_size)));
            auto batch = load_batch(manifest, batch_idx, config.crop_h, config.crop_w, rng);

            std::vector<ag::Tensor> img_rows, txt_rows;
            for (size_t i = 0; i < batch.size(); ++i) {
                // Candidate phrases: present classes, plus (optionally) the
                // background distractors rendered into this scene.
                std::vector<std::string> candidates;
                for (size_t k = 0; k < batch[i].labels.labels.size(); ++k)
                    if (batch[i].labels.labels[k]) candidates.push_back(manifest.class_phrases[k]);
                if (config.pretrain_bg_phrases) {
                    int entry = batch_idx[i];
                    if (!spec_ready) {
                        spec = manifest_scene_spec(manifest, load_full(manifest, entry).image);
                        spec_ready = true;
                    }
                    auto it = distractor_cache.find(entry);
                    if (it == distractor_cache.end())
                        it = distractor_cache
                                 .emplace(entry, distractors_for_seed(
                                                     spec, manifest.entries[static_cast<size_t>(
                                                                                entry)].seed))
                                 .first;
                    for (int d : it->second)
                        candidates.push_back(manifest.bg_cognition[static_cast<size_t>(d)]);
                }
                check(!candidates.empty(), "pretrain_teacher: batch item without any phrase");
                const std::string& phrase = candidates[static_cast<size_t>(
                    rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];

                VisualFeatures vf = model.teacher->encode(batch[i].image);
                ag::Tensor cls = model.teacher_head.apply(ag::slice_rows(vf.tokens_node, 0, 1));
                img_rows.push_back(ag::l2_normalize_rows(cls));
                txt_rows.push_back(ag::l2_normalize_rows(model.text->encode_one(phrase, clean)));
            }
            const int b = static_cast<int>(img_rows.size());
            ag::Tensor sims =
                ag::matmul(ag::concat_rows(img_rows), ag::transpose(ag::concat_rows(txt_rows)));
            ag::Tensor mu_col = ag::left_apply(Mat::Ones(b, 1), model.teacher_mu->scale());
            ag::Tensor logits = ag::cmul(sims, ag::matmul(mu_col, ag::constant(Mat::Ones(1, b))));
            std::vector<int> diag(static_cast<size_t>(b));
            std::iota(diag.begin(), diag.end(), 0);
            ag::Tensor loss = ag::scale(ag::add(ag::cross_entropy_rows(logits, diag),
                                                ag::cross_entropy_rows(ag::transpose(logits), diag)),
                                        0.5);
            require_finite(loss, "pretrain_teacher");

            zero_all_grads(model);
            ag::backward(loss);
            opt.set_lr(nn::poly_lr(config.pretrain_lr, step, total_steps, config.poly_power));
            opt.step();
            model.teacher_mu->clamp();
            ++step;
            if (log)
                (*log) << "pretrain step " << step << " loss " << loss->value(0, 0) << " lr "
                       << opt.lr() << "\n";
        }
    }
    model.freeze_teacher_side();
    model.init_student_from_teacher();
}

void train_stage1(const RunConfig& config, const DatasetManifest& manifest, CtdnModel& model,
                  std::ostream* log) {
    config.validate();
    auto train_idx = manifest.split_indices("train");
    check(!train_idx.empty(), "train_stage1: no training entries");

    const uint64_t frozen_before = params_checksum(model.teacher->params()) ^
                                   params_checksum(model.text->params()) ^
                                   params_checksum(model.teacher_extra);

    TextBank bank = build_text_bank(model);
    ProjectionHead psi_frozen = ProjectionHead::frozen_copy(model.student_head);

    nn::AdamW opt({&model.student->params(), &model.student_extra}, config.lr,
                  config.weight_decay);
    Rng rng(Rng::mix(config.seed, 200));

    const int steps_per_epoch =
        (static_cast<int>(train_idx.size()) + config.batch_size - 1) / config.batch_size;
    const int64_t total_steps = static_cast<int64_t>(steps_per_epoch) * config.epochs;

    fs::create_directories(config.checkpoint_dir);
    int64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        psi_frozen.refresh_from(model.student_head);  // Eq. (7) snapshot, per epoch
        auto order = shuffled(train_idx, rng);
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<int> batch_idx(
                order.begin() + s * config.batch_size,
                order.begin() + std::min<size_t>(order.size(),
                                                 static_cast<size_t>((s + 1) * config.batch_size)));
            auto batch = load_batch(manifest, batch_idx, config.crop_h, config.crop_w, rng);

            ag::Tensor rel, ct, vrd, fbd;
            for (const auto& item : batch) {
                Stage1Terms t = stage1_loss(model, item, bank, psi_frozen, config);
                rel = rel ? ag::add(rel, t.l_rel) : t.l_rel;
                ct = ct ? ag::add(ct, t.l_ct) : t.l_ct;
                vrd = vrd ? ag::add(vrd, t.l_vrd) : t.l_vrd;
                fbd = fbd ? ag::add(fbd, t.l_fbd) : t.l_fbd;
            }
            const double inv = 1.0 / static_cast<double>(batch.size());
            rel = ag::scale(rel, inv);
            ct = ag::scale(ct, inv);
            vrd = ag::scale(vrd, inv);
            fbd = ag::scale(fbd, inv);
            ag::Tensor loss = total_loss(rel, ct, vrd, fbd, config.loss);
            require_finite(loss, "train_stage1");

            zero_all_grads(model);
            ag::backward(loss);
            opt.set_lr(nn::poly_lr(config.lr, step, total_steps, config.poly_power));
            opt.step();
            model.student_mu->clamp();
            ++step;
            if (log)
                (*log) << "step " << step << " lr " << opt.lr() << " l_rel " << rel->value(0, 0)
                       << " l_ct " << ct->value(0, 0) << " l_vrd " << vrd->value(0, 0) << " l_fbd "
                       << fbd->value(0, 0) << " total " << loss->value(0, 0) << "\n";
        }
        save_checkpoint(config.checkpoint_dir + "/stage1_epoch" + std::to_string(epoch + 1) +
                            ".ckpt",
                        model, config, &opt, step);
    }
    save_checkpoint(config.checkpoint_dir + "/stage1.ckpt", model, config, &opt, step);

    const uint64_t frozen_after = params_checksum(model.teacher->params()) ^
                                  params_checksum(model.text->params()) ^
                                  params_checksum(model.teacher_extra);
    check(frozen_before == frozen_after, "train_stage1: frozen parameters were mutated");
}

MaskGenReport generate_pseudo_masks(const RunConfig& config, const DatasetManifest& manifest,
                                    const CtdnModel& model, const std::string& out_dir,
                                    const std::string& split, std::ostream* log) {
    config.validate();
    fs::create_directories(out_dir);
    auto indices = manifest.split_indices(split);
    check(!indices.empty(), "generate_pseudo_masks: empty split '" + split + "'");

    MaskGenReport report;
    TextBank bank = build_text_bank(model);
    std::vector<Eigen::MatrixXi> preds, gts;
    for (int idx : indices) {
        const ManifestEntry& entry = manifest.entries[static_cast<size_t>(idx)];
        std::vector<int> present = present_class_ids(entry.labels);
        if (present.empty()) {
            if (log) (*log) << "warning: '" << entry.id << "' has no present class, skipped\n";
            ++report.skipped;
            continue;
        }

        BatchItem item = load_full(manifest, idx);
        VisualFeatures sf = model.student->encode(item.image);
        check(sf.activation_node && sf.activation_node->requires_grad,
              "generate_pseudo_masks: student encoder must be trainable for Grad-CAM");

        // Class scores: softmax over appeared classes plus the background
        // cognition texts, so background-like images can suppress every class.
        Mat texts(static_cast<Eigen::Index>(present.size()) + model.n_bg_cog, model.cfg.c_txt);
        for (size_t j = 0; j < present.size(); ++j)
            texts.row(static_cast<Eigen::Index>(j)) =
                bank.cls_student.vectors.row(present[j] - 1);
        texts.bottomRows(model.n_bg_cog) = bank.bg_student.vectors;
        TextFeatures combined;
        combined.vectors = texts;

        AffinityMatrix aff;
        if (config.identity_affinity) {
            aff.values = Mat::Identity(sf.grid_h * sf.grid_w, sf.grid_h * sf.grid_w);
        } else {
            aff = affinity_matrix(aggregate_affinity(sf, config.last_k),
                                  config.sinkhorn_max_iters, config.sinkhorn_tol);
        }

        std::vector<CamMap> refined;
        for (size_t j = 0; j < present.size(); ++j) {
            ClassLogitFn fn = [&, j](const VisualFeatures& f) {
                ag::Tensor cls = model.student_head.apply(ag::slice_rows(f.tokens_node, 0, 1));
                ag::Tensor logits = similarity_logits(cls, combined, model.student_mu->scale());
                ag::Tensor probs = ag::softmax_rows(logits);
                return ag::slice_cols(probs, static_cast<int>(j), 1);
            };
            CamMap cam = gradcam(sf, fn, present[j]);
            BoxMask box = box_mask(cam, config.tau_box);
            refined.push_back(refine_cam(cam, aff, box));
        }

        PseudoMask pm = assemble_pseudo_mask(refined, present, config.tau_fg, item.image.h,
                                             item.image.w, config.gamma);
        std::vector<Mat> q = dense_crf(pm.unary, item.image, config.crf);
        Eigen::MatrixXi channels = crf_argmax(q);
        Eigen::MatrixXi labels(item.image.h, item.image.w);
        for (int y = 0; y < item.image.h; ++y)
            for (int x = 0; x < item.image.w; ++x) {
                int c = channels(y, x);
                labels(y, x) = (c > 0 && pm.fg_max(y, x) >= config.tau_fg)
                                   ? present[static_cast<size_t>(c - 1)]
                                   : 0;
            }

        png::write_indexed(out_dir + "/" + entry.id + ".png", labels);
        preds.push_back(std::move(labels));
        gts.push_back(load_gt_mask(manifest, idx));
        ++report.generated;
    }
    check(!preds.empty(), "generate_pseudo_masks: every image was skipped");
    report.metrics = evaluate_miou(preds, gts, manifest.n_classes());
    if (log) (*log) << "pseudo-mask miou " << report.metrics.miou << "\n";
    return report;
}

namespace {

std::vector<int> flatten_targets(const Eigen::MatrixXi& mask) {
    std::vector<int> t(static_cast<size_t>(mask.size()));
    for (int y = 0; y < mask.rows(); ++y)
        for (int x = 0; x < mask.cols(); ++x)
            t[static_cast<size_t>(y) * static_cast<size_t>(mask.cols()) +
              static_cast<size_t>(x)] = mask(y, x);
    return t;
}

}  // namespace

MetricsReport train_segmenter_stage3(const RunConfig& config, const DatasetManifest& manifest,
                                     const std::string& masks_dir, Segmenter& seg,
                                     std::ostream* log) {
    config.validate();
    auto train_idx = manifest.split_indices("train");
    check(!train_idx.empty(), "train_segmenter: no training entries");

    // Pre-flight: all training masks must exist (unless training on GT).
    if (!config.seg_use_gt) {
        std::string missing;
        for (int idx : train_idx) {
            std::string p = masks_dir + "/" + manifest.entries[static_cast<size_t>(idx)].id +
                            ".png";
            if (!fs::exists(p)) missing += manifest.entries[static_cast<size_t>(idx)].id + " ";
        }
        check(missing.empty(), "train_segmenter: missing pseudo masks for: " + missing);
    }

    nn::AdamW opt(seg.params(), config.seg_lr, config.weight_decay);
    Rng rng(Rng::mix(config.seed, 300));
    const int64_t total_steps =
        static_cast<int64_t>(train_idx.size()) * config.seg_epochs;

    int64_t step = 0;
    double last_loss = 0.0;
    for (int epoch = 0; epoch < config.seg_epochs; ++epoch) {
        for (int idx : shuffled(train_idx, rng)) {
            BatchItem item = load_full(manifest, idx);
            Eigen::MatrixXi target =
                config.seg_use_gt
                    ? load_gt_mask(manifest, idx)
                    : png::read_indexed(masks_dir + "/" +
                                        manifest.entries[static_cast<size_t>(idx)].id + ".png");
            check(target.rows() == item.image.h && target.cols() == item.image.w,
                  "train_segmenter: mask/image size mismatch");
            ag::Tensor logits = seg.forward(item.image);
            ag::Tensor loss = ag::cross_entropy_rows(logits, flatten_targets(target));
            require_finite(loss, "train_segmenter");
            last_loss = loss->value(0, 0);

            seg.params().zero_grad();
            ag::backward(loss);
            opt.set_lr(nn::poly_lr(config.seg_lr, step, total_steps, config.poly_power));
            opt.step();
            ++step;
            if (log) (*log) << "seg step " << step << " loss " << last_loss << "\n";
        }
        if (log) {
            MetricsReport val = evaluate_segmenter(manifest, seg, "val");
            (*log) << "seg epoch " << epoch + 1 << " val_miou " << val.miou << "\n";
        }
    }
    MetricsReport final_val = evaluate_segmenter(manifest, seg, "val");
    final_val.scalars.emplace_back("final_train_loss", last_loss);
    return final_val;
}

MetricsReport evaluate_segmenter(const DatasetManifest& manifest, const Segmenter& seg,
                                 const std::string& split) {
    auto indices = manifest.split_indices(split);
    check(!indices.empty(), "evaluate_segmenter: empty split '" + split + "'");
    std::vector<Eigen::MatrixXi> preds, gts;
    for (int idx : indices) {
        preds.push_back(seg.predict(load_full(manifest, idx).image));
        gts.push_back(load_gt_mask(manifest, idx));
    }
    return evaluate_miou(preds, gts, manifest.n_classes());
}

void save_segmenter(const std::string& path, const Segmenter& seg, const RunConfig& config) {
    nn::Archive ar;
    ar.seed = config.seed;
    ar.ints["n_classes"] = seg.n_classes();
    ar.ints["base_channels"] = seg.base_channels();
    ar.texts["config"] = config.to_text();
    for (const auto& [name, p] : seg.params().all()) ar.arrays[name] = p->value;
    if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    nn::save_archive(path, ar);
}

std::unique_ptr<Segmenter> load_segmenter(const std::string& path,
                                          const DatasetManifest& manifest) {
    nn::Archive ar = nn::load_archive(path);
    check(ar.ints.count("n_classes") && ar.ints.count("base_channels"),
          "load_segmenter: '" + path + "' is not a segmenter checkpoint");
    check(ar.ints["n_classes"] == manifest.n_classes(),
          "load_segmenter: class count mismatch with manifest");
    auto seg = std::make_unique<Segmenter>(static_cast<int>(ar.ints["n_classes"]),
                                           static_cast<int>(ar.ints["base_channels"]), ar.seed);
    for (const auto& [name, p] : seg->params().all()) {
        auto it = ar.arrays.find(name);
        check(it != ar.arrays.end(), "load_segmenter: missing parameter '" + name + "'");
        p->value = it->second;
    }
    return seg;
}

}  // namespace ctdn
