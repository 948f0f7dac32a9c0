#include "ctdn/gradcheck.hpp"
#include "ctdn/pipeline.hpp"
#include "ctdn/png_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace ctdn;

namespace {

struct ConfigFlags {
    std::string config_path;
    std::vector<std::string> sets;
    int64_t seed = -1;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Run configuration file (key = value lines)");
    cmd->add_option("--set", flags.sets, "Override one config key, e.g. --set loss.lambda3=0");
    cmd->add_option("--seed", flags.seed, "Override the config rng seed");
}

RunConfig resolve_config(const ConfigFlags& flags) {
    RunConfig c = flags.config_path.empty() ? RunConfig::defaults()
                                            : RunConfig::from_file(flags.config_path);
    for (const auto& kv : flags.sets) {
        size_t eq = kv.find('=');
        check_arg(eq != std::string::npos, "--set expects key=value, got '" + kv + "'");
        c.apply(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (flags.seed >= 0) c.seed = static_cast<uint64_t>(flags.seed);
    c.validate();
    return c;
}

std::vector<std::string> load_phrases_or(const std::string& path,
                                         std::vector<std::string> fallback) {
    return path.empty() ? fallback : Vocabulary::load(path).phrases();
}

int cmd_make_data(const std::string& out, int n_train, int n_val, uint64_t seed, int size,
                  const std::string& classes_file, const std::string& fg_file,
                  const std::string& bg_file) {
    SceneSpec spec;
    spec.canvas_h = spec.canvas_w = size;
    spec.classes = load_phrases_or(classes_file, default_class_phrases());
    spec.rng_seed = seed;
    auto fg = load_phrases_or(fg_file, default_fg_cognition());
    auto bg = load_phrases_or(bg_file, default_bg_cognition());
    spec.distractors = bg;
    DatasetManifest m = build_dataset(spec, n_train, n_val, out, fg, bg);
    std::cout << "wrote " << m.entries.size() << " scenes to " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.path().extension() == ".png") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    check_arg(!names.empty(), "eval: no .png masks in '" + pred_dir + "'");
    std::vector<Eigen::MatrixXi> preds, gts;
    int max_label = 1;
    for (const auto& name : names) {
        preds.push_back(png::read_indexed(pred_dir + "/" + name));
        gts.push_back(png::read_indexed(gt_dir + "/" + name));
        max_label = std::max({max_label, preds.back().maxCoeff(), gts.back().maxCoeff()});
    }
    MetricsReport r = evaluate_miou(preds, gts, max_label);
    std::cout << r.to_text();
    return 0;
}

int cmd_visualize(const std::string& image_path, const std::string& mask_path,
                  const std::string& out_path) {
    ImageTensor img = png::read_rgb(image_path);
    Eigen::MatrixXi mask = png::read_indexed(mask_path);
    check_arg(mask.rows() == img.h && mask.cols() == img.w, "visualize: size mismatch");
    const auto& palette = png::class_palette();
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            int label = mask(y, x);
            if (label == 0) continue;  // background stays unblended
            check_arg(label < static_cast<int>(palette.size()),
                      "visualize: label exceeds palette size");
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) =
                    0.5 * img.at(y, x, c) + 0.5 * palette[static_cast<size_t>(label)][static_cast<size_t>(c)] / 255.0;
        }
    png::write_rgb(out_path, img);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_gradcheck() {
    bool all_pass = true;
    for (const auto& rep : run_gradient_checks()) {
        std::cout << rep.name << " instances " << rep.instances << " max_rel_err "
                  << rep.max_rel_err << " " << (rep.pass ? "pass" : "FAIL") << "\n";
        all_pass = all_pass && rep.pass;
    }
    if (!all_pass) throw std::runtime_error("gradcheck: finite-difference suite failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CTDN text-supervised egocentric segmentation pipeline"};
    app.require_subcommand(1);

    // make-data
    auto* mk = app.add_subcommand("make-data", "Generate the synthetic egocentric dataset");
    std::string mk_out = "data";
    int mk_train = 500, mk_val = 100, mk_size = 96;
    int64_t mk_seed = 1;
    std::string mk_classes, mk_fg, mk_bg;
    mk->add_option("--out", mk_out, "Output directory");
    mk->add_option("--train", mk_train, "Number of training scenes");
    mk->add_option("--val", mk_val, "Number of validation scenes");
    mk->add_option("--seed", mk_seed, "Generator seed");
    mk->add_option("--size", mk_size, "Canvas size (square)");
    mk->add_option("--classes", mk_classes, "Class phrase file (one per line)");
    mk->add_option("--fg", mk_fg, "Foreground cognition phrase file");
    mk->add_option("--bg", mk_bg, "Background cognition phrase file");

    // pretrain-teacher
    auto* pt = app.add_subcommand("pretrain-teacher", "Contrastively pretrain the frozen teacher");
    ConfigFlags pt_cfg;
    std::string pt_data, pt_out;
    add_config_flags(pt, pt_cfg);
    pt->add_option("--data", pt_data, "Dataset directory (overrides data.dir)");
    pt->add_option("--out", pt_out, "Checkpoint output path");

    // train (stage 1)
    auto* tr = app.add_subcommand("train", "Stage-1 cognition transfer and decoupling training");
    ConfigFlags tr_cfg;
    std::string tr_data, tr_teacher, tr_init;
    add_config_flags(tr, tr_cfg);
    tr->add_option("--data", tr_data, "Dataset directory (overrides data.dir)");
    tr->add_option("--teacher", tr_teacher, "Teacher checkpoint from pretrain-teacher")
        ->required();
    tr->add_option("--init-from", tr_init, "Warm-start checkpoint (overrides all weights)");

    // gen-masks (stage 2)
    auto* gm = app.add_subcommand("gen-masks", "Generate pseudo masks with CAM + affinity + CRF");
    ConfigFlags gm_cfg;
    std::string gm_data, gm_ckpt, gm_out, gm_split = "train";
    add_config_flags(gm, gm_cfg);
    gm->add_option("--data", gm_data, "Dataset directory (overrides data.dir)");
    gm->add_option("--checkpoint", gm_ckpt, "Stage-1 checkpoint")->required();
    gm->add_option("--out", gm_out, "Mask output directory (overrides paths.masks_dir)");
    gm->add_option("--split", gm_split, "Dataset split (train/val)");

    // train-seg (stage 3)
    auto* ts = app.add_subcommand("train-seg", "Train the stage-3 segmenter on pseudo masks");
    ConfigFlags ts_cfg;
    std::string ts_data, ts_masks, ts_out;
    bool ts_gt = false;
    add_config_flags(ts, ts_cfg);
    ts->add_option("--data", ts_data, "Dataset directory (overrides data.dir)");
    ts->add_option("--masks", ts_masks, "Pseudo-mask directory (overrides paths.masks_dir)");
    ts->add_option("--out", ts_out, "Segmenter checkpoint output path");
    ts->add_flag("--use-gt", ts_gt, "Train on ground-truth masks (upper bound)");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate predicted masks against ground truth");
    std::string ev_pred, ev_gt;
    ev->add_option("--pred", ev_pred, "Directory of predicted masks")->required();
    ev->add_option("--gt", ev_gt, "Directory of ground-truth masks")->required();

    // visualize
    auto* vz = app.add_subcommand("visualize", "Blend a mask over an image with the class palette");
    std::string vz_img, vz_mask, vz_out;
    vz->add_option("--image", vz_img, "Input image")->required();
    vz->add_option("--mask", vz_mask, "Indexed mask")->required();
    vz->add_option("--out", vz_out, "Output overlay PNG")->required();

    // gradcheck
    app.add_subcommand("gradcheck", "Run the finite-difference gradient suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (mk->parsed())
            return cmd_make_data(mk_out, mk_train, mk_val, static_cast<uint64_t>(mk_seed), mk_size,
                                 mk_classes, mk_fg, mk_bg);
        if (ev->parsed()) return cmd_eval(ev_pred, ev_gt);
        if (vz->parsed()) return cmd_visualize(vz_img, vz_mask, vz_out);
        if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();

        if (pt->parsed()) {
            RunConfig c = resolve_config(pt_cfg);
            if (!pt_data.empty()) c.data_dir = pt_data;
            DatasetManifest m = load_manifest(c.data_dir);
            CtdnModel model = CtdnModel::create(c, m);
            pretrain_teacher(c, m, model, &std::cout);
            std::string out = pt_out.empty() ? c.checkpoint_dir + "/teacher.ckpt" : pt_out;
            save_checkpoint(out, model, c, nullptr, 0);
            std::cout << "wrote " << out << "\n";
            return 0;
        }
        if (tr->parsed()) {
            RunConfig c = resolve_config(tr_cfg);
            if (!tr_data.empty()) c.data_dir = tr_data;
            DatasetManifest m = load_manifest(c.data_dir);
            CtdnModel model = CtdnModel::create(c, m);
            load_checkpoint(tr_teacher, model, nullptr);
            if (!tr_init.empty()) load_checkpoint(tr_init, model, nullptr);
            model.freeze_teacher_side();
            train_stage1(c, m, model, &std::cout);
            std::cout << "wrote " << c.checkpoint_dir << "/stage1.ckpt\n";
            return 0;
        }
        if (gm->parsed()) {
            RunConfig c = resolve_config(gm_cfg);
            if (!gm_data.empty()) c.data_dir = gm_data;
            if (!gm_out.empty()) c.masks_dir = gm_out;
            DatasetManifest m = load_manifest(c.data_dir);
            CtdnModel model = CtdnModel::create(c, m);
            load_checkpoint(gm_ckpt, model, nullptr);
            model.freeze_teacher_side();
            MaskGenReport rep =
                generate_pseudo_masks(c, m, model, c.masks_dir, gm_split, &std::cout);
            std::cout << "generated " << rep.generated << " skipped " << rep.skipped << "\n"
                      << rep.metrics.to_text();
            return 0;
        }
        if (ts->parsed()) {
            RunConfig c = resolve_config(ts_cfg);
            if (!ts_data.empty()) c.data_dir = ts_data;
            if (!ts_masks.empty()) c.masks_dir = ts_masks;
            if (ts_gt) c.seg_use_gt = true;
            DatasetManifest m = load_manifest(c.data_dir);
            Segmenter seg(m.n_classes(), c.seg_base_channels, c.seed);
            MetricsReport rep = train_segmenter_stage3(c, m, c.masks_dir, seg, &std::cout);
            std::string out = ts_out.empty() ? c.checkpoint_dir + "/segmenter.ckpt" : ts_out;
            save_segmenter(out, seg, c);
            std::cout << rep.to_text() << "wrote " << out << "\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cerr << app.help();
    return 1;
}
