#include "ctdn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ctdn {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        check_arg(pos == value.size(), "");
        return v;
    } catch (...) {
        throw std::invalid_argument("config: '" + key + "' expects a number, got '" + value + "'");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    double v = parse_double(key, value);
    check_arg(v == static_cast<int>(v), "config: '" + key + "' expects an integer");
    return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config: '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace

void RunConfig::validate() const {
    loss.validate();
    crf.validate();
    check_arg(loss.lambda1 >= 0 && loss.lambda2 >= 0 && loss.lambda3 >= 0,
              "config: loss weights must be nonnegative");
    check_arg(lr > 0 && pretrain_lr > 0 && seg_lr > 0, "config: learning rates must be positive");
    check_arg(batch_size >= 1, "config: batch size must be >= 1");
    check_arg(epochs >= 0 && pretrain_epochs >= 0 && seg_epochs >= 0,
              "config: epoch counts must be nonnegative");
    check_arg(model.image_size % model.patch == 0, "config: image size not divisible by patch");
    check_arg(crop_h % model.patch == 0 && crop_w % model.patch == 0,
              "config: crop size not divisible by patch");
    check_arg(crop_h <= model.image_size && crop_w <= model.image_size,
              "config: crop larger than image");
    check_arg(tau_box > 0 && tau_box < 1 && tau_fg >= 0 && tau_fg < 1,
              "config: CAM thresholds out of range");
    check_arg(gamma > 0 && last_k >= 1, "config: invalid gamma/last_k");
    check_arg(sinkhorn_tol > 0 && sinkhorn_max_iters >= 1, "config: invalid Sinkhorn settings");
    check_arg(!data_dir.empty() && !checkpoint_dir.empty() && !masks_dir.empty(),
              "config: empty path");
}

RunConfig RunConfig::defaults() { return RunConfig{}; }

void RunConfig::apply(const std::string& raw_key, const std::string& raw_value) {
    const std::string key = trim(raw_key);
    const std::string value = trim(raw_value);
    using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
    auto d = [](double RunConfig::* f) {
        return Setter([f](RunConfig& c, const std::string& k, const std::string& v) {
            c.*f = parse_double(k, v);
        });
    };
    auto b = [](bool RunConfig::* f) {
        return Setter([f](RunConfig& c, const std::string& k, const std::string& v) {
            c.*f = parse_bool(k, v);
        });
    };
    auto i = [](int RunConfig::* f) {
        return Setter([f](RunConfig& c, const std::string& k, const std::string& v) {
            c.*f = parse_int(k, v);
        });
    };
    auto s = [](std::string RunConfig::* f) {
        return Setter([f](RunConfig& c, const std::string&, const std::string& v) { c.*f = v; });
    };
    static const std::map<std::string, Setter> table = {
        {"loss.lambda1", [](RunConfig& c, const std::string& k, const std::string& v) { c.loss.lambda1 = parse_double(k, v); }},
        {"loss.lambda2", [](RunConfig& c, const std::string& k, const std::string& v) { c.loss.lambda2 = parse_double(k, v); }},
        {"loss.lambda3", [](RunConfig& c, const std::string& k, const std::string& v) { c.loss.lambda3 = parse_double(k, v); }},
        {"loss.delta", [](RunConfig& c, const std::string& k, const std::string& v) { c.loss.delta = parse_double(k, v); }},
        {"loss.kl_student_first", b(&RunConfig::kl_student_first)},
        {"model.image_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.image_size = parse_int(k, v); }},
        {"model.patch", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.patch = parse_int(k, v); }},
        {"model.blocks", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.blocks = parse_int(k, v); }},
        {"model.heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.heads = parse_int(k, v); }},
        {"model.c_v", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.c_v = parse_int(k, v); }},
        {"model.c_txt", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.c_txt = parse_int(k, v); }},
        {"model.mlp_ratio", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.mlp_ratio = parse_int(k, v); }},
        {"model.text_blocks", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.text_blocks = parse_int(k, v); }},
        {"model.text_heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.text_heads = parse_int(k, v); }},
        {"model.text_maxlen", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.text_maxlen = parse_int(k, v); }},
        {"optim.lr", d(&RunConfig::lr)},
        {"optim.weight_decay", d(&RunConfig::weight_decay)},
        {"optim.poly_power", d(&RunConfig::poly_power)},
        {"optim.batch_size", i(&RunConfig::batch_size)},
        {"optim.epochs", i(&RunConfig::epochs)},
        {"optim.pretrain_epochs", i(&RunConfig::pretrain_epochs)},
        {"optim.pretrain_lr", d(&RunConfig::pretrain_lr)},
        {"optim.pretrain_bg_phrases", b(&RunConfig::pretrain_bg_phrases)},
        {"optim.seed", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.seed = static_cast<uint64_t>(parse_double(k, v));
         }},
        {"cam.tau_box", d(&RunConfig::tau_box)},
        {"cam.tau_fg", d(&RunConfig::tau_fg)},
        {"cam.gamma", d(&RunConfig::gamma)},
        {"cam.last_k", i(&RunConfig::last_k)},
        {"cam.sinkhorn_tol", d(&RunConfig::sinkhorn_tol)},
        {"cam.sinkhorn_max_iters", i(&RunConfig::sinkhorn_max_iters)},
        {"cam.identity_affinity", b(&RunConfig::identity_affinity)},
        {"crf.n_iters", [](RunConfig& c, const std::string& k, const std::string& v) { c.crf.n_iters = parse_int(k, v); }},
        {"crf.w_appearance", [](RunConfig& c, const std::string& k, const std::string& v) { c.crf.w_appearance = parse_double(k, v); }},
        {"crf.w_smoothness", [](RunConfig& c, const std::string& k, const std::string& v) { c.crf.w_smoothness = parse_double(k, v); }},
        {"crf.theta_alpha", [](RunConfig& c, const std::string& k, const std::string& v) { c.crf.theta_alpha = parse_double(k, v); }},
        {"crf.theta_beta", [](RunConfig& c, const std::string& k, const std::string& v) { c.crf.theta_beta = parse_double(k, v); }},
        {"crf.theta_gamma", [](RunConfig& c, const std::string& k, const std::string& v) { c.crf.theta_gamma = parse_double(k, v); }},
        {"seg.epochs", i(&RunConfig::seg_epochs)},
        {"seg.lr", d(&RunConfig::seg_lr)},
        {"seg.base_channels", i(&RunConfig::seg_base_channels)},
        {"seg.use_gt", b(&RunConfig::seg_use_gt)},
        {"data.dir", s(&RunConfig::data_dir)},
        {"data.crop_h", i(&RunConfig::crop_h)},
        {"data.crop_w", i(&RunConfig::crop_w)},
        {"paths.checkpoint_dir", s(&RunConfig::checkpoint_dir)},
        {"paths.masks_dir", s(&RunConfig::masks_dir)},
    };
    auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(*this, key, value);
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    check_arg(f.good(), "config: cannot open '" + path + "'");
    RunConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        check_arg(eq != std::string::npos,
                  "config: missing '=' at " + path + ":" + std::to_string(lineno));
        c.apply(t.substr(0, eq), t.substr(eq + 1));
    }
    return c;
}

std::string RunConfig::to_text() const {
    std::ostringstream ss;
    ss << "loss.lambda1 = " << loss.lambda1 << "\n"
       << "loss.lambda2 = " << loss.lambda2 << "\n"
       << "loss.lambda3 = " << loss.lambda3 << "\n"
       << "loss.delta = " << loss.delta << "\n"
       << "loss.kl_student_first = " << (kl_student_first ? "true" : "false") << "\n"
       << "model.image_size = " << model.image_size << "\n"
       << "model.patch = " << model.patch << "\n"
       << "model.blocks = " << model.blocks << "\n"
       << "model.heads = " << model.heads << "\n"
       << "model.c_v = " << model.c_v << "\n"
       << "model.c_txt = " << model.c_txt << "\n"
       << "model.mlp_ratio = " << model.mlp_ratio << "\n"
       << "model.text_blocks = " << model.text_blocks << "\n"
       << "model.text_heads = " << model.text_heads << "\n"
       << "model.text_maxlen = " << model.text_maxlen << "\n"
       << "optim.lr = " << lr << "\n"
       << "optim.weight_decay = " << weight_decay << "\n"
       << "optim.poly_power = " << poly_power << "\n"
       << "optim.batch_size = " << batch_size << "\n"
       << "optim.epochs = " << epochs << "\n"
       << "optim.pretrain_epochs = " << pretrain_epochs << "\n"
       << "optim.pretrain_lr = " << pretrain_lr << "\n"
       << "optim.pretrain_bg_phrases = " << (pretrain_bg_phrases ? "true" : "false") << "\n"
       << "optim.seed = " << seed << "\n"
       << "cam.tau_box = " << tau_box << "\n"
       << "cam.tau_fg = " << tau_fg << "\n"
       << "cam.gamma = " << gamma << "\n"
       << "cam.last_k = " << last_k << "\n"
       << "cam.sinkhorn_tol = " << sinkhorn_tol << "\n"
       << "cam.sinkhorn_max_iters = " << sinkhorn_max_iters << "\n"
       << "cam.identity_affinity = " << (identity_affinity ? "true" : "false") << "\n"
       << "crf.n_iters = " << crf.n_iters << "\n"
       << "crf.w_appearance = " << crf.w_appearance << "\n"
       << "crf.w_smoothness = " << crf.w_smoothness << "\n"
       << "crf.theta_alpha = " << crf.theta_alpha << "\n"
       << "crf.theta_beta = " << crf.theta_beta << "\n"
       << "crf.theta_gamma = " << crf.theta_gamma << "\n"
       << "seg.epochs = " << seg_epochs << "\n"
       << "seg.lr = " << seg_lr << "\n"
       << "seg.base_channels = " << seg_base_channels << "\n"
       << "seg.use_gt = " << (seg_use_gt ? "true" : "false") << "\n"
       << "data.dir = " << data_dir << "\n"
       << "data.crop_h = " << crop_h << "\n"
       << "data.crop_w = " << crop_w << "\n"
       << "paths.checkpoint_dir = " << checkpoint_dir << "\n"
       << "paths.masks_dir = " << masks_dir << "\n";
    return ss.str();
}

void RunConfig::save(const std::string& path) const {
    std::ofstream f(path);
    check(f.good(), "config: cannot write '" + path + "'");
    f << to_text();
}

}  // namespace ctdn
