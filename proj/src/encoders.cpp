#include "ctdn/encoders.hpp"

#include "ctdn/interp.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

namespace ctdn {

using ag::Tensor;

ImageTensor ImageTensor::zeros(int h, int w) {
    ImageTensor img;
    img.h = h;
    img.w = w;
    img.rgb = Mat::Zero(static_cast<Eigen::Index>(h) * w, 3);
    return img;
}

void ImageTensor::validate(int patch) const {
    check_arg(h > 0 && w > 0 && rgb.rows() == static_cast<Eigen::Index>(h) * w && rgb.cols() == 3,
              "ImageTensor: inconsistent shape");
    check_arg(rgb.allFinite() && rgb.minCoeff() >= 0.0 && rgb.maxCoeff() <= 1.0,
              "ImageTensor: pixels must be finite and within [0, 1]");
    check_arg(h % patch == 0 && w % patch == 0,
              "ImageTensor: H and W must be divisible by the patch size");
}

Mat patchify(const ImageTensor& image, int patch) {
    const int gh = image.h / patch, gw = image.w / patch;
    Mat out(static_cast<Eigen::Index>(gh) * gw, static_cast<Eigen::Index>(patch) * patch * 3);
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            Eigen::Index row = static_cast<Eigen::Index>(py) * gw + px;
            Eigen::Index col = 0;
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x)
                    for (int c = 0; c < 3; ++c)
                        out(row, col++) = image.at(py * patch + y, px * patch + x, c);
        }
    }
    return out;
}

PromptTemplate::PromptTemplate(std::string t) : text(std::move(t)) {
    auto first = text.find("{}");
    check_arg(first != std::string::npos && text.find("{}", first + 1) == std::string::npos,
              "PromptTemplate: template must contain exactly one '{}' placeholder");
}

std::string PromptTemplate::fill(const std::string& phrase) const {
    std::string out = text;
    out.replace(out.find("{}"), 2, phrase);
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> phrases) : phrases_(std::move(phrases)) {}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "Vocabulary: cannot open '" + path + "'");
    std::vector<std::string> phrases;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) phrases.push_back(line);
    }
    return Vocabulary(std::move(phrases));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream f(path);
    check(f.good(), "Vocabulary: cannot write '" + path + "'");
    for (const auto& p : phrases_) f << p << "\n";
}

const std::string& Vocabulary::phrase(int id) const {
    check_arg(id >= 0 && id < size(),
              "Vocabulary: unknown phrase id " + std::to_string(id));
    return phrases_[static_cast<size_t>(id)];
}

ProjectionHead::ProjectionHead(nn::ParamStore& ps, const std::string& prefix, int in, int out,
                               Rng& rng) {
    Mat w(in, out);
    const double std = std::sqrt(2.0 / static_cast<double>(in + out));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, std);
    weight_ = ps.add(prefix + ".weight", std::move(w));
    bias_ = ps.add(prefix + ".bias", Mat::Zero(1, out));
}

ProjectionHead ProjectionHead::frozen_copy(const ProjectionHead& src) {
    ProjectionHead h;
    h.weight_ = ag::constant(src.weight_->value);
    h.bias_ = ag::constant(src.bias_->value);
    h.frozen_ = true;
    return h;
}

Tensor ProjectionHead::apply(const Tensor& tokens) const {
    check_arg(tokens->value.cols() == weight_->value.rows(),
              "ProjectionHead: token dimension mismatch");
    if (frozen_) {
        // Weights stay out of the graph; gradient still reaches the tokens.
        return ag::add_rows(ag::matmul(tokens, ag::constant(weight_->value)),
                            ag::constant(bias_->value));
    }
    return ag::add_rows(ag::matmul(tokens, weight_), bias_);
}

Mat ProjectionHead::apply_values(const Mat& tokens) const {
    check_arg(tokens.cols() == weight_->value.rows(), "ProjectionHead: token dimension mismatch");
    return (tokens * weight_->value).rowwise() + bias_->value.row(0);
}

void ProjectionHead::refresh_from(const ProjectionHead& src) {
    weight_->value = src.weight_->value;
    bias_->value = src.bias_->value;
}

LogitScale::LogitScale(nn::ParamStore& ps, double init) {
    check_arg(init > 0.0, "LogitScale: init must be positive");
    log_param_ = ps.add("logit_scale", Mat::Constant(1, 1, std::log(init)));
}

void LogitScale::clamp() {
    double& v = log_param_->value(0, 0);
    v = std::min(std::max(v, 0.0), std::log(200.0));
}

VisionTransformer::VisionTransformer(const EncoderConfig& cfg, const std::string& name,
                                     uint64_t seed)
    : cfg_(cfg), seed_(seed) {
    check_arg(cfg.image_size % cfg.patch == 0, "VisionTransformer: image size vs patch mismatch");
    check_arg(cfg.c_v % cfg.heads == 0, "VisionTransformer: heads must divide c_v");
    Rng rng(seed);
    const int grid = cfg.image_size / cfg.patch;
    patch_embed_ = nn::Linear::create(ps_, name + ".patch_embed", cfg.patch * cfg.patch * 3,
                                      cfg.c_v, rng);
    Mat cls(1, cfg.c_v), pos(1 + grid * grid, cfg.c_v);
    for (Eigen::Index i = 0; i < cls.size(); ++i) cls.data()[i] = rng.normal(0.0, 0.02);
    for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = rng.normal(0.0, 0.02);
    cls_token_ = ps_.add(name + ".cls_token", std::move(cls));
    pos_embed_ = ps_.add(name + ".pos_embed", std::move(pos));
    for (int b = 0; b < cfg.blocks; ++b) {
        std::string p = name + ".block" + std::to_string(b);
        Block blk;
        blk.ln1 = nn::LayerNorm::create(ps_, p + ".ln1", cfg.c_v);
        blk.ln2 = nn::LayerNorm::create(ps_, p + ".ln2", cfg.c_v);
        blk.qkv = nn::Linear::create(ps_, p + ".attn.qkv", cfg.c_v, 3 * cfg.c_v, rng);
        blk.attn_proj = nn::Linear::create(ps_, p + ".attn.proj", cfg.c_v, cfg.c_v, rng);
        blk.fc1 = nn::Linear::create(ps_, p + ".mlp.fc1", cfg.c_v, cfg.mlp_ratio * cfg.c_v, rng);
        blk.fc2 = nn::Linear::create(ps_, p + ".mlp.fc2", cfg.mlp_ratio * cfg.c_v, cfg.c_v, rng);
        blocks_.push_back(std::move(blk));
    }
    final_ln_ = nn::LayerNorm::create(ps_, name + ".final", cfg.c_v);
}

Tensor VisionTransformer::run_block(const Block& b, const Tensor& x, Mat* attn_avg) const {
    const int c = cfg_.c_v;
    const int dh = c / cfg_.heads;
    Tensor x1 = b.ln1(x);
    Tensor qkv = b.qkv(x1);
    std::vector<Tensor> head_outs;
    for (int h = 0; h < cfg_.heads; ++h) {
        Tensor q = ag::slice_cols(qkv, h * dh, dh);
        Tensor k = ag::slice_cols(qkv, c + h * dh, dh);
        Tensor v = ag::slice_cols(qkv, 2 * c + h * dh, dh);
        Tensor att = ag::softmax_rows(
            ag::scale(ag::matmul(q, ag::transpose(k)), 1.0 / std::sqrt(double(dh))));
        if (attn_avg) {
            if (h == 0) *attn_avg = att->value / cfg_.heads;
            else *attn_avg += att->value / cfg_.heads;
        }
        head_outs.push_back(ag::matmul(att, v));
    }
    Tensor out = ag::add(x, b.attn_proj(ag::concat_cols(head_outs)));
    Tensor x2 = b.ln2(out);
    return ag::add(out, b.fc2(ag::gelu(b.fc1(x2))));
}

VisualFeatures VisionTransformer::encode(const ImageTensor& image) const {
    image.validate(cfg_.patch);
    const int gh = image.h / cfg_.patch, gw = image.w / cfg_.patch;
    const int base = cfg_.image_size / cfg_.patch;
    const int n = gh * gw;

    Tensor tok = patch_embed_(ag::constant(patchify(image, cfg_.patch)));
    Tensor x = ag::concat_rows({cls_token_, tok});
    Tensor pos_cls = ag::slice_rows(pos_embed_, 0, 1);
    Tensor pos_patch = ag::slice_rows(pos_embed_, 1, base * base);
    if (gh != base || gw != base) {
        // Crops reuse the base-grid positional table through bilinear resampling.
        pos_patch = ag::left_apply(bilinear_matrix(base, base, gh, gw), pos_patch);
    }
    x = ag::add(x, ag::concat_rows({pos_cls, pos_patch}));

    VisualFeatures feats;
    feats.grid_h = gh;
    feats.grid_w = gw;
    feats.attention.resize(blocks_.size());
    for (size_t b = 0; b + 1 < blocks_.size(); ++b)
        x = run_block(blocks_[b], x, &feats.attention[b]);

    // Patch tokens entering the final block are the Grad-CAM activation; the
    // class readout still depends on them through the last attention layer.
    feats.activation_node = ag::slice_rows(x, 1, n);
    feats.activation_node->retain = true;
    feats.activation = feats.activation_node->value;
    x = run_block(blocks_.back(), x, &feats.attention.back());

    feats.tokens_node = final_ln_(x);
    feats.tokens = feats.tokens_node->value;
    check(feats.tokens.allFinite(), "VisionTransformer: non-finite tokens");
    return feats;
}

std::vector<std::string> TextEncoder::split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

TextEncoder::TextEncoder(const EncoderConfig& cfg, const Vocabulary& vocab,
                         const std::vector<std::string>& prompt_texts, uint64_t seed)
    : cfg_(cfg), vocab_(vocab) {
    check_arg(cfg.c_txt % cfg.text_heads == 0, "TextEncoder: heads must divide c_txt");
    std::set<std::string> wordset;
    for (const auto& p : vocab.phrases())
        for (const auto& w : split_words(p)) wordset.insert(w);
    for (const auto& p : prompt_texts)
        for (const auto& w : split_words(p)) wordset.insert(w);
    words_.assign(wordset.begin(), wordset.end());

    Rng rng(seed);
    const int c = cfg.c_txt;
    Mat emb(static_cast<Eigen::Index>(words_.size()), c), pos(cfg.text_maxlen, c);
    for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = rng.normal(0.0, 0.02);
    for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = rng.normal(0.0, 0.02);
    embed_ = ps_.add("text.word_embed", std::move(emb));
    pos_embed_ = ps_.add("text.pos_embed", std::move(pos));
    for (int b = 0; b < cfg.text_blocks; ++b) {
        std::string p = "text.block" + std::to_string(b);
        Block blk;
        blk.ln1 = nn::LayerNorm::create(ps_, p + ".ln1", c);
        blk.ln2 = nn::LayerNorm::create(ps_, p + ".ln2", c);
        blk.qkv = nn::Linear::create(ps_, p + ".attn.qkv", c, 3 * c, rng);
        blk.attn_proj = nn::Linear::create(ps_, p + ".attn.proj", c, c, rng);
        blk.fc1 = nn::Linear::create(ps_, p + ".mlp.fc1", c, cfg.mlp_ratio * c, rng);
        blk.fc2 = nn::Linear::create(ps_, p + ".mlp.fc2", cfg.mlp_ratio * c, c, rng);
        blocks_.push_back(std::move(blk));
    }
    final_ln_ = nn::LayerNorm::create(ps_, "text.final", c);
}

int TextEncoder::word_id(const std::string& w) const {
    auto it = std::lower_bound(words_.begin(), words_.end(), w);
    check_arg(it != words_.end() && *it == w, "TextEncoder: word '" + w + "' not in word table");
    return static_cast<int>(it - words_.begin());
}

Tensor TextEncoder::encode_one(const std::string& phrase, const PromptTemplate& prompt) const {
    const std::vector<std::string> toks = split_words(prompt.fill(phrase));
    check_arg(!toks.empty(), "TextEncoder: empty token sequence");
    check_arg(static_cast<int>(toks.size()) <= cfg_.text_maxlen,
              "TextEncoder: sequence longer than text_maxlen");
    const int len = static_cast<int>(toks.size());
    Mat select = Mat::Zero(len, embed_->value.rows());
    for (int i = 0; i < len; ++i) select(i, word_id(toks[i])) = 1.0;
    Tensor x = ag::add(ag::left_apply(select, embed_), ag::slice_rows(pos_embed_, 0, len));

    const int c = cfg_.c_txt;
    const int dh = c / cfg_.text_heads;
    for (const auto& b : blocks_) {
        Tensor x1 = b.ln1(x);
        Tensor qkv = b.qkv(x1);
        std::vector<Tensor> head_outs;
        for (int h = 0; h < cfg_.text_heads; ++h) {
            Tensor q = ag::slice_cols(qkv, h * dh, dh);
            Tensor k = ag::slice_cols(qkv, c + h * dh, dh);
            Tensor v = ag::slice_cols(qkv, 2 * c + h * dh, dh);
            Tensor att = ag::softmax_rows(
                ag::scale(ag::matmul(q, ag::transpose(k)), 1.0 / std::sqrt(double(dh))));
            head_outs.push_back(ag::matmul(att, v));
        }
        x = ag::add(x, b.attn_proj(ag::concat_cols(head_outs)));
        Tensor x2 = b.ln2(x);
        x = ag::add(x, b.fc2(ag::gelu(b.fc1(x2))));
    }
    return ag::mean_of_rows(final_ln_(x));
}

TextFeatures TextEncoder::encode(const std::vector<int>& phrase_ids,
                                 const PromptTemplate& prompt) const {
    TextFeatures out;
    out.phrase_ids = phrase_ids;
    out.vectors = Mat(static_cast<Eigen::Index>(phrase_ids.size()), cfg_.c_txt);
    for (size_t i = 0; i < phrase_ids.size(); ++i) {
        Tensor v = encode_one(vocab_.phrase(phrase_ids[i]), prompt);
        out.vectors.row(static_cast<Eigen::Index>(i)) = v->value;
    }
    check(out.vectors.allFinite(), "TextEncoder: non-finite embedding");
    return out;
}

}  // namespace ctdn
