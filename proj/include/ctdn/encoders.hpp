#pragma once

#include "ctdn/autograd.hpp"
#include "ctdn/nn.hpp"
#include "ctdn/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ctdn {

struct EncoderConfig {
    int image_size = 96;   // square input, must be divisible by patch
    int patch = 8;
    int blocks = 6;
    int heads = 4;
    int c_v = 128;         // visual width
    int c_txt = 64;        // text / joint embedding width
    int mlp_ratio = 2;
    int text_blocks = 2;
    int text_heads = 2;
    int text_maxlen = 12;
};

// RGB image in [0, 1], stored as an (H*W, 3) row-major matrix.
struct ImageTensor {
    int h = 0, w = 0;
    Mat rgb;

    double at(int y, int x, int c) const { return rgb(static_cast<Eigen::Index>(y) * w + x, c); }
    double& at(int y, int x, int c) { return rgb(static_cast<Eigen::Index>(y) * w + x, c); }
    static ImageTensor zeros(int h, int w);
    void validate(int patch) const;
};

struct VisualFeatures {
    Mat tokens;                   // (N_v, C_v), row 0 = class token
    std::vector<Mat> attention;   // per block, head-averaged, (N_v, N_v)
    Mat activation;               // (h*w, Z) patch-token grid feeding Grad-CAM
    int grid_h = 0, grid_w = 0;

    // Graph handles; null when the producing encoder is frozen.
    ag::Tensor tokens_node;
    ag::Tensor activation_node;

    int n_tokens() const { return static_cast<int>(tokens.rows()); }
};

struct TextFeatures {
    Mat vectors;                  // (N_phrases, C)
    std::vector<int> phrase_ids;
};

struct PromptTemplate {
    std::string text;  // exactly one "{}"

    explicit PromptTemplate(std::string t);
    std::string fill(const std::string& phrase) const;
};

// Class phrases + cognition phrases, line number = phrase id.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> phrases);
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    const std::string& phrase(int id) const;
    int size() const { return static_cast<int>(phrases_.size()); }
    const std::vector<std::string>& phrases() const { return phrases_; }

private:
    std::vector<std::string> phrases_;
};

class ProjectionHead {
public:
    ProjectionHead() = default;
    // Trainable head registered in `ps` under `prefix`.
    ProjectionHead(nn::ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng);
    // Frozen snapshot of another head: gradients pass through to the input
    // tokens but never into the weights.
    static ProjectionHead frozen_copy(const ProjectionHead& src);

    ag::Tensor apply(const ag::Tensor& tokens) const;
    Mat apply_values(const Mat& tokens) const;
    void refresh_from(const ProjectionHead& src);  // value copy, keeps frozen flag

    bool frozen() const { return frozen_; }
    int in_dim() const { return static_cast<int>(weight_->value.rows()); }
    int out_dim() const { return static_cast<int>(weight_->value.cols()); }
    const ag::Tensor& weight() const { return weight_; }
    const ag::Tensor& bias() const { return bias_; }

private:
    ag::Tensor weight_, bias_;
    bool frozen_ = false;
};

// Learnable scale factor, stored as log so positivity is structural.
class LogitScale {
public:
    explicit LogitScale(nn::ParamStore& ps, double init = 100.0);
    ag::Tensor scale() const { return ag::exp_of(log_param_); }
    double value() const { return std::exp(log_param_->value(0, 0)); }
    void clamp();  // [1, 200], applied after each optimizer step
    const ag::Tensor& log_param() const { return log_param_; }

private:
    ag::Tensor log_param_;
};

class VisionTransformer {
public:
    VisionTransformer(const EncoderConfig& cfg, const std::string& name, uint64_t seed);

    // Full forward pass. Tokens keep graph handles while the encoder is
    // trainable; the activation handle points at the patch tokens entering
    // the final block, which is what Grad-CAM differentiates against.
    VisualFeatures encode(const ImageTensor& image) const;

    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }
    void freeze() { ps_.freeze(); }
    const EncoderConfig& config() const { return cfg_; }
    uint64_t seed() const { return seed_; }

private:
    struct Block {
        nn::LayerNorm ln1, ln2;
        nn::Linear qkv, attn_proj, fc1, fc2;
    };
    ag::Tensor run_block(const Block& b, const ag::Tensor& x, Mat* attn_avg) const;

    EncoderConfig cfg_;
    uint64_t seed_;
    nn::ParamStore ps_;
    nn::Linear patch_embed_;
    ag::Tensor cls_token_, pos_embed_;  // pos embed at the base grid
    std::vector<Block> blocks_;
    nn::LayerNorm final_ln_;
};

// Frozen-vocabulary word transformer with mean pooling.
class TextEncoder {
public:
    // `extra_words` seeds prompt words into the word table so templates can
    // be applied to any vocabulary phrase.
    TextEncoder(const EncoderConfig& cfg, const Vocabulary& vocab,
                const std::vector<std::string>& prompt_texts, uint64_t seed);

    TextFeatures encode(const std::vector<int>& phrase_ids, const PromptTemplate& prompt) const;
    // Graph-building variant used during teacher pretraining.
    ag::Tensor encode_one(const std::string& phrase, const PromptTemplate& prompt) const;

    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }
    void freeze() { ps_.freeze(); }
    const Vocabulary& vocab() const { return vocab_; }

    static std::vector<std::string> split_words(const std::string& text);

private:
    struct Block {
        nn::LayerNorm ln1, ln2;
        nn::Linear qkv, attn_proj, fc1, fc2;
    };
    int word_id(const std::string& w) const;

    EncoderConfig cfg_;
    Vocabulary vocab_;
    std::vector<std::string> words_;
    nn::ParamStore ps_;
    ag::Tensor embed_, pos_embed_;
    std::vector<Block> blocks_;
    nn::LayerNorm final_ln_;
};

// Patch grid helper shared by encode and the data loader.
Mat patchify(const ImageTensor& image, int patch);

}  // namespace ctdn
