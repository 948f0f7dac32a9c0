#pragma once

#include "ctdn/autograd.hpp"
#include "ctdn/rng.hpp"

#include <map>
#include <string>
#include <vector>

namespace ctdn::nn {

using ag::Tensor;

// Named parameter registry. Models register their leaves here so the
// optimizer, checkpointing and freeze logic can work on flat lists.
class ParamStore {
public:
    Tensor add(const std::string& name, Mat init, bool trainable = true);
    Tensor get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    const std::map<std::string, Tensor>& all() const { return params_; }

    void zero_grad();
    void freeze();  // clears requires_grad on every parameter
    void copy_values_from(const ParamStore& other);  // by name, shapes must match

private:
    std::map<std::string, Tensor> params_;
};

struct Linear {
    Tensor weight;  // (in, out)
    Tensor bias;    // (1, out)

    static Linear create(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng);
    Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
    Tensor gamma;  // (1, C)
    Tensor beta;   // (1, C)

    static LayerNorm create(ParamStore& ps, const std::string& prefix, int dim);
    Tensor operator()(const Tensor& x) const;
};

// Decoupled weight decay Adam. Decay is skipped for parameters whose names
// contain any of `no_decay_keys` (norms, biases, embeddings).
class AdamW {
public:
    AdamW(ParamStore& ps, double lr, double weight_decay,
          std::vector<std::string> no_decay_keys = {".bias", "norm", "embed", "cls_token",
                                                    "logit_scale"});
    AdamW(const std::vector<ParamStore*>& stores, double lr, double weight_decay,
          std::vector<std::string> no_decay_keys = {".bias", "norm", "embed", "cls_token",
                                                    "logit_scale"});

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    void step();
    int64_t step_count() const { return t_; }

    // Optimizer-state persistence for checkpointing.
    std::map<std::string, Mat> state() const;
    void load_state(const std::map<std::string, Mat>& st, int64_t step_count);

private:
    struct Slot {
        Tensor p;
        std::string name;
        bool decay;
        Mat m, v;
    };
    std::vector<Slot> slots_;
    double lr_, wd_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
};

// Polynomial learning-rate decay: lr(t) = lr0 * (1 - t/T)^power.
double poly_lr(double lr0, int64_t step, int64_t total_steps, double power);

// Checkpoint archive: named double matrices + format version + init seed.
struct Archive {
    uint32_t version = 1;
    uint64_t seed = 0;
    std::map<std::string, Mat> arrays;
    std::map<std::string, int64_t> ints;      // scalar metadata (step counters etc.)
    std::map<std::string, std::string> texts;  // config snapshots etc.
};

void save_archive(const std::string& path, const Archive& ar);
Archive load_archive(const std::string& path);

void save_params(const std::string& path, const ParamStore& ps, uint64_t seed);
void load_params(const std::string& path, ParamStore& ps);  // by name, strict

}  // namespace ctdn::nn
