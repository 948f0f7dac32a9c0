#include "ctdn/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace ctdn::nn {

Tensor ParamStore::add(const std::string& name, Mat init, bool trainable) {
    check_arg(!params_.count(name), "ParamStore: duplicate parameter '" + name + "'");
    auto t = trainable ? ag::parameter(std::move(init)) : ag::constant(std::move(init));
    params_[name] = t;
    return t;
}

Tensor ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    check_arg(it != params_.end(), "ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [_, p] : params_) p->clear_grad();
}

void ParamStore::freeze() {
    for (auto& [_, p] : params_) {
        p->requires_grad = false;
        p->clear_grad();
    }
}

namespace {
// Parameter names start with the owning model's name ("student.block0...");
// cross-model copies match on everything after that first component.
std::string name_suffix(const std::string& name) {
    auto dot = name.find('.');
    return dot == std::string::npos ? name : name.substr(dot + 1);
}
}  // namespace

void ParamStore::copy_values_from(const ParamStore& other) {
    std::map<std::string, Tensor> by_suffix;
    for (const auto& [name, p] : other.params_) by_suffix[name_suffix(name)] = p;
    for (auto& [name, p] : params_) {
        auto it = by_suffix.find(name_suffix(name));
        check_arg(it != by_suffix.end(), "copy_values_from: no source for '" + name + "'");
        const Tensor& src = it->second;
        check_arg(src->value.rows() == p->value.rows() && src->value.cols() == p->value.cols(),
                  "copy_values_from: shape mismatch for '" + name + "'");
        p->value = src->value;
    }
}

Linear Linear::create(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
    Mat w(in, out);
    const double std = std::sqrt(2.0 / static_cast<double>(in + out));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, std);
    Linear l;
    l.weight = ps.add(prefix + ".weight", std::move(w));
    l.bias = ps.add(prefix + ".bias", Mat::Zero(1, out));
    return l;
}

Tensor Linear::operator()(const Tensor& x) const {
    return ag::add_rows(ag::matmul(x, weight), bias);
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& prefix, int dim) {
    LayerNorm ln;
    ln.gamma = ps.add(prefix + ".norm_gamma", Mat::Ones(1, dim));
    ln.beta = ps.add(prefix + ".norm_beta", Mat::Zero(1, dim));
    return ln;
}

Tensor LayerNorm::operator()(const Tensor& x) const {
    return ag::add_rows(ag::mul_rows(ag::layernorm_rows(x), gamma), beta);
}

AdamW::AdamW(ParamStore& ps, double lr, double weight_decay,
             std::vector<std::string> no_decay_keys)
    : AdamW(std::vector<ParamStore*>{&ps}, lr, weight_decay, std::move(no_decay_keys)) {}

AdamW::AdamW(const std::vector<ParamStore*>& stores, double lr, double weight_decay,
             std::vector<std::string> no_decay_keys)
    : lr_(lr), wd_(weight_decay) {
    for (ParamStore* ps : stores)
        for (const auto& [name, p] : ps->all()) {
            if (!p->requires_grad) continue;
            bool decay = true;
            for (const auto& key : no_decay_keys)
                if (name.find(key) != std::string::npos) decay = false;
            slots_.push_back({p, name, decay, Mat::Zero(p->value.rows(), p->value.cols()),
                              Mat::Zero(p->value.rows(), p->value.cols())});
        }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& s : slots_) {
        if (!s.p->has_grad) continue;
        const Mat& g = s.p->grad;
        s.m = beta1_ * s.m + (1.0 - beta1_) * g;
        s.v = beta2_ * s.v + (1.0 - beta2_) * g.cwiseProduct(g);
        Mat mhat = s.m / bc1;
        Mat vhat = s.v / bc2;
        if (s.decay && wd_ > 0.0) s.p->value -= lr_ * wd_ * s.p->value;
        s.p->value -= lr_ * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
    }
}

std::map<std::string, Mat> AdamW::state() const {
    std::map<std::string, Mat> st;
    for (const auto& s : slots_) {
        st["adam.m." + s.name] = s.m;
        st["adam.v." + s.name] = s.v;
    }
    return st;
}

void AdamW::load_state(const std::map<std::string, Mat>& st, int64_t step_count) {
    t_ = step_count;
    for (auto& s : slots_) {
        auto im = st.find("adam.m." + s.name);
        auto iv = st.find("adam.v." + s.name);
        check_arg(im != st.end() && iv != st.end(),
                  "AdamW::load_state: missing state for '" + s.name + "'");
        s.m = im->second;
        s.v = iv->second;
    }
}

double poly_lr(double lr0, int64_t step, int64_t total_steps, double power) {
    if (total_steps <= 0) return lr0;
    double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    return lr0 * std::pow(1.0 - frac, power);
}

namespace {
constexpr char kMagic[8] = {'C', 'T', 'D', 'N', 'A', 'R', 'C', 'H'};

void write_u64(std::ofstream& f, uint64_t x) { f.write(reinterpret_cast<char*>(&x), 8); }
uint64_t read_u64(std::ifstream& f) {
    uint64_t x = 0;
    f.read(reinterpret_cast<char*>(&x), 8);
    return x;
}
void write_str(std::ofstream& f, const std::string& s) {
    write_u64(f, s.size());
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_str(std::ifstream& f) {
    std::string s(read_u64(f), '\0');
    f.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
}
}  // namespace

void save_archive(const std::string& path, const Archive& ar) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "save_archive: cannot open '" + path + "' for writing");
    f.write(kMagic, 8);
    write_u64(f, ar.version);
    write_u64(f, ar.seed);
    write_u64(f, ar.ints.size());
    for (const auto& [k, v] : ar.ints) {
        write_str(f, k);
        write_u64(f, static_cast<uint64_t>(v));
    }
    write_u64(f, ar.texts.size());
    for (const auto& [k, v] : ar.texts) {
        write_str(f, k);
        write_str(f, v);
    }
    write_u64(f, ar.arrays.size());
    for (const auto& [k, m] : ar.arrays) {
        write_str(f, k);
        write_u64(f, static_cast<uint64_t>(m.rows()));
        write_u64(f, static_cast<uint64_t>(m.cols()));
        f.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    check(f.good(), "save_archive: write failed for '" + path + "'");
}

Archive load_archive(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "load_archive: missing checkpoint '" + path + "'");
    char magic[8];
    f.read(magic, 8);
    check(std::memcmp(magic, kMagic, 8) == 0, "load_archive: bad magic in '" + path + "'");
    Archive ar;
    ar.version = static_cast<uint32_t>(read_u64(f));
    ar.seed = read_u64(f);
    uint64_t n_ints = read_u64(f);
    for (uint64_t i = 0; i < n_ints; ++i) {
        std::string k = read_str(f);
        ar.ints[k] = static_cast<int64_t>(read_u64(f));
    }
    uint64_t n_texts = read_u64(f);
    for (uint64_t i = 0; i < n_texts; ++i) {
        std::string k = read_str(f);
        ar.texts[k] = read_str(f);
    }
    uint64_t n = read_u64(f);
    for (uint64_t i = 0; i < n; ++i) {
        std::string k = read_str(f);
        uint64_t rows = read_u64(f), cols = read_u64(f);
        Mat m(rows, cols);
        f.read(reinterpret_cast<char*>(m.data()),
               static_cast<std::streamsize>(sizeof(double) * m.size()));
        ar.arrays[k] = std::move(m);
    }
    check(f.good(), "load_archive: truncated archive '" + path + "'");
    return ar;
}

void save_params(const std::string& path, const ParamStore& ps, uint64_t seed) {
    Archive ar;
    ar.seed = seed;
    for (const auto& [name, p] : ps.all()) ar.arrays[name] = p->value;
    save_archive(path, ar);
}

void load_params(const std::string& path, ParamStore& ps) {
    Archive ar = load_archive(path);
    for (auto& [name, p] : ps.all()) {
        auto it = ar.arrays.find(name);
        check(it != ar.arrays.end(), "load_params: '" + path + "' lacks parameter '" + name + "'");
        check(it->second.rows() == p->value.rows() && it->second.cols() == p->value.cols(),
              "load_params: shape mismatch for '" + name + "'");
        p->value = it->second;
    }
}

}  // namespace ctdn::nn
