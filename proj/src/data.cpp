#include "ctdn/data.hpp"

#include "ctdn/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace ctdn {

namespace {

struct PhraseKind {
    bool is_object = false;
    bool mine = false;   // wearer's ("my") vs partner's ("your")
    bool left = false;
};

bool contains_word(const std::string& phrase, const std::string& word) {
    auto words = TextEncoder::split_words(phrase);
    return std::find(words.begin(), words.end(), word) != words.end();
}

PhraseKind parse_class_phrase(const std::string& phrase) {
    PhraseKind k;
    k.is_object = contains_word(phrase, "object");
    k.mine = contains_word(phrase, "my");
    k.left = contains_word(phrase, "left");
    check_arg(contains_word(phrase, "left") || contains_word(phrase, "right"),
              "SceneSpec: class phrase '" + phrase + "' must name a left or right side");
    check_arg(k.is_object || k.mine || contains_word(phrase, "your"),
              "SceneSpec: hand phrase '" + phrase + "' must say whose hand it is (my/your)");
    return k;
}

struct Rgbd {
    double r, g, b;
};

void put_pixel(ImageTensor& img, Eigen::MatrixXi& mask, int y, int x, const Rgbd& c, int label) {
    if (y < 0 || y >= img.h || x < 0 || x >= img.w) return;
    img.at(y, x, 0) = c.r;
    img.at(y, x, 1) = c.g;
    img.at(y, x, 2) = c.b;
    mask(y, x) = label;
}

void fill_rect(ImageTensor& img, Eigen::MatrixXi& mask, int y0, int x0, int y1, int x1,
               const Rgbd& c, int label) {
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) put_pixel(img, mask, y, x, c, label);
}

void fill_ellipse(ImageTensor& img, Eigen::MatrixXi& mask, double cy, double cx, double ry,
                  double rx, const Rgbd& c, int label) {
    for (int y = static_cast<int>(cy - ry) - 1; y <= static_cast<int>(cy + ry) + 1; ++y)
        for (int x = static_cast<int>(cx - rx) - 1; x <= static_cast<int>(cx + rx) + 1; ++x) {
            double dy = (y - cy) / ry, dx = (x - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) put_pixel(img, mask, y, x, c, label);
        }
}

void darken_ellipse(ImageTensor& img, double cy, double cx, double ry, double rx, double factor) {
    for (int y = static_cast<int>(cy - ry) - 1; y <= static_cast<int>(cy + ry) + 1; ++y)
        for (int x = static_cast<int>(cx - rx) - 1; x <= static_cast<int>(cx + rx) + 1; ++x) {
            if (y < 0 || y >= img.h || x < 0 || x >= img.w) continue;
            double dy = (y - cy) / ry, dx = (x - cx) / rx;
            if (dy * dy + dx * dx <= 1.0)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) *= factor;
        }
}

struct HandPlacement {
    int class_index;  // 1-based label
    PhraseKind kind;
    double cy, cx, ry, rx;
};

constexpr int kPresencePixels = 16;

}  // namespace

void SceneSpec::validate() const {
    check_arg(canvas_h >= 32 && canvas_w >= 32, "SceneSpec: canvas too small");
    check_arg(!classes.empty(), "SceneSpec: class list empty");
    bool any_hand = false;
    for (const auto& p : classes) any_hand = any_hand || !parse_class_phrase(p).is_object;
    check_arg(any_hand, "SceneSpec: at least one hand class required");
}

std::vector<std::string> default_class_phrases() {
    return {"my left hand",        "my right hand",       "your left hand",
            "your right hand",     "object in left hand", "object in right hand"};
}

std::vector<std::string> default_fg_cognition() {
    return {"hand", "object", "arm", "held object"};
}

std::vector<std::string> default_bg_cognition() {
    return {"table", "wall", "floor", "jenga block", "shadow", "background clutter"};
}

namespace {

SceneSample generate_scene_from_seed(const SceneSpec& spec, uint64_t scene_seed) {
    spec.validate();
    const int h = spec.canvas_h, w = spec.canvas_w;
    Rng rng(scene_seed);

    std::vector<int> hand_classes, object_classes;
    for (size_t i = 0; i < spec.classes.size(); ++i) {
        if (parse_class_phrase(spec.classes[i]).is_object)
            object_classes.push_back(static_cast<int>(i));
        else
            hand_classes.push_back(static_cast<int>(i));
    }

    for (int attempt = 0; attempt < 100; ++attempt) {
        ImageTensor img = ImageTensor::zeros(h, w);
        Eigen::MatrixXi mask = Eigen::MatrixXi::Zero(h, w);

        // Table-like base with a soft vertical gradient.
        for (int y = 0; y < h; ++y) {
            double shade = 1.0 - 0.15 * y / h;
            for (int x = 0; x < w; ++x)
                put_pixel(img, mask, y, x,
                          {0.46 * shade, 0.37 * shade, 0.28 * shade}, 0);
        }

        // Distractors (label 0). The table base itself counts when present
        // in the vocabulary.
        std::vector<int> distractor_ids;
        std::vector<int> pool;
        for (size_t i = 0; i < spec.distractors.size(); ++i) {
            if (spec.distractors[i] == "table")
                distractor_ids.push_back(static_cast<int>(i));
            else
                pool.push_back(static_cast<int>(i));
        }
        for (size_t i = pool.size(); i > 1; --i)
            std::swap(pool[i - 1], pool[static_cast<size_t>(rng.uniform_int(0, int(i) - 1))]);
        int n_dis = pool.empty() ? 0 : std::min<int>(1 + rng.uniform_int(0, 2), int(pool.size()));
        std::vector<int> chosen(pool.begin(), pool.begin() + n_dis);

        // Hands. 1..4 distinct classes; centroid halves follow the phrase.
        std::vector<int> hc = hand_classes;
        for (size_t i = hc.size(); i > 1; --i)
            std::swap(hc[i - 1], hc[static_cast<size_t>(rng.uniform_int(0, int(i) - 1))]);
        int n_hands = std::min<int>(1 + rng.uniform_int(0, 3), int(hc.size()));
        std::vector<HandPlacement> hands;
        bool feasible = true;
        for (int i = 0; i < n_hands && feasible; ++i) {
            PhraseKind kind = parse_class_phrase(spec.classes[static_cast<size_t>(hc[i])]);
            bool placed = false;
            for (int t = 0; t < 40 && !placed; ++t) {
                HandPlacement hp;
                hp.class_index = hc[i] + 1;
                hp.kind = kind;
                hp.ry = rng.uniform(7.0, 11.0);
                hp.rx = rng.uniform(6.0, 9.5);
                hp.cx = (kind.left ? rng.uniform(0.14, 0.40) : rng.uniform(0.60, 0.86)) * w;
                hp.cy = (kind.mine ? rng.uniform(0.58, 0.80) : rng.uniform(0.20, 0.42)) * h;
                bool clash = false;
                for (const auto& other : hands) {
                    double dy = hp.cy - other.cy, dx = hp.cx - other.cx;
                    if (std::sqrt(dy * dy + dx * dx) < 0.9 * (hp.rx + other.rx)) clash = true;
                }
                if (!clash) {
                    hands.push_back(hp);
                    placed = true;
                }
            }
            feasible = feasible && placed;
        }
        if (!feasible) continue;

        // Interacting objects: present only when a matching-side hand exists;
        // each overlaps its hand boundary by 2..6 pixels.
        struct ObjPlacement {
            int class_index;
            double cy, cx, r;
        };
        std::vector<ObjPlacement> objects;
        for (int oc : object_classes) {
            PhraseKind kind = parse_class_phrase(spec.classes[static_cast<size_t>(oc)]);
            const HandPlacement* host = nullptr;
            for (const auto& hp : hands)
                if (hp.kind.left == kind.left) host = &hp;
            if (!host || rng.uniform() > 0.75) continue;
            double ro = rng.uniform(4.0, 6.5);
            double overlap = 2.0 + rng.uniform() * 4.0;
            for (int t = 0; t < 20; ++t) {
                double theta = rng.uniform(0.0, 2.0 * M_PI);
                double dist = std::min(host->rx, host->ry) + ro - overlap;
                double cy = host->cy + dist * std::sin(theta);
                double cx = host->cx + dist * std::cos(theta);
                if (cy > ro + 1 && cy < h - ro - 1 && cx > ro + 1 && cx < w - ro - 1) {
                    objects.push_back({oc + 1, cy, cx, ro});
                    break;
                }
            }
            if (objects.size() >= 2) break;
        }

        // Render distractors.
        for (int d : chosen) {
            const std::string& name = spec.distractors[static_cast<size_t>(d)];
            distractor_ids.push_back(d);
            if (name == "wall") {
                int band = rng.uniform_int(8, 16);
                fill_rect(img, mask, 0, 0, band, w - 1, {0.60, 0.62, 0.66}, 0);
            } else if (name == "floor") {
                int band = rng.uniform_int(5, 10);
                fill_rect(img, mask, h - 1 - band, 0, h - 1, w - 1, {0.34, 0.32, 0.29}, 0);
            } else if (name == "jenga block") {
                // Wood tone deliberately close to skin: the interference the
                // decoupling loss is supposed to survive.
                int bw = rng.uniform_int(10, 18), bh = rng.uniform_int(6, 10);
                int y0, x0;
                if (!hands.empty() && rng.uniform() < 0.7) {
                    const auto& hp = hands[static_cast<size_t>(
                        rng.uniform_int(0, int(hands.size()) - 1))];
                    y0 = std::clamp(static_cast<int>(hp.cy + rng.uniform(-2.0, 2.0) +
                                                     (rng.uniform() < 0.5 ? -hp.ry - bh : hp.ry)),
                                    0, h - 1 - bh);
                    x0 = std::clamp(static_cast<int>(hp.cx + rng.uniform(-12.0, 12.0)), 0,
                                    w - 1 - bw);
                } else {
                    y0 = rng.uniform_int(0, h - 1 - bh);
                    x0 = rng.uniform_int(0, w - 1 - bw);
                }
                double j = rng.uniform(-0.03, 0.03);
                fill_rect(img, mask, y0, x0, y0 + bh, x0 + bw,
                          {0.83 + j, 0.64 + j, 0.45 + j}, 0);
            } else if (name == "shadow") {
                darken_ellipse(img, rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w,
                               rng.uniform(6.0, 14.0), rng.uniform(8.0, 18.0), 0.55);
            } else {  // background clutter and any custom phrase
                for (int rct = 0; rct < 3; ++rct) {
                    int bw = rng.uniform_int(4, 9), bh = rng.uniform_int(4, 9);
                    int y0 = rng.uniform_int(0, h - 1 - bh), x0 = rng.uniform_int(0, w - 1 - bw);
                    fill_rect(img, mask, y0, x0, y0 + bh, x0 + bw,
                              {rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6)},
                              0);
                }
            }
        }

        // Render hands: arm strip to the entry edge plus the hand ellipse.
        for (const auto& hp : hands) {
            double j = rng.uniform(-0.04, 0.04);
            Rgbd skin{0.87 + j, 0.68 + j, 0.52 + j};
            int aw = rng.uniform_int(4, 6);
            int x0 = std::clamp(static_cast<int>(hp.cx) - aw, 0, w - 1);
            int x1 = std::clamp(static_cast<int>(hp.cx) + aw, 0, w - 1);
            if (hp.kind.mine)
                fill_rect(img, mask, static_cast<int>(hp.cy), x0, h - 1, x1, skin, hp.class_index);
            else
                fill_rect(img, mask, 0, x0, static_cast<int>(hp.cy), x1, skin, hp.class_index);
            fill_ellipse(img, mask, hp.cy, hp.cx, hp.ry, hp.rx, skin, hp.class_index);
        }

        // Render interacting objects last so the contact region is theirs.
        const Rgbd object_colors[] = {{0.85, 0.15, 0.15}, {0.15, 0.30, 0.85}, {0.10, 0.70, 0.25},
                                      {0.60, 0.20, 0.70}, {0.10, 0.70, 0.75}, {0.95, 0.75, 0.10}};
        for (const auto& ob : objects) {
            const Rgbd& c = object_colors[static_cast<size_t>(rng.uniform_int(0, 5))];
            fill_ellipse(img, mask, ob.cy, ob.cx, ob.r, ob.r, c, ob.class_index);
        }

        // Pixel noise.
        for (Eigen::Index i = 0; i < img.rgb.size(); ++i)
            img.rgb.data()[i] =
                std::clamp(img.rgb.data()[i] + rng.uniform(-0.02, 0.02), 0.0, 1.0);

        // Accept only if every intended class survived occlusion with enough
        // pixels, so stored labels and the mask always agree.
        std::vector<int> intended(spec.classes.size(), 0);
        for (const auto& hp : hands) intended[static_cast<size_t>(hp.class_index - 1)] = 1;
        for (const auto& ob : objects) intended[static_cast<size_t>(ob.class_index - 1)] = 1;
        ClassLabelVector derived = derive_multilabel(mask, static_cast<int>(spec.classes.size()));
        if (derived.labels != intended) continue;

        // Interference guarantee: every interacting object touches a hand
        // (some object pixel 8-adjacent to some hand pixel).
        auto is_hand_label = [&](int l) {
            return l > 0 && !parse_class_phrase(spec.classes[static_cast<size_t>(l - 1)]).is_object;
        };
        bool adjacency_ok = true;
        for (const auto& ob : objects) {
            bool touches = false;
            for (int y = 0; y < h && !touches; ++y)
                for (int x = 0; x < w && !touches; ++x) {
                    if (mask(y, x) != ob.class_index) continue;
                    for (int dy = -1; dy <= 1 && !touches; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            int ny = y + dy, nx = x + dx;
                            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                            if (is_hand_label(mask(ny, nx))) {
                                touches = true;
                                break;
                            }
                        }
                }
            adjacency_ok = adjacency_ok && touches;
        }
        if (!adjacency_ok) continue;

        SceneSample sample;
        sample.image = std::move(img);
        sample.mask = std::move(mask);
        sample.labels = std::move(derived);
        std::sort(distractor_ids.begin(), distractor_ids.end());
        sample.distractor_ids = std::move(distractor_ids);
        sample.scene_seed = scene_seed;
        return sample;
    }
    throw std::runtime_error("generate_scene: infeasible placement after 100 attempts (seed " +
                             std::to_string(scene_seed) + ")");
}

}  // namespace

SceneSample generate_scene(const SceneSpec& spec, int index) {
    check_arg(index >= 0, "generate_scene: index must be nonnegative");
    return generate_scene_from_seed(spec, Rng::mix(spec.rng_seed, static_cast<uint64_t>(index)));
}

std::vector<int> distractors_for_seed(const SceneSpec& spec, uint64_t scene_seed) {
    return generate_scene_from_seed(spec, scene_seed).distractor_ids;
}

std::string ManifestEntry::image_path(const std::string& root) const {
    return root + "/images/" + split + "/" + id + ".png";
}

std::string ManifestEntry::mask_path(const std::string& root) const {
    return root + "/masks/" + split + "/" + id + ".png";
}

std::vector<int> DatasetManifest::split_indices(const std::string& split) const {
    std::vector<int> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == split) out.push_back(static_cast<int>(i));
    return out;
}

ClassLabelVector derive_multilabel(const Eigen::MatrixXi& mask, int n_classes) {
    check_arg(mask.minCoeff() >= 0 && mask.maxCoeff() <= n_classes,
              "derive_multilabel: mask label out of range");
    std::vector<int> counts(static_cast<size_t>(n_classes) + 1, 0);
    for (Eigen::Index i = 0; i < mask.size(); ++i) ++counts[static_cast<size_t>(mask.data()[i])];
    ClassLabelVector v;
    v.labels.resize(static_cast<size_t>(n_classes));
    for (int k = 1; k <= n_classes; ++k)
        v.labels[static_cast<size_t>(k - 1)] = counts[static_cast<size_t>(k)] >= kPresencePixels;
    return v;
}

namespace {

void write_phrase_file(const std::string& path, const std::vector<std::string>& phrases) {
    std::ofstream f(path);
    check(f.good(), "build_dataset: cannot write '" + path + "'");
    for (const auto& p : phrases) f << p << "\n";
}

std::vector<std::string> read_phrase_file(const std::string& path) {
    return Vocabulary::load(path).phrases();
}

std::string label_bitstring(const std::vector<int>& labels) {
    std::string s;
    for (int v : labels) s.push_back(v ? '1' : '0');
    return s;
}

}  // namespace

DatasetManifest build_dataset(const SceneSpec& spec, int n_train, int n_val,
                              const std::string& out_dir,
                              const std::vector<std::string>& fg_cognition,
                              const std::vector<std::string>& bg_cognition) {
    check_arg(n_train >= 0 && n_val >= 0, "build_dataset: negative split size");
    for (const char* split : {"images/train", "images/val", "masks/train", "masks/val"}) {
        std::error_code ec;
        fs::create_directories(fs::path(out_dir) / split, ec);
        check(!ec, "build_dataset: cannot create '" + out_dir + "/" + split + "'");
    }

    DatasetManifest m;
    m.root = out_dir;
    m.class_phrases = spec.classes;
    m.fg_cognition = fg_cognition;
    m.bg_cognition = bg_cognition;

    char buf[32];
    auto emit = [&](const std::string& split, int count, int index_base) {
        for (int i = 0; i < count; ++i) {
            SceneSample s = generate_scene(spec, index_base + i);
            std::snprintf(buf, sizeof(buf), "%s_%05d", split.c_str(), i);
            ManifestEntry e{buf, split, s.labels.labels, s.scene_seed};
            png::write_rgb(e.image_path(out_dir), s.image);
            png::write_indexed(e.mask_path(out_dir), s.mask);
            m.entries.push_back(std::move(e));
        }
    };
    emit("train", n_train, 0);
    emit("val", n_val, n_train);

    std::ofstream f(out_dir + "/manifest.txt");
    check(f.good(), "build_dataset: cannot write manifest in '" + out_dir + "'");
    for (const auto& e : m.entries)
        f << e.id << "\t" << e.split << "\t" << label_bitstring(e.labels) << "\t" << e.seed
          << "\n";
    write_phrase_file(out_dir + "/classes.txt", spec.classes);
    write_phrase_file(out_dir + "/cognition_fg.txt", fg_cognition);
    write_phrase_file(out_dir + "/cognition_bg.txt", bg_cognition);
    return m;
}

DatasetManifest load_manifest(const std::string& dir) {
    DatasetManifest m;
    m.root = dir;
    m.class_phrases = read_phrase_file(dir + "/classes.txt");
    m.fg_cognition = read_phrase_file(dir + "/cognition_fg.txt");
    m.bg_cognition = read_phrase_file(dir + "/cognition_bg.txt");
    std::ifstream f(dir + "/manifest.txt");
    check(f.good(), "load_manifest: cannot open '" + dir + "/manifest.txt'");
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        ManifestEntry e;
        std::string bits;
        check(bool(ss >> e.id >> e.split >> bits >> e.seed),
              "load_manifest: malformed line '" + line + "'");
        for (char c : bits) e.labels.push_back(c == '1');
        check(e.labels.size() == m.class_phrases.size(),
              "load_manifest: label width mismatch for '" + e.id + "'");
        check(fs::exists(e.image_path(dir)), "load_manifest: missing " + e.image_path(dir));
        check(fs::exists(e.mask_path(dir)), "load_manifest: missing " + e.mask_path(dir));
        m.entries.push_back(std::move(e));
    }
    return m;
}

namespace {

ImageTensor crop_image(const ImageTensor& img, int oy, int ox, int ch, int cw) {
    ImageTensor out = ImageTensor::zeros(ch, cw);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(oy + y, ox + x, c);
    return out;
}

}  // namespace

std::vector<BatchItem> load_batch(const DatasetManifest& manifest, const std::vector<int>& indices,
                                  int crop_h, int crop_w, Rng& rng) {
    std::vector<BatchItem> batch;
    for (int idx : indices) {
        check_arg(idx >= 0 && idx < static_cast<int>(manifest.entries.size()),
                  "load_batch: index out of range");
        const ManifestEntry& e = manifest.entries[static_cast<size_t>(idx)];
        ImageTensor img = png::read_rgb(e.image_path(manifest.root));
        Eigen::MatrixXi mask = png::read_indexed(e.mask_path(manifest.root));
        check_arg(crop_h <= img.h && crop_w <= img.w, "load_batch: crop larger than image");

        BatchItem item;
        bool found = false;
        for (int t = 0; t < 50 && !found; ++t) {
            int oy = rng.uniform_int(0, img.h - crop_h);
            int ox = rng.uniform_int(0, img.w - crop_w);
            ClassLabelVector lv = derive_multilabel(mask.block(oy, ox, crop_h, crop_w),
                                                    manifest.n_classes());
            if (std::none_of(lv.labels.begin(), lv.labels.end(), [](int v) { return v == 1; }))
                continue;  // all-background crop: reject and re-sample
            item.image = crop_image(img, oy, ox, crop_h, crop_w);
            item.labels = std::move(lv);
            found = true;
        }
        if (!found) {
            // Deterministic fallback: center the crop on the first labeled pixel.
            int fy = 0, fx = 0;
            for (Eigen::Index y = 0; y < mask.rows() && !found; ++y)
                for (Eigen::Index x = 0; x < mask.cols(); ++x)
                    if (mask(y, x) > 0) {
                        fy = static_cast<int>(y);
                        fx = static_cast<int>(x);
                        found = true;
                        break;
                    }
            check(found, "load_batch: ground-truth mask of '" + e.id + "' has no labeled pixel");
            int oy = std::clamp(fy - crop_h / 2, 0, img.h - crop_h);
            int ox = std::clamp(fx - crop_w / 2, 0, img.w - crop_w);
            item.image = crop_image(img, oy, ox, crop_h, crop_w);
            item.labels = derive_multilabel(mask.block(oy, ox, crop_h, crop_w),
                                            manifest.n_classes());
            if (std::none_of(item.labels.labels.begin(), item.labels.labels.end(),
                             [](int v) { return v == 1; })) {
                // The region is present but thinner than the presence
                // threshold; mark the dominant class directly.
                item.labels.labels[static_cast<size_t>(mask(fy, fx)) - 1] = 1;
            }
        }
        batch.push_back(std::move(item));
    }
    return batch;
}

BatchItem load_full(const DatasetManifest& manifest, int index) {
    check_arg(index >= 0 && index < static_cast<int>(manifest.entries.size()),
              "load_full: index out of range");
    const ManifestEntry& e = manifest.entries[static_cast<size_t>(index)];
    BatchItem item;
    item.image = png::read_rgb(e.image_path(manifest.root));
    item.labels.labels = e.labels;
    return item;
}

Eigen::MatrixXi load_gt_mask(const DatasetManifest& manifest, int index) {
    check_arg(index >= 0 && index < static_cast<int>(manifest.entries.size()),
              "load_gt_mask: index out of range");
    return png::read_indexed(manifest.entries[static_cast<size_t>(index)].mask_path(manifest.root));
}

}  // namespace ctdn
