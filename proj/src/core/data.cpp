#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <set>
#include <sstream>

#include "png_io.hpp"

namespace fs = std::filesystem;

namespace salfuse {

namespace {

constexpr double kRgbGrid = 255.0;
constexpr double kDepthGrid = 65535.0;

double quantize(double v, double grid) {
    v = std::min(1.0, std::max(0.0, v));
    return std::round(v * grid) / grid;
}

struct ShapeSpec {
    bool is_circle = false;
    double cx = 0, cy = 0;
    double half_w = 0, half_h = 0;  // radius for circles

    bool covers(int x, int y) const {
        const double dx = x + 0.5 - cx;
        const double dy = y + 0.5 - cy;
        if (is_circle) {
            return dx * dx + dy * dy <= half_w * half_w;
        }
        return std::abs(dx) <= half_w && std::abs(dy) <= half_h;
    }
};

enum class ObjectRole { target, color_distractor, depth_distractor };

struct SceneObject {
    ShapeSpec shape;
    ObjectRole role = ObjectRole::target;
};

// Reference palette of the generator; the audit discriminators below use the
// same constants. Depth stores distance, so salient objects sit at LOW values
// (near the sensor) against a far background.
constexpr double kColorCueThreshold = 0.25;  // r - max(g,b) above this = color cue
constexpr double kDepthCueThreshold = 0.45;  // normalized depth below this = depth cue

double sample_noise(Rng& rng, double amp) { return rng.uniform(-amp, amp); }

ShapeSpec place_shape(Rng& rng, int size, int quadrant) {
    const int half_canvas = size / 2;
    const double lo = std::max(2.0, size / 8.0);
    const double hi = std::max(3.0, size / 5.0);
    ShapeSpec s;
    s.is_circle = rng.uniform() < 0.5;
    s.half_w = rng.uniform(lo, hi);
    s.half_h = s.is_circle ? s.half_w : rng.uniform(lo, hi);
    const double margin_x = s.half_w + 1.0;
    const double margin_y = (s.is_circle ? s.half_w : s.half_h) + 1.0;
    const int qx = quadrant % 2;
    const int qy = quadrant / 2;
    const double x0 = qx * half_canvas;
    const double y0 = qy * half_canvas;
    s.cx = x0 + rng.uniform(margin_x, half_canvas - margin_x);
    s.cy = y0 + rng.uniform(margin_y, half_canvas - margin_y);
    return s;
}

}  // namespace

RgbdSample generate_synthetic_scene(std::uint64_t seed, const SceneConfig& cfg) {
    if (cfg.size < 8) {
        throw Error::config("scene size must be >= 8, got " + std::to_string(cfg.size));
    }
    if (cfg.object_count < 0 || cfg.object_count > 3) {
        throw Error::config("object count must be in [0, 3]");
    }
    const int size = cfg.size;
    Rng rng(seed);

    // Background statistics; camouflaged regions reuse exactly these. The
    // background sits far from the sensor (large distance values).
    const double bg_r = rng.uniform(0.22, 0.34);
    const double bg_g = rng.uniform(0.46, 0.60);
    const double bg_b = rng.uniform(0.22, 0.34);
    const double bg_d = rng.uniform(0.72, 0.88);

    // Object palette; depth-cued objects are close to the sensor.
    const double target_r = rng.uniform(0.72, 0.86);
    const double target_gb = rng.uniform(0.08, 0.18);
    const double blue_b = rng.uniform(0.62, 0.78);
    const double blue_rg = rng.uniform(0.08, 0.18);
    const double near_d = rng.uniform(0.10, 0.24);

    // Non-overlapping placement: distinct canvas quadrants, shuffled.
    int quadrants[4] = {0, 1, 2, 3};
    for (int i = 3; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
        std::swap(quadrants[i], quadrants[j]);
    }

    std::vector<SceneObject> objects;
    for (int i = 0; i < cfg.object_count; ++i) {
        SceneObject obj;
        obj.shape = place_shape(rng, size, quadrants[i]);
        obj.role = i == 0 ? ObjectRole::target
                          : (i == 1 ? ObjectRole::color_distractor : ObjectRole::depth_distractor);
        objects.push_back(obj);
    }

    Tensor rgb = Tensor::zeros(Shape{1, 3, size, size});
    Tensor depth = Tensor::zeros(Shape{1, 1, size, size});
    Tensor gt = Tensor::zeros(Shape{1, 1, size, size});
    double* rv = rgb.values().data();
    double* gv = rgb.values().data() + static_cast<std::size_t>(size) * size;
    double* bv = rgb.values().data() + 2 * static_cast<std::size_t>(size) * size;
    double* dv = depth.values().data();
    double* yv = gt.values().data();

    const bool flat_depth = cfg.mode == CueMode::rgb_only;

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * size + x;
            const SceneObject* hit = nullptr;
            for (const SceneObject& obj : objects) {
                if (obj.shape.covers(x, y)) {
                    hit = &obj;
                    break;
                }
            }

            double r = bg_r + sample_noise(rng, 0.06);
            double g = bg_g + sample_noise(rng, 0.06);
            double b = bg_b + sample_noise(rng, 0.06);
            double d = flat_depth ? 0.5 : bg_d + sample_noise(rng, 0.03);

            if (hit != nullptr) {
                const bool color_cue =
                    cfg.mode == CueMode::rgb_only
                        ? hit->role == ObjectRole::target
                        : (cfg.mode == CueMode::joint &&
                           (hit->role == ObjectRole::target ||
                            hit->role == ObjectRole::color_distractor));
                const bool depth_cue =
                    cfg.mode == CueMode::depth_only
                        ? hit->role == ObjectRole::target
                        : (cfg.mode == CueMode::joint &&
                           (hit->role == ObjectRole::target ||
                            hit->role == ObjectRole::depth_distractor));

                if (color_cue) {
                    r = target_r + sample_noise(rng, 0.03);
                    g = target_gb + sample_noise(rng, 0.03);
                    b = target_gb + sample_noise(rng, 0.03);
                } else if (cfg.mode == CueMode::rgb_only ||
                           (cfg.mode == CueMode::joint &&
                            hit->role == ObjectRole::depth_distractor)) {
                    // visible but non-salient color
                    r = blue_rg + sample_noise(rng, 0.03);
                    g = blue_rg + sample_noise(rng, 0.03);
                    b = blue_b + sample_noise(rng, 0.03);
                }
                // otherwise camouflaged: keep the background color samples

                if (depth_cue && !flat_depth) {
                    d = near_d + sample_noise(rng, 0.02);
                }
                if (hit->role == ObjectRole::target) yv[i] = 1.0;
            }

            rv[i] = r;
            gv[i] = g;
            bv[i] = b;
            dv[i] = d;
        }
    }

    // Normalize depth to span exactly [0,1] (min-max); flat maps stay at 0.5.
    if (!flat_depth) {
        double lo = dv[0], hi = dv[0];
        for (int i = 1; i < size * size; ++i) {
            lo = std::min(lo, dv[i]);
            hi = std::max(hi, dv[i]);
        }
        if (hi > lo) {
            for (int i = 0; i < size * size; ++i) dv[i] = (dv[i] - lo) / (hi - lo);
        } else {
            for (int i = 0; i < size * size; ++i) dv[i] = 0.5;
        }
    }

    // Snap to the storage grids so disk round trips are bit-exact.
    for (double* ch : {rv, gv, bv}) {
        for (int i = 0; i < size * size; ++i) ch[i] = quantize(ch[i], kRgbGrid);
    }
    for (int i = 0; i < size * size; ++i) dv[i] = quantize(dv[i], kDepthGrid);

    RgbdSample sample;
    sample.rgb = rgb;
    sample.depth = depth;
    sample.gt = gt;
    sample.meta.seed = seed;
    std::ostringstream desc;
    desc << cue_mode_to_string(cfg.mode) << ":objects=" << cfg.object_count
         << ":size=" << size;
    for (const SceneObject& obj : objects) {
        desc << ":" << (obj.shape.is_circle ? "circle" : "rect") << "@"
             << static_cast<int>(obj.shape.cx) << "," << static_cast<int>(obj.shape.cy);
    }
    sample.meta.descriptor = desc.str();
    return sample;
}

Dataset generate_dataset(std::uint64_t base_seed, const SceneConfig& cfg, int count,
                         const std::string& split) {
    Dataset ds;
    ds.split = split;
    ds.labeled = true;
    ds.samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::uint64_t sample_seed =
            Rng::splitmix64(base_seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(i) + 1)));
        RgbdSample s = generate_synthetic_scene(sample_seed, cfg);
        std::ostringstream id;
        id << std::setw(6) << std::setfill('0') << i;
        s.id = id.str();
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

Tensor encode_depth(const Tensor& depth, const std::string& sample_id) {
    const Shape s = depth.shape();
    if (s.n != 1 || s.c != 1) {
        throw Error::usage("encode_depth expects a 1x1xHxW map, got " + s.str());
    }
    const double* dv = depth.values().data();
    const int h = s.h, w = s.w;
    for (int i = 0; i < h * w; ++i) {
        if (!std::isfinite(dv[i])) {
            throw Error::data("non-finite depth value in sample " + sample_id);
        }
    }

    Tensor out = Tensor::zeros(Shape{1, 3, h, w});
    double* c0 = out.values().data();
    double* c1 = c0 + static_cast<std::size_t>(h) * w;
    double* c2 = c1 + static_cast<std::size_t>(h) * w;
    for (int i = 0; i < h * w; ++i) {
        c0[i] = dv[i];
        c1[i] = 1.0 - dv[i];
    }

    // Gradient magnitude: central differences inside, one-sided at the edges,
    // rescaled by the per-image maximum.
    double max_mag = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double gx = 0.0, gy = 0.0;
            if (w > 1) {
                if (x == 0) {
                    gx = dv[y * w + 1] - dv[y * w];
                } else if (x == w - 1) {
                    gx = dv[y * w + x] - dv[y * w + x - 1];
                } else {
                    gx = 0.5 * (dv[y * w + x + 1] - dv[y * w + x - 1]);
                }
            }
            if (h > 1) {
                if (y == 0) {
                    gy = dv[w + x] - dv[x];
                } else if (y == h - 1) {
                    gy = dv[y * w + x] - dv[(y - 1) * w + x];
                } else {
                    gy = 0.5 * (dv[(y + 1) * w + x] - dv[(y - 1) * w + x]);
                }
            }
            const double mag = std::sqrt(gx * gx + gy * gy);
            c2[y * w + x] = mag;
            max_mag = std::max(max_mag, mag);
        }
    }
    if (max_mag > 0.0) {
        for (int i = 0; i < h * w; ++i) c2[i] /= max_mag;
    }
    return out;
}

// ---------------------------------------------------------------------------
// disk layout
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> list_ids(const fs::path& dir) {
    std::vector<std::string> ids;
    if (!fs::exists(dir)) return ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            ids.push_back(entry.path().stem().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace

Dataset load_dataset(const std::string& root) {
    const fs::path base(root);
    if (!fs::exists(base / "rgb")) {
        throw Error::data("dataset root " + root + " has no rgb/ directory");
    }
    const std::vector<std::string> rgb_ids = list_ids(base / "rgb");
    const std::vector<std::string> depth_ids = list_ids(base / "depth");

    std::set<std::string> rgb_set(rgb_ids.begin(), rgb_ids.end());
    std::set<std::string> depth_set(depth_ids.begin(), depth_ids.end());
    std::ostringstream orphans;
    for (const auto& id : rgb_ids) {
        if (!depth_set.count(id)) orphans << " rgb-only:" << id;
    }
    for (const auto& id : depth_ids) {
        if (!rgb_set.count(id)) orphans << " depth-only:" << id;
    }
    if (!orphans.str().empty()) {
        throw Error::data("unpaired dataset ids:" + orphans.str());
    }

    Dataset ds;
    ds.labeled = !rgb_ids.empty();
    for (const std::string& id : rgb_ids) {
        RgbdSample sample;
        sample.id = id;

        const PngImage rgb = read_png((base / "rgb" / (id + ".png")).string());
        if (rgb.channels != 3) {
            throw Error::data("rgb image must have 3 channels: " +
                              (base / "rgb" / (id + ".png")).string());
        }
        const int h = rgb.height, w = rgb.width;
        const double rgb_scale = rgb.bit_depth == 16 ? kDepthGrid : kRgbGrid;
        sample.rgb = Tensor::zeros(Shape{1, 3, h, w});
        for (int c = 0; c < 3; ++c) {
            double* dst = sample.rgb.values().data() + static_cast<std::size_t>(c) * h * w;
            for (int i = 0; i < h * w; ++i) {
                dst[i] = rgb.pixels[static_cast<std::size_t>(i) * 3 + c] / rgb_scale;
            }
        }

        const PngImage dep = read_png((base / "depth" / (id + ".png")).string());
        if (dep.channels != 1) {
            throw Error::data("depth image must be grayscale: " +
                              (base / "depth" / (id + ".png")).string());
        }
        if (dep.height != h || dep.width != w) {
            throw Error::data("depth extent mismatch for id " + id);
        }
        sample.depth = Tensor::zeros(Shape{1, 1, h, w});
        {
            std::uint16_t lo = dep.pixels[0], hi = dep.pixels[0];
            for (std::uint16_t v : dep.pixels) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            double* dst = sample.depth.values().data();
            if (hi > lo) {
                const double span = static_cast<double>(hi) - lo;
                for (int i = 0; i < h * w; ++i) dst[i] = (dep.pixels[static_cast<std::size_t>(i)] - lo) / span;
            } else {
                for (int i = 0; i < h * w; ++i) dst[i] = 0.5;  // constant maps normalize to 0.5
            }
        }

        const fs::path gt_path = base / "gt" / (id + ".png");
        if (fs::exists(gt_path)) {
            const PngImage gt = read_png(gt_path.string());
            if (gt.channels != 1) {
                throw Error::data("gt mask must be grayscale: " + gt_path.string());
            }
            if (gt.height != h || gt.width != w) {
                throw Error::data("gt extent mismatch for id " + id);
            }
            const std::uint16_t half = gt.bit_depth == 16 ? 32767 : 127;
            sample.gt = Tensor::zeros(Shape{1, 1, h, w});
            double* dst = sample.gt.values().data();
            for (int i = 0; i < h * w; ++i) {
                dst[i] = gt.pixels[static_cast<std::size_t>(i)] > half ? 1.0 : 0.0;
            }
        } else {
            ds.labeled = false;
        }
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

void save_dataset(const Dataset& dataset, const std::string& root) {
    const fs::path base(root);
    std::error_code ec;
    fs::create_directories(base / "rgb", ec);
    fs::create_directories(base / "depth", ec);
    bool any_gt = false;
    for (const auto& s : dataset.samples) {
        if (s.has_gt()) any_gt = true;
    }
    if (any_gt) fs::create_directories(base / "gt", ec);

    for (const RgbdSample& s : dataset.samples) {
        const Shape shape = s.rgb.shape();
        const int h = shape.h, w = shape.w;

        std::vector<std::uint8_t> rgb8(static_cast<std::size_t>(h) * w * 3);
        const double* rv = s.rgb.values().data();
        for (int i = 0; i < h * w; ++i) {
            for (int c = 0; c < 3; ++c) {
                const double v = rv[static_cast<std::size_t>(c) * h * w + i];
                rgb8[static_cast<std::size_t>(i) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(std::min(1.0, std::max(0.0, v)) * kRgbGrid));
            }
        }
        write_png_rgb8((base / "rgb" / (s.id + ".png")).string(), w, h, rgb8);

        std::vector<std::uint16_t> d16(static_cast<std::size_t>(h) * w);
        const double* dv = s.depth.values().data();
        for (int i = 0; i < h * w; ++i) {
            d16[static_cast<std::size_t>(i)] =
                static_cast<std::uint16_t>(std::lround(std::min(1.0, std::max(0.0, dv[i])) * kDepthGrid));
        }
        write_png_gray16((base / "depth" / (s.id + ".png")).string(), w, h, d16);

        if (s.has_gt()) {
            std::vector<std::uint8_t> g8(static_cast<std::size_t>(h) * w);
            const double* gv = s.gt.values().data();
            for (int i = 0; i < h * w; ++i) {
                g8[static_cast<std::size_t>(i)] = gv[i] > 0.5 ? 255 : 0;
            }
            write_png_gray8((base / "gt" / (s.id + ".png")).string(), w, h, g8);
        }
    }
}

// ---------------------------------------------------------------------------
// generator audit discriminators
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> color_cue_mask(const RgbdSample& sample) {
    const Shape s = sample.rgb.shape();
    const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
    const double* r = sample.rgb.values().data();
    const double* g = r + hw;
    const double* b = g + hw;
    std::vector<std::uint8_t> mask(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        mask[i] = (r[i] - std::max(g[i], b[i])) > kColorCueThreshold ? 1 : 0;
    }
    return mask;
}

std::vector<std::uint8_t> depth_cue_mask(const RgbdSample& sample) {
    const Shape s = sample.depth.shape();
    const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
    const double* d = sample.depth.values().data();
    std::vector<std::uint8_t> mask(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        mask[i] = d[i] < kDepthCueThreshold ? 1 : 0;
    }
    return mask;
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    if (a.size() != b.size()) throw Error::usage("mask_iou: size mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool pa = a[i] != 0, pb = b[i] != 0;
        if (pa && pb) ++inter;
        if (pa || pb) ++uni;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace salfuse
