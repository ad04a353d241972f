#include "mgreid/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mgreid::synth {

namespace {

constexpr double kBgCeil = 0.45;   // backgrounds stay below this
constexpr double kFgFloor = 0.52;  // part pixels stay above this

struct IdParams {
    // cumulative vertical fractions
    double top, head_h, gap1, torso_h, gap2, legs_h;
    double head_w, torso_w, legs_w;
    std::array<std::array<double, 3>, kNumParts> base;
    std::array<std::array<double, 3>, kNumParts> accent;
};

IdParams derive_id_params(const IdSpec& id) {
    // Torso colors come from their own small pool, so whole-image statistics
    // narrow a query down to a color bucket. Head and leg colors are a
    // permutation of two distinct entries of a shared pool, and those two
    // parts cover comparable areas, so separating identities inside a bucket
    // requires knowing which part carries which color — spatially bound
    // appearance that pooled whole-image features lose under pose jitter.
    Rng rp = Rng(id.dataset_seed).child(0xC17u);
    std::array<std::array<double, 3>, 4> pool{};
    std::array<std::array<double, 3>, 5> pool_torso{};
    for (auto& col : pool)
        for (int c = 0; c < 3; ++c) col[c] = rp.uniform(0.58, 0.95);
    for (auto& col : pool_torso)
        for (int c = 0; c < 3; ++c) col[c] = rp.uniform(0.58, 0.95);

    Rng r = Rng(id.dataset_seed).child(0x1Du).child(static_cast<uint64_t>(id.id_label));
    IdParams p{};
    p.top = r.uniform(0.02, 0.05);
    p.head_h = r.uniform(0.16, 0.22);
    p.gap1 = r.uniform(0.01, 0.02);
    p.torso_h = r.uniform(0.28, 0.34);
    p.gap2 = r.uniform(0.01, 0.02);
    p.legs_h = r.uniform(0.26, 0.32);
    p.head_w = r.uniform(0.42, 0.55);
    p.torso_w = r.uniform(0.60, 0.80);
    p.legs_w = r.uniform(0.50, 0.70);
    int a = r.uniform_int(4), b = a;
    while (b == a) b = r.uniform_int(4);
    p.base[0] = pool[a];
    p.base[1] = pool_torso[r.uniform_int(5)];
    p.base[2] = pool[b];
    for (int part = 0; part < kNumParts; ++part) p.accent[part] = pool[r.uniform_int(4)];
    return p;
}

struct DomainParams {
    std::array<double, 3> bg_base;
    std::array<double, 3> bg_grad;
    double brightness;
    double noise_sigma;
};

DomainParams derive_domain_params(const DomainStyle& style) {
    // Each (domain, camera) pair is a distinct scene: the domain picks the
    // base colors, the camera shifts them. Query and gallery backgrounds
    // therefore never match, and the held-out domain's scenes are unseen
    // during training. Whole-image features inherit that shift; part pixels
    // do not depend on the scene at all.
    Rng r = Rng(style.dataset_seed).child(0xD0u).child(static_cast<uint64_t>(style.domain_id));
    DomainParams d{};
    for (int c = 0; c < 3; ++c) d.bg_base[c] = r.uniform(0.05, 0.30);
    for (int c = 0; c < 3; ++c) d.bg_grad[c] = r.uniform(-0.10, 0.10);
    d.brightness = r.uniform(0.70, 1.00);
    d.noise_sigma = r.uniform(0.01, 0.03);
    Rng rc = r.child(static_cast<uint64_t>(style.camera_id));
    for (int c = 0; c < 3; ++c)
        d.bg_base[c] = std::clamp(d.bg_base[c] + rc.uniform(-0.10, 0.10), 0.03, 0.38);
    for (int c = 0; c < 3; ++c) d.bg_grad[c] += rc.uniform(-0.05, 0.05);
    d.brightness = std::clamp(d.brightness + rc.uniform(-0.08, 0.08), 0.60, 1.00);
    return d;
}

int clampi(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

}  // namespace

RenderResult render_identity(const IdSpec& id, const DomainStyle& style,
                             int height, int width, uint64_t sample_seed,
                             RenderTrace* trace) {
    if (height < 32 || width < 16)
        throw std::invalid_argument("render_identity: image too small");
    const IdParams ip = derive_id_params(id);
    const DomainParams dp = derive_domain_params(style);
    Rng rs(sample_seed);

    // Per-sample pose jitter: the figure slides and scales between samples
    // (boxes stay a pure function of (id, sample_seed)), so any fixed spatial
    // prior misaligns while the emitted boxes remain exact.
    const double cx_frac = 0.5 + rs.uniform(-0.08, 0.08);
    const double scale = rs.uniform(0.85, 1.0);
    const double body_h =
        scale * (ip.head_h + ip.gap1 + ip.torso_h + ip.gap2 + ip.legs_h);
    const double slack = std::max(0.0, 1.0 - ip.top - body_h - 0.02);
    const double t0 = ip.top + rs.uniform(0.0, slack);

    // Vertical boundaries from cumulative fractions, rounded once each so the
    // stack cannot overflow the frame.
    auto yb = [&](double f) { return clampi(static_cast<int>(std::lround(f * height)), 0, height); };
    const int y_head0 = yb(t0);
    const int y_head1 = yb(t0 + scale * ip.head_h);
    const int y_torso0 = yb(t0 + scale * (ip.head_h + ip.gap1));
    const int y_torso1 = yb(t0 + scale * (ip.head_h + ip.gap1 + ip.torso_h));
    const int y_legs0 = yb(t0 + scale * (ip.head_h + ip.gap1 + ip.torso_h + ip.gap2));
    const int y_legs1 =
        yb(t0 + scale * (ip.head_h + ip.gap1 + ip.torso_h + ip.gap2 + ip.legs_h));

    auto xb = [&](double w_frac) {
        const double half = scale * w_frac * width / 2.0;
        int x0 = clampi(static_cast<int>(std::lround(cx_frac * width - half)), 0, width - 2);
        int x1 = clampi(static_cast<int>(std::lround(cx_frac * width + half)), x0 + 1, width);
        return std::pair<int, int>{x0, x1};
    };
    const auto [hx0, hx1] = xb(ip.head_w);
    const auto [tx0, tx1] = xb(ip.torso_w);
    const auto [lx0, lx1] = xb(ip.legs_w);

    RenderResult out;
    out.boxes[0] = PartBox{Part::head, hx0, y_head0, hx1, y_head1};
    out.boxes[1] = PartBox{Part::upper, tx0, y_torso0, tx1, y_torso1};
    out.boxes[2] = PartBox{Part::legs, lx0, y_legs0, lx1, y_legs1};
    for (auto& b : out.boxes) b.validate(width, height);

    Image& img = out.image;
    img = Image(height, width);
    if (trace) {
        trace->height = height;
        trace->width = width;
        for (auto& m : trace->painted) m.assign(static_cast<size_t>(height) * width, 0);
    }

    // Background: scene base color + vertical gradient + per-sample noise,
    // kept strictly below the foreground range.
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = dp.brightness * (dp.bg_base[c] + dp.bg_grad[c] * (double(y) / height));
                v += rs.normal(0.0, dp.noise_sigma);
                img.at(y, x, c) = std::clamp(v, 0.0, kBgCeil);
            }

    // Per-sample clutter rectangles anywhere in the background range: the
    // scene never repeats exactly between shots, so whole-image statistics
    // carry no identity signal. Parts are painted afterwards and fully
    // overwrite any clutter inside their boxes.
    {
        const int n_clutter = 2 + rs.uniform_int(3);
        for (int i = 0; i < n_clutter; ++i) {
            const int cw = 2 + rs.uniform_int(std::max(1, width / 4));
            const int ch = 2 + rs.uniform_int(std::max(1, height / 6));
            const int cx0 = rs.uniform_int(std::max(1, width - cw));
            const int cy0 = rs.uniform_int(std::max(1, height - ch));
            std::array<double, 3> col{};
            for (int c = 0; c < 3; ++c) col[c] = rs.uniform(0.03, kBgCeil);
            for (int y = cy0; y < std::min(height, cy0 + ch); ++y)
                for (int x = cx0; x < std::min(width, cx0 + cw); ++x)
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
        }
    }

    auto paint = [&](int part, int y, int x, const std::array<double, 3>& col) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(col[c], kFgFloor, 1.0);
        if (trace) trace->painted[part][static_cast<size_t>(y) * width + x] = 1;
    };

    // Each part fills its box completely with a base color, then draws an
    // accent figure strictly inside it, so painted coverage == box.
    // Head: ellipse.
    {
        const PartBox& b = out.boxes[0];
        const double ecx = (b.x_min + b.x_max) / 2.0, ecy = (b.y_min + b.y_max) / 2.0;
        const double rx = std::max(0.5, 0.40 * b.width()), ry = std::max(0.5, 0.40 * b.height());
        for (int y = b.y_min; y < b.y_max; ++y)
            for (int x = b.x_min; x < b.x_max; ++x) {
                double dx = (x + 0.5 - ecx) / rx, dy = (y + 0.5 - ecy) / ry;
                paint(0, y, x, dx * dx + dy * dy <= 1.0 ? ip.accent[0] : ip.base[0]);
            }
    }
    // Torso: horizontal stripes.
    {
        const PartBox& b = out.boxes[1];
        for (int y = b.y_min; y < b.y_max; ++y)
            for (int x = b.x_min; x < b.x_max; ++x)
                paint(1, y, x, ((y - b.y_min) / 2) % 2 == 0 ? ip.base[1] : ip.accent[1]);
    }
    // Legs: two vertical accent bars.
    {
        const PartBox& b = out.boxes[2];
        const int w = b.width();
        const int bar_w = std::max(1, w / 5);
        const int b1 = b.x_min + w / 6, b2 = b.x_max - w / 6 - bar_w;
        for (int y = b.y_min; y < b.y_max; ++y)
            for (int x = b.x_min; x < b.x_max; ++x) {
                bool bar = (x >= b1 && x < b1 + bar_w) || (x >= b2 && x < b2 + bar_w);
                paint(2, y, x, bar ? ip.accent[2] : ip.base[2]);
            }
    }

    img.quantize8();
    return out;
}

uint64_t sample_seed_for(const GenConfig& cfg, int id_label, int sample_index) {
    return Rng(cfg.seed)
        .child(0x5Au)
        .child(static_cast<uint64_t>(id_label))
        .child(static_cast<uint64_t>(sample_index))
        .next_u64();
}

std::vector<int> Manifest::split_indices(const std::string& split) const {
    std::vector<int> out;
    for (const auto& s : samples)
        if (s.split == split) out.push_back(s.sample_id);
    return out;
}

Dataset generate_dataset(const GenConfig& cfg) {
    if (cfg.num_ids < 2) throw std::invalid_argument("generate_dataset: need >= 2 ids");
    if (cfg.num_domains < 2) throw std::invalid_argument("generate_dataset: need >= 2 domains");
    if (cfg.num_cameras < 2)
        throw std::invalid_argument("generate_dataset: need >= 2 cameras for cross-camera eval");
    if (cfg.image_height % cfg.patch_size != 0 || cfg.image_width % cfg.patch_size != 0)
        throw std::invalid_argument("generate_dataset: image dims must be divisible by patch size");

    if (cfg.queries_per_id < 1)
        throw std::invalid_argument("generate_dataset: queries_per_id must be >= 1");

    const int held_out = cfg.num_domains - 1;
    // Domain of sample s of an id: round-robin. Eval needs held-out samples
    // for the queries plus >= 1 gallery entry, and >= 1 training sample.
    int eval_count = 0, train_count = 0;
    for (int s = 0; s < cfg.samples_per_id; ++s)
        (s % cfg.num_domains == held_out ? eval_count : train_count)++;
    if (eval_count < cfg.queries_per_id + 1)
        throw std::invalid_argument(
            "generate_dataset: not enough held-out samples per id for the queries and a "
            "cross-camera gallery match");
    if (train_count < 1)
        throw std::invalid_argument("generate_dataset: no training samples per id");

    Dataset ds;
    ds.manifest.config = cfg;
    for (int id = 0; id < cfg.num_ids; ++id) {
        int eval_seen = 0;
        for (int s = 0; s < cfg.samples_per_id; ++s) {
            SampleMeta meta;
            meta.sample_id = static_cast<int>(ds.manifest.samples.size());
            meta.id_label = id;
            meta.domain_id = s % cfg.num_domains;
            if (meta.domain_id == held_out) {
                if (eval_seen < cfg.queries_per_id) {
                    meta.split = "query";
                    meta.camera_id = 0;
                } else {
                    // First gallery sample lands on camera 1, guaranteeing a
                    // cross-camera match; later ones cycle through all cameras
                    // so the same-camera exclusion rule actually triggers.
                    meta.split = "gallery";
                    meta.camera_id = (1 + eval_seen - cfg.queries_per_id) % cfg.num_cameras;
                }
                ++eval_seen;
            } else {
                meta.split = "train";
                meta.camera_id = s % cfg.num_cameras;
            }
            RenderResult rr = render_identity(
                IdSpec{id, cfg.seed}, DomainStyle{meta.domain_id, meta.camera_id, cfg.seed},
                cfg.image_height, cfg.image_width, sample_seed_for(cfg, id, s));
            meta.oracle_boxes = rr.boxes;
            ds.manifest.samples.push_back(meta);
            ds.images.push_back(std::move(rr.image));
        }
    }
    return ds;
}

PartBox corrupt_box(const PartBox& box, Corruption mode, int img_w, int img_h, Rng& rng) {
    PartBox out = box;
    if (mode == Corruption::oversize) {
        const int ymargin = std::max(1, static_cast<int>(std::floor(0.05 * img_h)));
        const int xmargin = std::max(1, static_cast<int>(std::floor(0.10 * img_w)));
        out.y_min = rng.uniform_int(ymargin + 1);
        out.y_max = img_h - rng.uniform_int(ymargin + 1);
        out.x_min = rng.uniform_int(xmargin + 1);
        out.x_max = img_w - rng.uniform_int(xmargin + 1);
    } else {
        const int hmax = std::max(1, static_cast<int>(std::floor(0.05 * img_h)));
        const int h = 1 + rng.uniform_int(hmax);
        const double cy = (box.y_min + box.y_max) / 2.0;
        int y0 = clampi(static_cast<int>(std::lround(cy - h / 2.0)), 0, img_h - h);
        out.y_min = y0;
        out.y_max = y0 + h;
    }
    out.calibrated = false;
    out.validate(img_w, img_h);
    return out;
}

// ---------------------------------------------------------------------------
// Persistence.

namespace {

json box_to_json(const PartBox& b) {
    return json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

PartBox box_from_json(Part part, const json& j) {
    if (!j.is_array() || j.size() != 4) throw std::runtime_error("bad box json");
    return PartBox{part, j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    const GenConfig& c = ds.manifest.config;
    json j;
    j["config"] = {{"num_ids", c.num_ids},
                   {"samples_per_id", c.samples_per_id},
                   {"queries_per_id", c.queries_per_id},
                   {"num_cameras", c.num_cameras},
                   {"num_domains", c.num_domains},
                   {"image_height", c.image_height},
                   {"image_width", c.image_width},
                   {"patch_size", c.patch_size},
                   {"seed", c.seed},
                   {"oversize_rate", c.oversize_rate},
                   {"oversplit_rate", c.oversplit_rate}};
    j["samples"] = json::array();
    for (const auto& s : ds.manifest.samples) {
        json boxes;
        for (const auto& b : s.oracle_boxes) boxes[part_name(b.part)] = box_to_json(b);
        j["samples"].push_back({{"sample_id", s.sample_id},
                                {"id_label", s.id_label},
                                {"camera_id", s.camera_id},
                                {"domain_id", s.domain_id},
                                {"split", s.split},
                                {"oracle_boxes", boxes}});
        write_png_rgb((fs::path(dir) / "images" / (std::to_string(s.sample_id) + ".png")).string(),
                      ds.images[s.sample_id]);
    }
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error("cannot write manifest in " + dir);
    f << j.dump(1) << "\n";
}

Manifest load_manifest(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error("cannot open manifest in " + dir);
    json j = json::parse(f);
    Manifest m;
    const json& c = j.at("config");
    m.config.num_ids = c.at("num_ids").get<int>();
    m.config.samples_per_id = c.at("samples_per_id").get<int>();
    m.config.queries_per_id = c.at("queries_per_id").get<int>();
    m.config.num_cameras = c.at("num_cameras").get<int>();
    m.config.num_domains = c.at("num_domains").get<int>();
    m.config.image_height = c.at("image_height").get<int>();
    m.config.image_width = c.at("image_width").get<int>();
    m.config.patch_size = c.at("patch_size").get<int>();
    m.config.seed = c.at("seed").get<uint64_t>();
    m.config.oversize_rate = c.at("oversize_rate").get<double>();
    m.config.oversplit_rate = c.at("oversplit_rate").get<double>();
    for (const auto& js : j.at("samples")) {
        SampleMeta s;
        s.sample_id = js.at("sample_id").get<int>();
        s.id_label = js.at("id_label").get<int>();
        s.camera_id = js.at("camera_id").get<int>();
        s.domain_id = js.at("domain_id").get<int>();
        s.split = js.at("split").get<std::string>();
        for (Part p : kParts)
            s.oracle_boxes[static_cast<int>(p)] =
                box_from_json(p, js.at("oracle_boxes").at(part_name(p)));
        m.samples.push_back(std::move(s));
    }
    return m;
}

Image load_sample_image(const std::string& dir, int sample_id) {
    return read_png_rgb((fs::path(dir) / "images" / (std::to_string(sample_id) + ".png")).string());
}

std::vector<Image> load_all_images(const std::string& dir, const Manifest& m) {
    std::vector<Image> imgs;
    imgs.reserve(m.samples.size());
    for (const auto& s : m.samples) {
        if (s.sample_id != static_cast<int>(imgs.size()))
            throw std::runtime_error("manifest sample ids are not dense");
        imgs.push_back(load_sample_image(dir, s.sample_id));
    }
    return imgs;
}

}  // namespace mgreid::synth
