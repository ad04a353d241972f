#include "mgreid/model.hpp"

#include <stdexcept>

#include "mgreid/checkpoint.hpp"

namespace mgreid::model {

Model Model::init(const ModelConfig& cfg) {
    if (!cfg.granularities[0])
        throw std::invalid_argument("Model: the global granularity cannot be disabled");
    Model m;
    m.cfg = cfg;
    Rng rng(cfg.init_seed);
    m.txt = text::TextEncoder::init(cfg.prompt_width, cfg.enc.feature_dim, cfg.num_prompts,
                                    rng.child(1).next_u64());
    Rng prng = rng.child(2);
    m.prompts = text::PromptSet::init(cfg.num_ids, cfg.num_prompts, cfg.prompt_width,
                                      cfg.prompt_init_std, prng);
    m.enc = img::ImageEncoder::init(cfg.enc, rng.child(3).next_u64());
    m.neck.init(cfg.enc.feature_dim);
    Rng crng = rng.child(4);
    m.cls.init(cfg.enc.feature_dim, cfg.num_ids, crng, /*bias=*/false);
    return m;
}

void Model::visit(const nn::ParamVisitor& v) {
    prompts.visit("prompts", v);
    txt.visit("text", v);
    enc.visit("enc", v);
    neck.visit("neck", v);
    cls.visit("cls", v);
}

void Model::zero_grads() {
    visit([](const std::string&, nn::Param& p) { p.zero_grad(); });
}

void Model::set_stage_trainable(int stage) {
    if (stage < 0 || stage > 2) throw std::invalid_argument("set_stage_trainable: bad stage");
    visit([stage](const std::string& name, nn::Param& p) {
        bool t = false;
        if (stage == 1) {
            t = name.rfind("prompts.", 0) == 0;
        } else if (stage == 2) {
            if (name.rfind("enc.", 0) == 0)
                t = name.rfind("enc.patch.", 0) != 0 && name != "enc.pos";
            else
                t = name.rfind("neck.", 0) == 0 || name.rfind("cls.", 0) == 0;
        }
        p.trainable = t;
    });
}

std::vector<text::Gran> Model::gran_list() const {
    std::vector<text::Gran> out;
    for (size_t i = 0; i < text::kGrans.size(); ++i)
        if (cfg.granularities[i]) out.push_back(text::kGrans[i]);
    return out;
}

std::array<bool, 3> Model::active_parts() const {
    return {cfg.granularities[1], cfg.granularities[2], cfg.granularities[3]};
}

uint64_t Model::weights_hash() { return weights_hash_where(""); }

uint64_t Model::weights_hash_where(const std::string& name_prefix) {
    uint64_t h = 0xcbf29ce484222325ULL;
    visit([&](const std::string& name, nn::Param& p) {
        if (name.rfind(name_prefix, 0) != 0) return;
        h = nn::hash_bytes(name.data(), name.size(), h);
        h = nn::hash_param(p, h);
    });
    return h;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, Model& m, const nn::Adam* opt, int stage,
                     int epoch) {
    ckpt::Writer w;
    w.put_scalar("meta.version", 1.0);
    w.put_scalar("meta.stage", stage);
    w.put_scalar("meta.epoch", epoch);
    m.visit([&](const std::string& name, nn::Param& p) { w.put("p." + name, p.w); });
    w.put("buf.neck.mean", m.neck.running_mean);
    w.put("buf.neck.var", m.neck.running_var);
    if (opt) {
        for (const auto& [name, s] : opt->slots()) {
            w.put("opt.m." + name, s.m);
            w.put("opt.v." + name, s.v);
            w.put_scalar("opt.t." + name, static_cast<double>(s.t));
        }
    }
    w.save(path);
}

CheckpointInfo load_checkpoint(const std::string& path, Model& m, nn::Adam* opt) {
    ckpt::Reader r(path);
    if (r.scalar("meta.version") != 1.0)
        throw std::runtime_error("load_checkpoint: unsupported version");
    CheckpointInfo info;
    info.stage = static_cast<int>(r.scalar("meta.stage"));
    info.epoch = static_cast<int>(r.scalar("meta.epoch"));
    m.visit([&](const std::string& name, nn::Param& p) {
        p.w = r.get("p." + name, p.w.rows, p.w.cols);
    });
    m.neck.running_mean = r.get("buf.neck.mean", 1, m.neck.running_mean.cols);
    m.neck.running_var = r.get("buf.neck.var", 1, m.neck.running_var.cols);
    if (opt) {
        opt->zero_state();
        for (const auto& name : r.names()) {
            if (name.rfind("opt.m.", 0) != 0) continue;
            const std::string pname = name.substr(6);
            nn::AdamState s;
            s.m = r.get("opt.m." + pname);
            s.v = r.get("opt.v." + pname);
            s.t = static_cast<int64_t>(r.scalar("opt.t." + pname));
            opt->slots().emplace(pname, std::move(s));
        }
    }
    return info;
}

}  // namespace mgreid::model
