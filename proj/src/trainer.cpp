#include "mgreid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mgreid::train {

double cosine_lr(double base, int epoch, int total_epochs) {
    if (epoch < 0 || epoch >= total_epochs) throw std::invalid_argument("cosine_lr: bad epoch");
    return base * 0.5 * (1.0 + std::cos(M_PI * epoch / total_epochs));
}

double step_warmup_lr(double base, int64_t step, int64_t total_steps, int64_t steps_per_epoch,
                      int total_epochs, double warmup_frac) {
    if (step < 0 || step >= total_steps) throw std::invalid_argument("step_warmup_lr: bad step");
    const int64_t warmup = std::max<int64_t>(1, std::llround(warmup_frac * total_steps));
    if (step < warmup) return base * static_cast<double>(step + 1) / warmup;
    const int64_t epoch = step / steps_per_epoch;
    if (epoch >= total_epochs * 5 / 6) return base * 0.01;
    if (epoch >= total_epochs * 2 / 3) return base * 0.1;
    return base;
}

std::vector<std::vector<int>> pk_batches(const std::vector<int>& sample_ids,
                                         const std::vector<int>& labels, int p, int k, Rng& rng) {
    if (sample_ids.size() != labels.size()) throw std::invalid_argument("pk_batches: size mismatch");
    if (p < 1 || k < 1) throw std::invalid_argument("pk_batches: p and k must be positive");
    std::map<int, std::vector<int>> by_id;
    for (size_t i = 0; i < sample_ids.size(); ++i) by_id[labels[i]].push_back(sample_ids[i]);

    std::vector<int> ids;
    ids.reserve(by_id.size());
    for (const auto& [id, _] : by_id) ids.push_back(id);
    if (static_cast<int>(ids.size()) < p)
        throw std::invalid_argument("pk_batches: fewer identities than p");

    // An epoch covers about one pass over the samples: ceil(N / (p*k)) batches
    // of p distinct identities each, the id pool reshuffled whenever the
    // remainder cannot fill a batch.
    const size_t num_batches =
        (sample_ids.size() + static_cast<size_t>(p) * k - 1) / (static_cast<size_t>(p) * k);
    rng.shuffle(ids);
    size_t next = 0;

    std::vector<std::vector<int>> batches;
    for (size_t bi = 0; bi < num_batches; ++bi) {
        if (next + p > ids.size()) {
            rng.shuffle(ids);
            next = 0;
        }
        std::vector<int> batch;
        for (int i = 0; i < p; ++i) {
            std::vector<int> pool = by_id[ids[next + i]];
            rng.shuffle(pool);
            for (int j = 0; j < k; ++j)
                batch.push_back(j < static_cast<int>(pool.size())
                                    ? pool[j]
                                    : pool[rng.uniform_int(static_cast<int>(pool.size()))]);
        }
        next += p;
        batches.push_back(std::move(batch));
    }
    return batches;
}

Image flip_image(const Image& img) {
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

Matrix flip_label_columns(const Matrix& g, const PatchGrid& grid) {
    if (g.cols != grid.num_patches()) throw std::invalid_argument("flip_label_columns: shape");
    Matrix out(g.rows, g.cols);
    for (int part = 0; part < g.rows; ++part)
        for (int r = 0; r < grid.rows; ++r)
            for (int c = 0; c < grid.cols; ++c)
                out(part, r * grid.cols + c) = g(part, r * grid.cols + (grid.cols - 1 - c));
    return out;
}

std::string loss_csv(const std::vector<EpochLog>& rows) {
    std::ostringstream os;
    os << "stage,epoch,lr,cmp,id,imp,i2tce,bce,dice,mask,total\n";
    os.setf(std::ios::fmtflags(0), std::ios::floatfield);
    os.precision(10);
    for (const auto& r : rows)
        os << r.stage << "," << r.epoch << "," << r.lr << "," << r.mean.cmp << "," << r.mean.id
           << "," << r.mean.imp << "," << r.mean.i2tce << "," << r.mean.bce << "," << r.mean.dice
           << "," << r.mean.mask << "," << r.mean.total << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------

Trainer::Trainer(model::Model& m, const data::Corpus& corpus, const TrainConfig& cfg)
    : m_(m), corpus_(corpus), cfg_(cfg),
      opt_(0.9, 0.999, 1e-8, cfg.weight_decay), rng_(cfg.seed) {
    for (const auto& s : corpus_.manifest.samples)
        if (s.split == "train") {
            train_samples_.push_back(s.sample_id);
            train_labels_.push_back(s.id_label);
        }
    if (train_samples_.empty()) throw std::invalid_argument("Trainer: empty training split");
    for (int label : train_labels_)
        if (label < 0 || label >= m_.cfg.num_ids)
            throw std::invalid_argument("Trainer: id label outside classifier range");
}

img::MaskSource Trainer::memory_source() const {
    return cfg_.mask_source == img::MaskSource::predicted ? img::MaskSource::external
                                                          : cfg_.mask_source;
}

obj::PrototypeMemory Trainer::build_image_memory(img::MaskSource source) {
    std::vector<Vec> feats;
    std::vector<int> labels;
    feats.reserve(train_samples_.size());
    for (size_t i = 0; i < train_samples_.size(); ++i) {
        const int sid = train_samples_[i];
        const Matrix& g = corpus_.label(sid);
        auto out = m_.enc.forward(corpus_.images[sid], source,
                                  source == img::MaskSource::external ? &g : nullptr,
                                  m_.fuse_flags(), nullptr);
        feats.push_back(std::move(out.vmg));
        labels.push_back(train_labels_[i]);
    }
    return obj::build_memory(feats, labels, m_.cfg.num_ids);
}

obj::PrototypeMemory Trainer::build_text_memory() {
    obj::PrototypeMemory mem;
    mem.rows = Matrix(m_.cfg.num_ids, m_.cfg.enc.feature_dim);
    const auto grans = m_.gran_list();
    for (int c = 0; c < m_.cfg.num_ids; ++c)
        mem.rows.set_row(c, m_.txt.encode(m_.prompts, c, grans, nullptr));
    return mem;
}

double Trainer::step_params(double lr) {
    double gnorm = 0.0;
    m_.visit([&](const std::string& name, nn::Param& p) {
        if (!p.trainable) return;
        const double g = p.grad_norm();
        gnorm += g * g;
        const double plr = name.rfind("enc.rmp", 0) == 0 ? lr * cfg_.rmp_lr_mult : lr;
        opt_.step(name, p, plr);
    });
    return std::sqrt(gnorm);
}

std::vector<EpochLog> Trainer::run_stage1() {
    m_.set_stage_trainable(1);
    obj::PrototypeMemory vpm = build_image_memory(memory_source());
    const auto grans = m_.gran_list();
    std::vector<EpochLog> logs;
    for (int epoch = 0; epoch < cfg_.stage1_epochs; ++epoch) {
        const double lr = cosine_lr(cfg_.stage1_lr, epoch, cfg_.stage1_epochs);
        double sum = 0.0;
        for (int c = 0; c < m_.cfg.num_ids; ++c) {
            m_.prompts.visit_id("prompts", c,
                                [](const std::string&, nn::Param& p) { p.zero_grad(); });
            text::TextEncoder::Ctx ctx;
            const Vec t = m_.txt.encode(m_.prompts, c, grans, &ctx);
            obj::LossReport r;
            Vec dt;
            r.cmp = obj::loss_cmp(t, vpm, c, &dt);
            sum += obj::stage_total(r, 1);
            m_.txt.backward(ctx, dt, m_.prompts, c);
            m_.prompts.visit_id("prompts", c, [&](const std::string& name, nn::Param& p) {
                opt_.step(name, p, lr);
            });
        }
        EpochLog log;
        log.stage = 1;
        log.epoch = epoch;
        log.lr = lr;
        log.mean.cmp = sum / m_.cfg.num_ids;
        log.mean.total = log.mean.cmp;
        logs.push_back(log);
    }
    m_.set_stage_trainable(0);
    return logs;
}

std::vector<EpochLog> Trainer::run_stage2() {
    m_.set_stage_trainable(2);
    const obj::PrototypeMemory tpm = build_text_memory();
    const auto fuse = m_.fuse_flags();
    const auto parts = m_.active_parts();
    int active_parts = 0;
    for (bool b : parts) active_parts += b;
    const bool use_mask_loss = active_parts > 0;
    const PatchGrid grid = corpus_.grid();

    const int64_t batch_sz = static_cast<int64_t>(cfg_.batch_p) * cfg_.batch_k;
    const int64_t steps_per_epoch =
        (static_cast<int64_t>(train_samples_.size()) + batch_sz - 1) / batch_sz;
    const int64_t total_steps = steps_per_epoch * cfg_.stage2_epochs;
    int64_t step = 0;

    std::vector<EpochLog> logs;
    for (int epoch = 0; epoch < cfg_.stage2_epochs; ++epoch) {
        obj::PrototypeMemory vpm = build_image_memory(memory_source());
        auto batches = pk_batches(train_samples_, train_labels_, cfg_.batch_p, cfg_.batch_k, rng_);
        obj::LossReport epoch_mean;
        double lr_last = 0.0;
        for (const auto& batch : batches) {
            const double lr =
                step_warmup_lr(cfg_.stage2_lr, step, total_steps, steps_per_epoch,
                               cfg_.stage2_epochs, cfg_.warmup_frac);
            lr_last = lr;
            const int b = static_cast<int>(batch.size());
            m_.zero_grads();

            // Forward every sample, with per-sample flip augmentation.
            std::vector<img::ImageEncoder::Ctx> ctxs(b);
            std::vector<img::ImageEncoder::Output> outs(b);
            std::vector<Matrix> gs(b);
            std::vector<int> ys(b);
            for (int i = 0; i < b; ++i) {
                const int sid = batch[i];
                ys[i] = corpus_.manifest.samples[sid].id_label;
                const bool flip = cfg_.flip_aug && rng_.uniform() < 0.5;
                Matrix g = corpus_.label(sid);
                if (flip) g = flip_label_columns(g, grid);
                gs[i] = std::move(g);
                const Image& base = corpus_.images[sid];
                const Image im = flip ? flip_image(base) : base;
                outs[i] = m_.enc.forward(im, cfg_.mask_source,
                                         cfg_.mask_source == img::MaskSource::external ? &gs[i]
                                                                                       : nullptr,
                                         fuse, &ctxs[i]);
            }

            Matrix feats(b, m_.cfg.enc.feature_dim);
            for (int i = 0; i < b; ++i) feats.set_row(i, outs[i].vmg);
            nn::BatchNorm::Ctx bn_ctx;
            Matrix vbn = m_.neck.forward_train(feats, &bn_ctx);

            obj::LossReport r;
            const double invb = 1.0 / b;

            Matrix dvbn(b, feats.cols, 0.0);
            for (int i = 0; i < b; ++i) {
                Vec dv;
                r.id += obj::loss_id(vbn.row_vec(i), m_.cls, ys[i], &dv, invb) * invb;
                dvbn.set_row(i, dv);  // dv already carries the 1/b weight
            }
            Matrix dfeats = m_.neck.backward(bn_ctx, dvbn);

            std::vector<std::vector<Matrix>> dlogs(b);
            for (int i = 0; i < b; ++i) {
                Vec dimp, di2t;
                r.imp += obj::loss_imp(outs[i].vmg, vpm, ys[i], cfg_.tau, &dimp) * invb;
                r.i2tce +=
                    obj::loss_i2tce(outs[i].vmg, tpm, ys[i], cfg_.label_smooth, &di2t) * invb;
                Vec dvmg = dfeats.row_vec(i);
                for (int c = 0; c < feats.cols; ++c) dvmg[c] += (dimp[c] + di2t[c]) * invb;

                if (use_mask_loss) {
                    auto ml = obj::loss_mask_logits(outs[i].mask_logits, gs[i], cfg_.dice_eps,
                                                    parts, &dlogs[i]);
                    r.bce += ml.bce * invb;
                    r.dice += ml.dice * invb;
                    for (auto& dm : dlogs[i]) dm *= invb;
                }
                m_.enc.backward(ctxs[i], dvmg, dlogs[i]);
            }
            obj::stage_total(r, 2);
            step_params(lr);
            update_memory(vpm, [&] {
                std::vector<Vec> fs(b);
                for (int i = 0; i < b; ++i) fs[i] = outs[i].vmg;
                return fs;
            }(), ys, cfg_.memory_momentum);
            ++step;

            epoch_mean.id += r.id / batches.size();
            epoch_mean.imp += r.imp / batches.size();
            epoch_mean.i2tce += r.i2tce / batches.size();
            epoch_mean.bce += r.bce / batches.size();
            epoch_mean.dice += r.dice / batches.size();
            epoch_mean.mask += r.mask / batches.size();
            epoch_mean.total += r.total / batches.size();
        }
        EpochLog log;
        log.stage = 2;
        log.epoch = epoch;
        log.lr = lr_last;
        log.mean = epoch_mean;
        logs.push_back(log);
    }
    m_.set_stage_trainable(0);
    return logs;
}

}  // namespace mgreid::train
