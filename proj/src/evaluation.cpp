#include "mgreid/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "mgreid/grounding.hpp"

namespace fs = std::filesystem;

namespace mgreid::eval {

Matrix extract_features(model::Model& m, const data::Corpus& corpus,
                        const std::vector<int>& sample_ids, img::MaskSource source) {
    Matrix out(static_cast<int>(sample_ids.size()), m.cfg.enc.feature_dim);
    const auto fuse = m.fuse_flags();
    for (size_t i = 0; i < sample_ids.size(); ++i) {
        const int sid = sample_ids[i];
        const Matrix* g = nullptr;
        if (source == img::MaskSource::external) g = &corpus.label(sid);
        auto enc_out = m.enc.forward(corpus.images[sid], source, g, fuse, nullptr);
        Matrix f(1, out.cols);
        f.set_row(0, enc_out.vmg);
        Matrix fbn = m.neck.forward_eval(f);
        out.set_row(static_cast<int>(i), normalized(fbn.row_vec(0)));
    }
    return out;
}

RetrievalResult compute_map_cmc(const Matrix& qf, const std::vector<int>& q_ids,
                                const std::vector<int>& q_cams, const Matrix& gf,
                                const std::vector<int>& g_ids, const std::vector<int>& g_cams) {
    if (qf.rows != static_cast<int>(q_ids.size()) || qf.rows != static_cast<int>(q_cams.size()))
        throw std::invalid_argument("compute_map_cmc: query metadata mismatch");
    if (gf.rows != static_cast<int>(g_ids.size()) || gf.rows != static_cast<int>(g_cams.size()))
        throw std::invalid_argument("compute_map_cmc: gallery metadata mismatch");

    RetrievalResult res;
    double map_sum = 0.0, rank1_sum = 0.0;
    for (int q = 0; q < qf.rows; ++q) {
        std::vector<int> valid;
        for (int j = 0; j < gf.rows; ++j)
            if (!(g_ids[j] == q_ids[q] && g_cams[j] == q_cams[q])) valid.push_back(j);

        int relevant = 0;
        for (int j : valid)
            if (g_ids[j] == q_ids[q]) ++relevant;
        if (relevant == 0) {
            std::cerr << "warning: query " << q << " has no valid gallery match; excluded\n";
            ++res.excluded_queries;
            continue;
        }

        std::vector<double> sims(valid.size());
        for (size_t j = 0; j < valid.size(); ++j)
            sims[j] = dot(qf.row_vec(q), gf.row_vec(valid[j]));
        std::vector<int> order(valid.size());
        std::iota(order.begin(), order.end(), 0);
        // stable sort keeps ascending gallery index among equal similarities
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return sims[a] > sims[b]; });

        int hits = 0;
        double ap = 0.0;
        for (size_t k = 0; k < order.size(); ++k) {
            if (g_ids[valid[order[k]]] == q_ids[q]) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(k + 1);
            }
        }
        ap /= relevant;
        map_sum += ap;
        rank1_sum += g_ids[valid[order[0]]] == q_ids[q] ? 1.0 : 0.0;
        res.per_query_ap.push_back(ap);
        ++res.num_queries;
    }
    if (res.num_queries > 0) {
        res.mAP = map_sum / res.num_queries;
        res.rank1 = rank1_sum / res.num_queries;
    }
    return res;
}

RetrievalResult evaluate_retrieval(model::Model& m, const data::Corpus& corpus,
                                   img::MaskSource source) {
    const auto query = corpus.manifest.split_indices("query");
    const auto gallery = corpus.manifest.split_indices("gallery");
    if (query.empty() || gallery.empty())
        throw std::invalid_argument("evaluate_retrieval: empty query or gallery split");
    Matrix qf = extract_features(m, corpus, query, source);
    Matrix gf = extract_features(m, corpus, gallery, source);
    auto meta = [&](const std::vector<int>& ids, std::vector<int>& labels,
                    std::vector<int>& cams) {
        for (int sid : ids) {
            labels.push_back(corpus.manifest.samples[sid].id_label);
            cams.push_back(corpus.manifest.samples[sid].camera_id);
        }
    };
    std::vector<int> q_ids, q_cams, g_ids, g_cams;
    meta(query, q_ids, q_cams);
    meta(gallery, g_ids, g_cams);
    return compute_map_cmc(qf, q_ids, q_cams, gf, g_ids, g_cams);
}

MaskQuality mask_quality(model::Model& m, const data::Corpus& corpus,
                         const std::vector<int>& sample_ids) {
    if (sample_ids.empty()) throw std::invalid_argument("mask_quality: no samples");
    const PatchGrid grid = corpus.grid();
    const auto fuse = m.fuse_flags();
    MaskQuality q;
    std::array<double, 3> iou_sum{};
    for (int sid : sample_ids) {
        auto out = m.enc.forward(corpus.images[sid], img::MaskSource::predicted, nullptr, fuse,
                                 nullptr);
        const Matrix& probs = out.mask_probs.back();
        for (int part = 0; part < kNumParts; ++part) {
            const auto oracle =
                grounding::oracle_patch_mask(corpus.manifest.samples[sid].oracle_boxes[part], grid);
            int inter = 0, uni = 0;
            for (int j = 0; j < grid.num_patches(); ++j) {
                const bool pred = probs(part, j) > m.cfg.enc.mask_threshold;
                const bool gt = oracle[j] != 0;
                inter += pred && gt;
                uni += pred || gt;
            }
            iou_sum[part] += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
        }
    }
    for (int part = 0; part < kNumParts; ++part) {
        q.per_part_iou[part] = iou_sum[part] / sample_ids.size();
        q.mean_iou += q.per_part_iou[part] / kNumParts;
    }
    return q;
}

void render_mask_heatmaps(model::Model& m, const data::Corpus& corpus, int sample_id,
                          const std::string& dir) {
    fs::create_directories(dir);
    const PatchGrid grid = corpus.grid();
    const int p = grid.patch_size;
    auto out = m.enc.forward(corpus.images[sample_id], img::MaskSource::predicted, nullptr,
                             m.fuse_flags(), nullptr);
    const Matrix& probs = out.mask_probs.back();
    const int h = grid.rows * p, w = grid.cols * p;
    for (int part = 0; part < kNumParts; ++part) {
        std::vector<uint8_t> gray(static_cast<size_t>(h) * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double v = probs(part, (y / p) * grid.cols + x / p);
                gray[static_cast<size_t>(y) * w + x] =
                    static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        const std::string path = (fs::path(dir) / ("mask_" + std::to_string(sample_id) + "_" +
                                                   part_name(static_cast<Part>(part)) + ".png"))
                                     .string();
        write_png_gray(path, h, w, gray);
    }
}

std::string metrics_json(const RetrievalResult& r, const MaskQuality& q) {
    nlohmann::json j;
    j["mAP"] = r.mAP;
    j["rank1"] = r.rank1;
    j["num_queries"] = r.num_queries;
    j["excluded_queries"] = r.excluded_queries;
    j["per_part_iou"] = {{"head", q.per_part_iou[0]},
                         {"upper", q.per_part_iou[1]},
                         {"legs", q.per_part_iou[2]}};
    j["mean_iou"] = q.mean_iou;
    return j.dump(1) + "\n";
}

}  // namespace mgreid::eval
