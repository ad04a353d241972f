#pragma once

#include <array>
#include <string>
#include <vector>

#include "mgreid/dataset.hpp"
#include "mgreid/image_encoder.hpp"
#include "mgreid/model.hpp"

namespace mgreid::eval {

// Unit-normalized post-neck (running statistics) features, one row per listed
// sample id.
Matrix extract_features(model::Model& m, const data::Corpus& corpus,
                        const std::vector<int>& sample_ids, img::MaskSource source);

struct RetrievalResult {
    double mAP = 0.0;
    double rank1 = 0.0;
    int num_queries = 0;       // queries that entered the metrics
    int excluded_queries = 0;  // queries with no valid match
    std::vector<double> per_query_ap;
};

// Cosine ranking with the standard protocol: gallery entries sharing both id
// and camera with the query are excluded; ties broken by ascending gallery
// index; queries without any valid positive are dropped (with a warning) and
// counted.
RetrievalResult compute_map_cmc(const Matrix& qf, const std::vector<int>& q_ids,
                                const std::vector<int>& q_cams, const Matrix& gf,
                                const std::vector<int>& g_ids, const std::vector<int>& g_cams);

// Runs the retrieval protocol over the corpus splits.
RetrievalResult evaluate_retrieval(model::Model& m, const data::Corpus& corpus,
                                   img::MaskSource source);

struct MaskQuality {
    std::array<double, 3> per_part_iou{};
    double mean_iou = 0.0;
};

// Thresholded last-layer mask predictions against the (uncorrupted) manifest
// boxes, averaged over the given samples.
MaskQuality mask_quality(model::Model& m, const data::Corpus& corpus,
                         const std::vector<int>& sample_ids);

// Grayscale per-part heatmaps of the last-layer mask probabilities, upsampled
// to image resolution; written as <dir>/mask_<sample>_<part>.png.
void render_mask_heatmaps(model::Model& m, const data::Corpus& corpus, int sample_id,
                          const std::string& dir);

std::string metrics_json(const RetrievalResult& r, const MaskQuality& q);

}  // namespace mgreid::eval
