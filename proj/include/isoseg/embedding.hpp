#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "isoseg/data.hpp"
#include "isoseg/networks.hpp"
#include "isoseg/onehot.hpp"

namespace isoseg::embed {

struct GaussianFit {
    std::string dataset;
    int count = 0;
    std::array<double, 2> mean{0.0, 0.0};
    std::array<std::array<double, 2>, 2> cov{{{0.0, 0.0}, {0.0, 0.0}}}; // ML fit, 1/n
};

struct Projection {
    std::vector<std::string> dataset; // per point, parallel to rows of points
    std::vector<int> sample_id;
    Eigen::MatrixXd points; // n x 2
    std::vector<GaussianFit> fits; // one per dataset, registry order
};

// Principal-component scores of the row-sample matrix, centered per column,
// reduced to min(max_components, rows-1, cols) dimensions. Column signs are
// fixed so the largest-magnitude loading is positive.
Eigen::MatrixXd pca_reduce(const Eigen::MatrixXd& rows, int max_components);

// Exact pairwise 2D stochastic-neighbor embedding, deterministic per seed.
Eigen::MatrixXd tsne_2d(const Eigen::MatrixXd& points, double perplexity, uint64_t seed,
                        int iters = 300);

GaussianFit fit_gaussian(const Eigen::MatrixXd& pts2d, const std::vector<int>& rows);

// min over other datasets of ||mean_t - mean_o|| / pooled_std(t, o), where the
// pair's pooled variance is the count-weighted mean of each fit's average of
// x and y variances. Separation > 2 marks a cluster that left the pack.
double separation_score(const Projection& proj, const std::string& target_dataset);

// Encodes sample_ids[k] of each dataset k with its own code, flattens the
// content tensors, reduces with PCA then the 2D embedding, and fits one
// Gaussian per dataset.
Projection embed_project(net::Encoder& enc, const data::Registry& reg,
                         const std::vector<cond::OneHotCode>& codes,
                         const std::vector<std::vector<int>>& sample_ids, uint64_t seed);

std::string render_embedding_tsv(const Projection& p);
std::string render_gmm_json(const Projection& p);

} // namespace isoseg::embed
