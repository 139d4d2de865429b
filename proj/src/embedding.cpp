#include "isoseg/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "isoseg/nn.hpp"
#include "isoseg/rng.hpp"
#include <nlohmann/json.hpp>

namespace isoseg::embed {

Eigen::MatrixXd pca_reduce(const Eigen::MatrixXd& rows, int max_components) {
    const int n = static_cast<int>(rows.rows());
    const int d = static_cast<int>(rows.cols());
    if (n < 2) throw std::runtime_error("pca_reduce: need at least 2 rows");
    const int k = std::min({max_components, n - 1, d});

    Eigen::MatrixXd xc = rows.rowwise() - rows.colwise().mean();
    // Gram trick: the nxn eigenproblem yields the same scores as the dxd one
    // (scores = U * sqrt(lambda)), and n here is tiny while d can be 5e5.
    const Eigen::MatrixXd gram = xc * xc.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw std::runtime_error("pca_reduce: eigensolver failed");

    Eigen::MatrixXd scores(n, k);
    for (int j = 0; j < k; ++j) {
        const int src = n - 1 - j; // eigenvalues come back ascending
        const double lam = std::max(0.0, es.eigenvalues()(src));
        Eigen::VectorXd u = es.eigenvectors().col(src);
        int arg = 0;
        for (int i = 1; i < n; ++i)
            if (std::abs(u(i)) > std::abs(u(arg))) arg = i;
        if (u(arg) < 0.0) u = -u;
        scores.col(j) = u * std::sqrt(lam);
    }
    return scores;
}

namespace {

// Conditional distribution row with the precision tuned so the entropy
// matches log(perplexity); the classic doubling/halving search.
void tune_row(const Eigen::MatrixXd& d2, int i, double log_perp, Eigen::VectorXd& p_row) {
    const int n = static_cast<int>(d2.rows());
    double beta = 1.0, beta_lo = -1.0, beta_hi = -1.0;
    for (int iter = 0; iter < 60; ++iter) {
        double sum_p = 0.0, sum_dp = 0.0;
        for (int j = 0; j < n; ++j) {
            const double pj = j == i ? 0.0 : std::exp(-beta * d2(i, j));
            p_row(j) = pj;
            sum_p += pj;
            sum_dp += pj * d2(i, j);
        }
        if (sum_p <= 0.0) sum_p = 1e-300;
        const double h = std::log(sum_p) + beta * sum_dp / sum_p;
        const double diff = h - log_perp;
        if (std::abs(diff) < 1e-7) break;
        if (diff > 0.0) { // entropy too high: sharpen
            beta_lo = beta;
            beta = beta_hi < 0.0 ? beta * 2.0 : 0.5 * (beta + beta_hi);
        } else {
            beta_hi = beta;
            beta = beta_lo < 0.0 ? beta / 2.0 : 0.5 * (beta + beta_lo);
        }
    }
    double sum_p = 0.0;
    for (int j = 0; j < n; ++j) sum_p += p_row(j);
    if (sum_p <= 0.0) sum_p = 1e-300;
    p_row /= sum_p;
}

} // namespace

Eigen::MatrixXd tsne_2d(const Eigen::MatrixXd& points, double perplexity, uint64_t seed,
                        int iters) {
    const int n = static_cast<int>(points.rows());
    if (n < 4) throw std::runtime_error("tsne_2d: need at least 4 points");
    const double perp = std::min(perplexity, (n - 1) / 3.0);

    Eigen::MatrixXd d2(n, n);
    for (int i = 0; i < n; ++i) {
        d2(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j)
            d2(i, j) = d2(j, i) = (points.row(i) - points.row(j)).squaredNorm();
    }

    Eigen::MatrixXd p(n, n);
    Eigen::VectorXd row(n);
    for (int i = 0; i < n; ++i) {
        tune_row(d2, i, std::log(perp), row);
        p.row(i) = row;
    }
    Eigen::MatrixXd pj = (p + p.transpose()) / (2.0 * n);
    pj = pj.cwiseMax(1e-12);

    Rng rng(Rng::splitmix64(seed ^ 0x74736e65ULL));
    Eigen::MatrixXd y(n, 2), inc = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 2; ++c) y(i, c) = 1e-4 * rng.normal();

    const int exaggerate_until = std::min(100, iters / 3);
    const double eta = 200.0;
    Eigen::MatrixXd w(n, n), grad(n, 2);
    for (int it = 0; it < iters; ++it) {
        const double ex = it < exaggerate_until ? 12.0 : 1.0;
        double sum_w = 0.0;
        for (int i = 0; i < n; ++i) {
            w(i, i) = 0.0;
            for (int j = i + 1; j < n; ++j) {
                const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
                w(i, j) = w(j, i) = v;
                sum_w += 2.0 * v;
            }
        }
        if (sum_w <= 0.0) sum_w = 1e-300;

        grad.setZero();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = std::max(w(i, j) / sum_w, 1e-12);
                const double coef = 4.0 * (ex * pj(i, j) - q) * w(i, j);
                grad.row(i) += coef * (y.row(i) - y.row(j));
            }

        const double momentum = it < 100 ? 0.5 : 0.8;
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 2; ++c) {
                const bool same = (grad(i, c) > 0.0) == (inc(i, c) > 0.0);
                gains(i, c) = std::max(0.01, same ? gains(i, c) * 0.8 : gains(i, c) + 0.2);
                inc(i, c) = momentum * inc(i, c) - eta * gains(i, c) * grad(i, c);
                y(i, c) += inc(i, c);
            }
        y.rowwise() -= y.colwise().mean();
    }
    return y;
}

GaussianFit fit_gaussian(const Eigen::MatrixXd& pts2d, const std::vector<int>& rows) {
    if (rows.empty()) throw std::runtime_error("fit_gaussian: no rows");
    GaussianFit f;
    f.count = static_cast<int>(rows.size());
    for (int r : rows) {
        f.mean[0] += pts2d(r, 0);
        f.mean[1] += pts2d(r, 1);
    }
    f.mean[0] /= f.count;
    f.mean[1] /= f.count;
    for (int r : rows) {
        const double dx = pts2d(r, 0) - f.mean[0], dy = pts2d(r, 1) - f.mean[1];
        f.cov[0][0] += dx * dx;
        f.cov[0][1] += dx * dy;
        f.cov[1][0] += dx * dy;
        f.cov[1][1] += dy * dy;
    }
    for (auto& r : f.cov)
        for (auto& v : r) v /= f.count;
    return f;
}

double separation_score(const Projection& proj, const std::string& target_dataset) {
    const GaussianFit* target = nullptr;
    for (const GaussianFit& f : proj.fits)
        if (f.dataset == target_dataset) target = &f;
    if (!target) throw std::runtime_error("separation_score: unknown dataset " + target_dataset);

    auto avg_var = [](const GaussianFit& f) { return 0.5 * (f.cov[0][0] + f.cov[1][1]); };
    double best = -1.0;
    for (const GaussianFit& f : proj.fits) {
        if (f.dataset == target_dataset) continue;
        const double dx = f.mean[0] - target->mean[0], dy = f.mean[1] - target->mean[1];
        const double dist = std::sqrt(dx * dx + dy * dy);
        const double pooled_var = (target->count * avg_var(*target) + f.count * avg_var(f)) /
                                  static_cast<double>(target->count + f.count);
        const double score = dist / std::sqrt(std::max(pooled_var, 1e-30));
        if (best < 0.0 || score < best) best = score;
    }
    if (best < 0.0) throw std::runtime_error("separation_score: no other dataset to compare");
    return best;
}

Projection embed_project(net::Encoder& enc, const data::Registry& reg,
                         const std::vector<cond::OneHotCode>& codes,
                         const std::vector<std::vector<int>>& sample_ids, uint64_t seed) {
    const int nd = reg.size();
    if (nd < 2) throw std::runtime_error("embed_project: need at least 2 datasets");
    if (static_cast<int>(sample_ids.size()) != nd || static_cast<int>(codes.size()) != nd)
        throw std::runtime_error("embed_project: per-dataset inputs out of step");
    int total = 0;
    for (int k = 0; k < nd; ++k) {
        if (sample_ids[k].size() < 3)
            throw std::runtime_error("embed_project: dataset \"" + reg.descriptor(k).name +
                                     "\" needs at least 3 samples");
        total += static_cast<int>(sample_ids[k].size());
    }

    Projection proj;
    Eigen::MatrixXd flat;
    nn::Ctx ng;
    ng.grad = false;
    int r = 0;
    for (int k = 0; k < nd; ++k)
        for (int id : sample_ids[k]) {
            const data::Batch b = data::make_eval_batch(reg, k, id);
            const net::LatentCode lat = enc.forward(b.images, codes[k], ng);
            if (r == 0) flat.resize(total, lat.content.numel());
            if (flat.cols() != lat.content.numel())
                throw std::runtime_error("embed_project: latent size varies across samples");
            for (int64_t i = 0; i < lat.content.numel(); ++i) flat(r, i) = lat.content[i];
            proj.dataset.push_back(reg.descriptor(k).name);
            proj.sample_id.push_back(id);
            ++r;
        }

    const Eigen::MatrixXd reduced = pca_reduce(flat, 200);
    const double perp = std::min(30.0, std::max(2.0, (total - 1) / 3.0));
    proj.points = tsne_2d(reduced, perp, seed);

    r = 0;
    for (int k = 0; k < nd; ++k) {
        std::vector<int> rows;
        for (size_t i = 0; i < sample_ids[k].size(); ++i) rows.push_back(r++);
        GaussianFit f = fit_gaussian(proj.points, rows);
        f.dataset = reg.descriptor(k).name;
        proj.fits.push_back(std::move(f));
    }
    return proj;
}

std::string render_embedding_tsv(const Projection& p) {
    std::string text = "dataset\tsample_id\tx\ty\n";
    char buf[160];
    for (int i = 0; i < static_cast<int>(p.dataset.size()); ++i) {
        std::snprintf(buf, sizeof(buf), "%s\t%d\t%.9g\t%.9g\n", p.dataset[i].c_str(),
                      p.sample_id[i], p.points(i, 0), p.points(i, 1));
        text += buf;
    }
    return text;
}

std::string render_gmm_json(const Projection& p) {
    nlohmann::json root = nlohmann::json::array();
    for (const GaussianFit& f : p.fits) {
        nlohmann::json g;
        g["dataset"] = f.dataset;
        g["count"] = f.count;
        g["mean"] = {f.mean[0], f.mean[1]};
        g["cov"] = {{f.cov[0][0], f.cov[0][1]}, {f.cov[1][0], f.cov[1][1]}};
        root.push_back(g);
    }
    return root.dump(2) + "\n";
}

} // namespace isoseg::embed
