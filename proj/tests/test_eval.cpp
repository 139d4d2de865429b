#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "doctest.h"
#include "isoseg/config.hpp"
#include "isoseg/data.hpp"
#include "isoseg/embedding.hpp"
#include "isoseg/evalmetrics.hpp"
#include "isoseg/networks.hpp"
#include "isoseg/onehot.hpp"
#include "isoseg/rng.hpp"
#include "isoseg/synth.hpp"
#include "ref_ops.hpp"

using namespace isoseg;
namespace fs = std::filesystem;

namespace {

// Unique scratch directory per test run, removed on destruction.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("isoseg_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

// Independent oracle: integer pixel tallies, intersection over union.
// Two empty masks count as a perfect match.
double counting_jaccard(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    long long inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] && b[i]) ++inter;
        if (a[i] || b[i]) ++uni;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Tensor mask_tensor(const std::vector<uint8_t>& bits, int h, int w) {
    Tensor t({1, 1, h, w});
    for (size_t i = 0; i < bits.size(); ++i) t[static_cast<int64_t>(i)] = bits[i] ? 1.0f : 0.0f;
    return t;
}

data::SyntheticRecipe small_recipe(uint64_t seed, int count = 10, int size = 16) {
    data::SyntheticRecipe r;
    r.task = "lobes";
    r.count = count;
    r.seed = seed;
    r.image_size = size;
    return r;
}

data::DatasetDescriptor descriptor(const std::string& name, const std::string& path,
                                   double lf = 1.0) {
    data::DatasetDescriptor d;
    d.name = name;
    d.path = path;
    d.tasks = {"lobes"};
    d.label_fraction = lf;
    return d;
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("confusion tallies pixels with the 0.5 decision rule") {
    Tensor pred({1, 1, 2, 3});
    Tensor truth({1, 1, 2, 3});
    const float pv[6] = {0.49f, 0.5f, 0.7f, 0.0f, 1.0f, 0.2f};
    const float tv[6] = {0.0f, 1.0f, 1.0f, 1.0f, 0.0f, 0.0f};
    for (int i = 0; i < 6; ++i) {
        pred[i] = pv[i];
        truth[i] = tv[i];
    }
    const eval::ConfusionCounts c = eval::confusion(pred, truth);
    CHECK(c.tp == 2);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.tn == 2);
    CHECK(c.tp + c.fp + c.fn + c.tn == 6);
}

TEST_CASE("jaccard matches pixel counting on every pair of 2x4 masks") {
    // 8 pixels give 256 masks; the full 256x256 pair grid is exhaustive.
    long long mismatches = 0;
    for (int a = 0; a < 256; ++a) {
        std::vector<uint8_t> ba(8), bb(8);
        for (int i = 0; i < 8; ++i) ba[i] = (a >> i) & 1;
        const Tensor ta = mask_tensor(ba, 2, 4);
        for (int b = 0; b < 256; ++b) {
            for (int i = 0; i < 8; ++i) bb[i] = (b >> i) & 1;
            const Tensor tb = mask_tensor(bb, 2, 4);
            if (eval::jaccard(ta, tb) != counting_jaccard(ba, bb)) ++mismatches;
        }
    }
    CHECK(mismatches == 0);

    // Spot checks with visible values so a regression names its case.
    CHECK(eval::jaccard(mask_tensor({1, 1, 0, 0, 0, 0, 0, 0}, 2, 4),
                        mask_tensor({1, 0, 1, 0, 0, 0, 0, 0}, 2, 4)) == doctest::Approx(1.0 / 3.0));
    CHECK(eval::jaccard(mask_tensor({0, 0, 0, 0, 0, 0, 0, 0}, 2, 4),
                        mask_tensor({0, 0, 0, 0, 0, 0, 0, 0}, 2, 4)) == 1.0);
}

TEST_CASE("jaccard matches pixel counting on random 16x16 masks") {
    Rng rng(40501);
    for (int trial = 0; trial < 1000; ++trial) {
        const double da = rng.uniform(), db = rng.uniform();
        std::vector<uint8_t> ba(256), bb(256);
        for (int i = 0; i < 256; ++i) {
            ba[i] = rng.uniform() < da ? 1 : 0;
            bb[i] = rng.uniform() < db ? 1 : 0;
        }
        const double module = eval::jaccard(mask_tensor(ba, 16, 16), mask_tensor(bb, 16, 16));
        CHECK(module == counting_jaccard(ba, bb));
    }
}

TEST_CASE("jaccard endpoint examples") {
    std::vector<uint8_t> full(100, 1), empty(100, 0);
    CHECK(eval::jaccard(mask_tensor(full, 10, 10), mask_tensor(full, 10, 10)) == 1.0);
    CHECK(eval::jaccard(mask_tensor(empty, 10, 10), mask_tensor(empty, 10, 10)) == 1.0);
    CHECK(eval::jaccard(mask_tensor(empty, 10, 10), mask_tensor(full, 10, 10)) == 0.0);
    CHECK(eval::jaccard(mask_tensor(full, 10, 10), mask_tensor(empty, 10, 10)) == 0.0);

    // 50 shared, 25 prediction-only, 25 truth-only: 50 / (50+25+25).
    std::vector<uint8_t> pred(100, 0), truth(100, 0);
    for (int i = 0; i < 75; ++i) pred[i] = 1;
    for (int i = 0; i < 50; ++i) truth[i] = 1;
    for (int i = 75; i < 100; ++i) truth[i] = 1;
    CHECK(eval::jaccard(mask_tensor(pred, 10, 10), mask_tensor(truth, 10, 10)) == 0.5);

    // Disjoint nonempty masks.
    std::vector<uint8_t> left(100, 0), right(100, 0);
    for (int i = 0; i < 50; ++i) left[i] = 1;
    for (int i = 50; i < 100; ++i) right[i] = 1;
    CHECK(eval::jaccard(mask_tensor(left, 10, 10), mask_tensor(right, 10, 10)) == 0.0);
}

TEST_CASE("mask shape mismatch is rejected") {
    Tensor a({1, 1, 2, 2}), b({1, 1, 4, 4});
    CHECK_THROWS_WITH_AS(eval::jaccard(a, b), doctest::Contains("shape mismatch"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(eval::confusion(b, a), doctest::Contains("shape mismatch"),
                         std::runtime_error);
}

TEST_CASE("binarize keeps threshold ties on the foreground side") {
    Tensor probs({1, 1, 1, 5});
    const float pv[5] = {0.0f, 0.25f, 0.5f, 0.75f, 1.0f};
    for (int i = 0; i < 5; ++i) probs[i] = pv[i];

    const Tensor half = eval::binarize(probs);
    CHECK(half.same_shape(probs));
    CHECK(half[0] == 0.0f);
    CHECK(half[1] == 0.0f);
    CHECK(half[2] == 1.0f); // exactly at threshold
    CHECK(half[3] == 1.0f);
    CHECK(half[4] == 1.0f);

    const Tensor quarter = eval::binarize(probs, 0.25);
    CHECK(quarter[0] == 0.0f);
    CHECK(quarter[1] == 1.0f); // exactly at threshold
    CHECK(quarter[2] == 1.0f);

    const Tensor top = eval::binarize(probs, 1.0);
    for (int i = 0; i < 4; ++i) CHECK(top[i] == 0.0f);
    CHECK(top[4] == 1.0f);
}

TEST_CASE("ensemble interval reproduces the five-score oracle") {
    const std::vector<double> vals{91.0, 92.0, 93.0, 92.0, 92.0};
    const eval::MetricSummary s = eval::ensemble_ci(vals);
    CHECK(s.values == vals);
    CHECK(s.mean == 92.0);
    // Sample std sqrt(2/4); interval half-width t_{0.975,4} * s / sqrt(5) with
    // t = 2.7764451051977987.
    CHECK(refop::close(s.stddev, 0.70710678118654757, 0.0, 1e-15));
    CHECK(refop::close(s.half_width, 0.87798903308508447, 0.0, 1e-9));
    CHECK(refop::close(s.half_width, 0.878, 0.0, 5e-4));
}

TEST_CASE("ensemble interval scales by the t quantile across sizes and levels") {
    const std::vector<double> v8{1.0, 2.5, 2.0, 4.0, 3.5, 2.2, 5.0, 0.7};
    double mean = 0.0;
    for (double v : v8) mean += v;
    mean /= static_cast<double>(v8.size());
    double acc = 0.0;
    for (double v : v8) acc += (v - mean) * (v - mean);
    const double sd = std::sqrt(acc / static_cast<double>(v8.size() - 1));

    const eval::MetricSummary s = eval::ensemble_ci(v8);
    CHECK(refop::close(s.mean, mean, 1e-15, 0.0));
    CHECK(refop::close(s.stddev, sd, 1e-15, 0.0));
    // Quantile oracles pinned from an independent implementation; 1e-9 leaves
    // room for legitimate last-digit differences between quantile inversions
    // while any dof or level mix-up misses by more than 1e-2.
    // t_{0.975,7} = 2.3646242515927844
    CHECK(refop::close(s.half_width, 2.3646242515927844 * sd / std::sqrt(8.0), 1e-9, 0.0));

    // 90% level over ten values: t_{0.95,9} = 1.8331129326536335.
    std::vector<double> v10;
    Rng rng(88);
    for (int i = 0; i < 10; ++i) v10.push_back(rng.uniform());
    const eval::MetricSummary s10 = eval::ensemble_ci(v10, 0.10);
    CHECK(refop::close(s10.half_width, 1.8331129326536335 * s10.stddev / std::sqrt(10.0), 1e-9,
                       0.0));
}

TEST_CASE("degenerate ensembles") {
    const eval::MetricSummary flat = eval::ensemble_ci({5.0, 5.0, 5.0});
    CHECK(flat.mean == 5.0);
    CHECK(flat.stddev == 0.0);
    CHECK(flat.half_width == 0.0);

    CHECK_THROWS_WITH_AS(eval::ensemble_ci({1.0}), doctest::Contains("at least 2"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(eval::ensemble_ci({}), doctest::Contains("at least 2"),
                         std::runtime_error);
}

TEST_CASE("evaluate_dataset walks the given split deterministically") {
    TempDir tmp("evalds");
    data::synth_generate(small_recipe(900), tmp.str(), "evd");

    data::Registry reg;
    reg.register_dataset(descriptor("evd", tmp.str() + "/evd"));

    net::GeneratorSpec spec;
    spec.n_datasets = 1;
    spec.base_filters = 8;
    spec.residual_layers = 1;
    net::Encoder enc(spec);
    net::SegmenterM seg(enc.content_channels());
    Rng rng(17);
    enc.init(rng);
    seg.init(rng);

    const cond::OneHotCode code = cond::encode_onehot(0, 1);
    const std::vector<int> ids{0, 1, 2, 3, 4};
    const eval::DatasetEval a = eval::evaluate_dataset(enc, seg, reg, 0, code, ids);

    REQUIRE(a.per_image.size() == 5);
    for (double v : a.per_image) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    double mean = 0.0;
    for (double v : a.per_image) mean += v;
    mean /= 5.0;
    double acc = 0.0;
    for (double v : a.per_image) acc += (v - mean) * (v - mean);
    CHECK(refop::close(a.mean, mean, 1e-15, 0.0));
    CHECK(refop::close(a.stddev, std::sqrt(acc / 4.0), 1e-15, 1e-300));

    const eval::DatasetEval b = eval::evaluate_dataset(enc, seg, reg, 0, code, ids);
    CHECK(b.per_image == a.per_image);

    // Single image: defined mean, zero spread.
    const eval::DatasetEval one = eval::evaluate_dataset(enc, seg, reg, 0, code, {2});
    CHECK(one.per_image.size() == 1);
    CHECK(one.mean == one.per_image[0]);
    CHECK(one.stddev == 0.0);

    CHECK_THROWS_WITH_AS(eval::evaluate_dataset(enc, seg, reg, 0, code, {}),
                         doctest::Contains("empty test split"), std::runtime_error);
}

TEST_CASE("evaluate_dataset rejects unlabeled samples by name") {
    TempDir tmp("evalunlab");
    const std::string ds = data::synth_generate(small_recipe(901), tmp.str(), "evu");

    // Drop one mask file; the reloaded sample becomes unlabeled.
    std::vector<fs::path> masks;
    for (const auto& e : fs::directory_iterator(fs::path(ds) / "masks" / "lobes"))
        masks.push_back(e.path());
    std::sort(masks.begin(), masks.end());
    REQUIRE(masks.size() == 10);
    fs::remove(masks[3]);

    data::Registry reg;
    reg.register_dataset(descriptor("evu", ds));
    CHECK_FALSE(reg.has_mask(0, 3));

    net::GeneratorSpec spec;
    spec.n_datasets = 1;
    spec.base_filters = 8;
    spec.residual_layers = 1;
    net::Encoder enc(spec);
    net::SegmenterM seg(enc.content_channels());
    Rng rng(18);
    enc.init(rng);
    seg.init(rng);

    const cond::OneHotCode code = cond::encode_onehot(0, 1);
    CHECK_THROWS_WITH_AS(eval::evaluate_dataset(enc, seg, reg, 0, code, {0, 3, 4}),
                         doctest::Contains("unlabeled sample 3"), std::runtime_error);
    CHECK_THROWS_WITH_AS(eval::evaluate_dataset(enc, seg, reg, 0, code, {3}),
                         doctest::Contains("\"evu\""), std::runtime_error);
}

TEST_CASE("pca_reduce keeps pairwise geometry and clamps the rank") {
    Rng rng(77);
    Eigen::MatrixXd rows(6, 10);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 10; ++j) rows(i, j) = rng.normal();

    const Eigen::MatrixXd full = embed::pca_reduce(rows, 200);
    CHECK(full.rows() == 6);
    CHECK(full.cols() == 5); // min(200, n-1, d)

    // Full-rank scores are a rigid re-expression of the centered rows: every
    // pairwise distance survives.
    const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
    for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j) {
            const double want = (centered.row(i) - centered.row(j)).norm();
            const double got = (full.row(i) - full.row(j)).norm();
            CHECK(refop::close(got, want, 1e-9, 1e-9));
        }

    // Truncation keeps the leading columns of the full decomposition.
    const Eigen::MatrixXd lead = embed::pca_reduce(rows, 3);
    CHECK(lead.cols() == 3);
    CHECK((lead - full.leftCols(3)).cwiseAbs().maxCoeff() < 1e-9);

    // Rank also clamps on the feature side.
    Eigen::MatrixXd wide(10, 3);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 3; ++j) wide(i, j) = rng.normal();
    CHECK(embed::pca_reduce(wide, 200).cols() == 3);

    Eigen::MatrixXd single(1, 4);
    single.setZero();
    CHECK_THROWS_WITH_AS(embed::pca_reduce(single, 2), doctest::Contains("at least 2 rows"),
                         std::runtime_error);
}

TEST_CASE("pca_reduce on collinear points recovers the line with a fixed sign") {
    // Points strung along one direction: component 0 carries all variance and
    // its sign puts the farthest-from-center sample on the positive side.
    const std::vector<double> t{0.0, 1.0, 2.0, 3.0, 4.0, 10.0};
    Eigen::VectorXd v(7);
    v << 0.3, -1.2, 0.5, 2.0, -0.7, 0.1, 1.4;
    Eigen::MatrixXd rows(6, 7);
    for (int i = 0; i < 6; ++i) rows.row(i) = t[i] * v.transpose();

    const Eigen::MatrixXd scores = embed::pca_reduce(rows, 200);
    const double tmean = (0.0 + 1.0 + 2.0 + 3.0 + 4.0 + 10.0) / 6.0;
    for (int i = 0; i < 6; ++i) {
        CHECK(refop::close(std::abs(scores(i, 0)), std::abs(t[i] - tmean) * v.norm(), 1e-9, 1e-9));
        for (int j = 1; j < scores.cols(); ++j) CHECK(std::abs(scores(i, j)) < 1e-5);
    }
    CHECK(scores(5, 0) > 0.0); // t=10 sits farthest out
}

TEST_CASE("tsne_2d separates distant clusters and repeats per seed") {
    Rng rng(123);
    Eigen::MatrixXd pts(15, 5);
    for (int i = 0; i < 15; ++i) {
        const int c = i / 5;
        for (int j = 0; j < 5; ++j) {
            double base = 0.0;
            if (c == 1 && j == 0) base = 50.0;
            if (c == 2 && j == 1) base = 50.0;
            pts(i, j) = base + 0.1 * rng.normal();
        }
    }

    const Eigen::MatrixXd y = embed::tsne_2d(pts, 5.0, 11);
    CHECK(y.rows() == 15);
    CHECK(y.cols() == 2);
    CHECK(y.colwise().mean().cwiseAbs().maxCoeff() < 1e-6);

    const Eigen::MatrixXd y2 = embed::tsne_2d(pts, 5.0, 11);
    CHECK((y - y2).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::MatrixXd y3 = embed::tsne_2d(pts, 5.0, 12);
    CHECK((y - y3).cwiseAbs().maxCoeff() > 1e-6);

    double intra = 0.0, inter = 0.0;
    int n_intra = 0, n_inter = 0;
    for (int i = 0; i < 15; ++i)
        for (int j = i + 1; j < 15; ++j) {
            const double d = (y.row(i) - y.row(j)).norm();
            if (i / 5 == j / 5) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    CHECK(intra / n_intra < 0.5 * (inter / n_inter));

    Eigen::MatrixXd three(3, 2);
    three.setZero();
    CHECK_THROWS_WITH_AS(embed::tsne_2d(three, 2.0, 1), doctest::Contains("at least 4"),
                         std::runtime_error);
}

TEST_CASE("fit_gaussian is the in-sample maximum-likelihood fit") {
    Eigen::MatrixXd pts(4, 2);
    pts << 0, 0, 2, 0, 0, 2, 2, 2;
    const embed::GaussianFit f = embed::fit_gaussian(pts, {0, 1, 2, 3});
    CHECK(f.count == 4);
    CHECK(f.mean[0] == 1.0);
    CHECK(f.mean[1] == 1.0);
    CHECK(f.cov[0][0] == 1.0); // 1/n denominator
    CHECK(f.cov[1][1] == 1.0);
    CHECK(f.cov[0][1] == 0.0);
    CHECK(f.cov[1][0] == 0.0);

    // Row selection fits only the chosen subset.
    Eigen::MatrixXd mix(3, 2);
    mix << 0, 0, 4, 4, 2, 6;
    const embed::GaussianFit g = embed::fit_gaussian(mix, {0, 1});
    CHECK(g.count == 2);
    CHECK(g.mean[0] == 2.0);
    CHECK(g.mean[1] == 2.0);
    CHECK(g.cov[0][0] == 4.0);
    CHECK(g.cov[0][1] == 4.0);
    CHECK(g.cov[1][1] == 4.0);

    CHECK_THROWS_WITH_AS(embed::fit_gaussian(mix, {}), doctest::Contains("no rows"),
                         std::runtime_error);
}

TEST_CASE("separation_score reports the nearest rival in pooled units") {
    auto make_fit = [](const std::string& name, double mx, double my, double var, int count) {
        embed::GaussianFit f;
        f.dataset = name;
        f.count = count;
        f.mean = {mx, my};
        f.cov[0][0] = var;
        f.cov[1][1] = var;
        return f;
    };

    embed::Projection proj;
    proj.fits.push_back(make_fit("a", 0.0, 0.0, 1.0, 10));
    proj.fits.push_back(make_fit("b", 10.0, 0.0, 1.0, 10));
    CHECK(embed::separation_score(proj, "a") == 10.0);
    CHECK(embed::separation_score(proj, "b") == 10.0);

    // A closer, wider rival takes over the minimum: pooled variance is the
    // count-weighted mean of the per-fit average variances.
    proj.fits.push_back(make_fit("c", 0.0, 3.0, 4.0, 30));
    const double pooled_ac = (10.0 * 1.0 + 30.0 * 4.0) / 40.0;
    CHECK(refop::close(embed::separation_score(proj, "a"), 3.0 / std::sqrt(pooled_ac), 1e-12, 0.0));
    CHECK(refop::close(embed::separation_score(proj, "c"), 3.0 / std::sqrt(pooled_ac), 1e-12, 0.0));
    const double dist_bc = std::sqrt(10.0 * 10.0 + 3.0 * 3.0);
    CHECK(refop::close(embed::separation_score(proj, "b"),
                       std::min(10.0, dist_bc / std::sqrt(pooled_ac)), 1e-12, 0.0));

    CHECK_THROWS_WITH_AS(embed::separation_score(proj, "nope"),
                         doctest::Contains("unknown dataset"), std::runtime_error);
}

TEST_CASE("embed_project clusters per dataset in registry order") {
    TempDir tmp("embedpr");
    data::SyntheticRecipe ra = small_recipe(910, 8);
    data::SyntheticRecipe rb = small_recipe(911, 8);
    rb.style.gamma = 3.0;
    data::synth_generate(ra, tmp.str(), "ea");
    data::synth_generate(rb, tmp.str(), "eb");

    data::Registry reg;
    reg.register_dataset(descriptor("ea", tmp.str() + "/ea"));
    reg.register_dataset(descriptor("eb", tmp.str() + "/eb"));

    net::GeneratorSpec spec;
    spec.n_datasets = 2;
    spec.base_filters = 8;
    spec.residual_layers = 1;
    net::Encoder enc(spec);
    Rng rng(29);
    enc.init(rng);

    const std::vector<cond::OneHotCode> codes{cond::encode_onehot(0, 2), cond::encode_onehot(1, 2)};
    const std::vector<std::vector<int>> ids{{0, 1, 2, 3}, {0, 1, 2, 3}};

    const embed::Projection p = embed::embed_project(enc, reg, codes, ids, 5);
    REQUIRE(p.points.rows() == 8);
    CHECK(p.points.cols() == 2);
    REQUIRE(p.dataset.size() == 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(p.dataset[i] == "ea");
        CHECK(p.dataset[i + 4] == "eb");
        CHECK(p.sample_id[i] == i);
        CHECK(p.sample_id[i + 4] == i);
    }
    REQUIRE(p.fits.size() == 2);
    CHECK(p.fits[0].dataset == "ea");
    CHECK(p.fits[1].dataset == "eb");
    CHECK(p.fits[0].count == 4);
    CHECK(p.fits[1].count == 4);

    // Each fit is the Gaussian of exactly its dataset's rows.
    for (int k = 0; k < 2; ++k) {
        double mx = 0.0, my = 0.0;
        for (int i = 0; i < 4; ++i) {
            mx += p.points(4 * k + i, 0);
            my += p.points(4 * k + i, 1);
        }
        CHECK(refop::close(p.fits[k].mean[0], mx / 4.0, 1e-12, 1e-12));
        CHECK(refop::close(p.fits[k].mean[1], my / 4.0, 1e-12, 1e-12));
    }

    const embed::Projection p2 = embed::embed_project(enc, reg, codes, ids, 5);
    CHECK((p.points - p2.points).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_WITH_AS(embed::embed_project(enc, reg, codes, {{0, 1}, {0, 1, 2}}, 5),
                         doctest::Contains("at least 3 samples"), std::runtime_error);
    CHECK_THROWS_WITH_AS(embed::embed_project(enc, reg, {codes[0]}, ids, 5),
                         doctest::Contains("out of step"), std::runtime_error);

    data::Registry lone;
    lone.register_dataset(descriptor("solo", tmp.str() + "/ea"));
    CHECK_THROWS_WITH_AS(embed::embed_project(enc, lone, {codes[0]}, {{0, 1, 2}}, 5),
                         doctest::Contains("at least 2 datasets"), std::runtime_error);
}

TEST_CASE("report rows render with stable formatting") {
    std::vector<eval::ReportRow> rows(2);
    rows[0].dataset = "alpha";
    rows[0].checkpoint_epoch = "12";
    rows[0].jaccard_mean = 0.5;
    rows[0].jaccard_std = 0.25;
    rows[1].dataset = "alpha";
    rows[1].checkpoint_epoch = "all";
    rows[1].jaccard_mean = 0.123456789;
    rows[1].jaccard_std = 0.0125;
    rows[1].has_ci = true;
    rows[1].ci_low = 0.1;
    rows[1].ci_high = 0.95;

    const std::string want =
        "dataset,checkpoint_epoch,jaccard_mean,jaccard_std,ci_low,ci_high\n"
        "alpha,12,0.5,0.25,,\n"
        "alpha,all,0.123456789,0.0125,0.1,0.95\n";
    CHECK(eval::render_eval_report(rows) == want);

    TempDir tmp("evreport");
    const std::string path = tmp.str() + "/eval_report.csv";
    eval::write_eval_report(path, rows);
    CHECK(cfg::read_text_file(path) == want);
}

TEST_CASE("embedding tsv and gmm json render the projection") {
    embed::Projection p;
    p.dataset = {"a", "a", "b", "b"};
    p.sample_id = {0, 1, 0, 1};
    p.points.resize(4, 2);
    p.points << 0.5, 1.0, 1.5, 1.0, 8.0, -2.0, 8.0, -4.0;
    embed::GaussianFit fa = embed::fit_gaussian(p.points, {0, 1});
    fa.dataset = "a";
    embed::GaussianFit fb = embed::fit_gaussian(p.points, {2, 3});
    fb.dataset = "b";
    p.fits = {fa, fb};

    const std::string tsv = embed::render_embedding_tsv(p);
    CHECK(tsv ==
          "dataset\tsample_id\tx\ty\n"
          "a\t0\t0.5\t1\n"
          "a\t1\t1.5\t1\n"
          "b\t0\t8\t-2\n"
          "b\t1\t8\t-4\n");

    const nlohmann::json gmm = nlohmann::json::parse(embed::render_gmm_json(p));
    REQUIRE(gmm.is_array());
    REQUIRE(gmm.size() == 2);
    CHECK(gmm[0]["dataset"] == "a");
    CHECK(gmm[0]["count"] == 2);
    CHECK(gmm[0]["mean"][0] == 1.0);
    CHECK(gmm[0]["mean"][1] == 1.0);
    CHECK(gmm[0]["cov"][0][0] == 0.25);
    CHECK(gmm[0]["cov"][0][1] == 0.0);
    CHECK(gmm[1]["dataset"] == "b");
    CHECK(gmm[1]["mean"][0] == 8.0);
    CHECK(gmm[1]["mean"][1] == -3.0);
    CHECK(gmm[1]["cov"][1][1] == 1.0);
    CHECK(embed::render_gmm_json(p).back() == '\n');
}

} // TEST_SUITE
