#pragma once

#include <string>
#include <vector>

#include "isoseg/data.hpp"
#include "isoseg/networks.hpp"
#include "isoseg/onehot.hpp"
#include "isoseg/tensor.hpp"

namespace isoseg::eval {

struct ConfusionCounts {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
};

// Pixel counts over two binary masks of equal shape (values 0 or 1).
ConfusionCounts confusion(const Tensor& pred, const Tensor& truth);

// tp / (tp + fn + fp); two empty masks agree perfectly and score 1.0.
double jaccard(const Tensor& pred, const Tensor& truth);

// probability >= threshold becomes 1, else 0.
Tensor binarize(const Tensor& probs, double threshold = 0.5);

// Statistics over checkpoint-level scores. The interval is the two-sided
// t-distribution CI on the mean: half_width = t_{1-p/2, n-1} * s / sqrt(n).
struct MetricSummary {
    std::vector<double> values;
    double mean = 0.0;
    double stddev = 0.0; // sample std, n-1 denominator
    double half_width = 0.0;
};
MetricSummary ensemble_ci(const std::vector<double>& values, double p = 0.05);

// Test-split scoring of one dataset: each image is encoded with its own
// dataset code, segmented, thresholded and scored against its mask.
struct DatasetEval {
    std::vector<double> per_image;
    double mean = 0.0;
    double stddev = 0.0; // sample std over per_image, 0 when fewer than 2
};
DatasetEval evaluate_dataset(net::Encoder& enc, net::SegmenterM& seg, const data::Registry& reg,
                             int dataset_id, const cond::OneHotCode& code,
                             const std::vector<int>& test_ids, double threshold = 0.5);

// One eval_report.csv line: a per-checkpoint row (empty CI cells) or the
// dataset's "all" summary row over checkpoint means.
struct ReportRow {
    std::string dataset;
    std::string checkpoint_epoch; // decimal epoch or "all"
    double jaccard_mean = 0.0;
    double jaccard_std = 0.0;
    bool has_ci = false;
    double ci_low = 0.0;
    double ci_high = 0.0;
};
std::string render_eval_report(const std::vector<ReportRow>& rows);
void write_eval_report(const std::string& path, const std::vector<ReportRow>& rows);

} // namespace isoseg::eval
