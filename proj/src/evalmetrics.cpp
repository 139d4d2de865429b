#include "isoseg/evalmetrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "isoseg/config.hpp"
#include "isoseg/nn.hpp"

namespace isoseg::eval {

ConfusionCounts confusion(const Tensor& pred, const Tensor& truth) {
    if (!pred.same_shape(truth)) throw std::runtime_error("confusion: mask shape mismatch");
    ConfusionCounts c;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = pred[i] >= 0.5f, t = truth[i] >= 0.5f;
        if (p && t)
            ++c.tp;
        else if (p && !t)
            ++c.fp;
        else if (!p && t)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

double jaccard(const Tensor& pred, const Tensor& truth) {
    const ConfusionCounts c = confusion(pred, truth);
    const long long denom = c.tp + c.fn + c.fp;
    if (denom == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(denom);
}

Tensor binarize(const Tensor& probs, double threshold) {
    Tensor out(probs.shape());
    for (int64_t i = 0; i < probs.numel(); ++i)
        out[i] = probs[i] >= static_cast<float>(threshold) ? 1.0f : 0.0f;
    return out;
}

namespace {

double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

} // namespace

MetricSummary ensemble_ci(const std::vector<double>& values, double p) {
    if (values.size() < 2)
        throw std::runtime_error("ensemble_ci: need at least 2 values, got " +
                                 std::to_string(values.size()));
    MetricSummary s;
    s.values = values;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    s.stddev = sample_std(values, s.mean);
    const boost::math::students_t dist(static_cast<double>(values.size() - 1));
    const double t = boost::math::quantile(dist, 1.0 - p / 2.0);
    s.half_width = t * s.stddev / std::sqrt(static_cast<double>(values.size()));
    return s;
}

DatasetEval evaluate_dataset(net::Encoder& enc, net::SegmenterM& seg, const data::Registry& reg,
                             int dataset_id, const cond::OneHotCode& code,
                             const std::vector<int>& test_ids, double threshold) {
    const std::string& name = reg.descriptor(dataset_id).name;
    if (test_ids.empty())
        throw std::runtime_error("evaluate_dataset: empty test split for dataset \"" + name +
                                 "\"");
    for (int id : test_ids)
        if (!reg.has_mask(dataset_id, id))
            throw std::runtime_error("evaluate_dataset: test split of dataset \"" + name +
                                     "\" has unlabeled sample " + std::to_string(id));

    DatasetEval out;
    nn::Ctx ng;
    ng.grad = false;
    for (int id : test_ids) {
        const data::Batch b = data::make_eval_batch(reg, dataset_id, id);
        const net::LatentCode lat = enc.forward(b.images, code, ng);
        const Tensor probs = seg.forward(lat.content, ng);
        out.per_image.push_back(jaccard(binarize(probs, threshold), b.masks));
    }
    for (double v : out.per_image) out.mean += v;
    out.mean /= static_cast<double>(out.per_image.size());
    out.stddev = sample_std(out.per_image, out.mean);
    return out;
}

std::string render_eval_report(const std::vector<ReportRow>& rows) {
    std::string text = "dataset,checkpoint_epoch,jaccard_mean,jaccard_std,ci_low,ci_high\n";
    char buf[256];
    for (const ReportRow& r : rows) {
        if (r.has_ci)
            std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g,%.9g,%.9g\n", r.dataset.c_str(),
                          r.checkpoint_epoch.c_str(), r.jaccard_mean, r.jaccard_std, r.ci_low,
                          r.ci_high);
        else
            std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g,,\n", r.dataset.c_str(),
                          r.checkpoint_epoch.c_str(), r.jaccard_mean, r.jaccard_std);
        text += buf;
    }
    return text;
}

void write_eval_report(const std::string& path, const std::vector<ReportRow>& rows) {
    cfg::write_text_file(path, render_eval_report(rows));
}

} // namespace isoseg::eval
