#include "isoseg/data.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <stdexcept>

#include "isoseg/png_io.hpp"

namespace isoseg::data {

namespace fs = std::filesystem;

int Registry::checked(int id) const {
    if (id < 0 || id >= size())
        throw std::runtime_error("registry: dataset id " + std::to_string(id) + " out of range");
    return id;
}

int Registry::register_dataset(DatasetDescriptor desc) {
    for (const Entry& e : entries_)
        if (e.desc.name == desc.name)
            throw std::runtime_error("registry: duplicate dataset name '" + desc.name + "'");
    const fs::path images = fs::path(desc.path) / "images";
    if (!fs::is_directory(images))
        throw std::runtime_error("registry: missing images directory " + images.string());
    if (desc.tasks.empty()) throw std::runtime_error("registry: dataset declares no task");
    const fs::path masks = fs::path(desc.path) / "masks" / desc.tasks.front();

    std::vector<std::string> stems;
    for (const auto& de : fs::directory_iterator(images))
        if (de.path().extension() == ".png") stems.push_back(de.path().stem().string());
    if (stems.empty()) throw std::runtime_error("registry: no png images in " + images.string());
    std::sort(stems.begin(), stems.end());

    Entry entry;
    entry.desc = std::move(desc);
    entry.desc.id = size();
    for (const std::string& stem : stems) {
        LoadedSample s;
        s.stem = stem;
        int w = 0, h = 0;
        const std::vector<uint8_t> raw =
            io::read_png_gray((images / (stem + ".png")).string(), w, h);
        if (w != h) throw std::runtime_error("registry: non-square image " + stem);
        if (entry.size == 0)
            entry.size = w;
        else if (entry.size != w)
            throw std::runtime_error("registry: inconsistent image sizes in " +
                                     entry.desc.name);
        s.image.resize(raw.size());
        for (size_t i = 0; i < raw.size(); ++i) s.image[i] = raw[i] / 127.5f - 1.0f;

        const fs::path mpath = masks / (stem + ".png");
        if (fs::exists(mpath)) {
            int mw = 0, mh = 0;
            const std::vector<uint8_t> mraw = io::read_png_gray(mpath.string(), mw, mh);
            if (mw != w || mh != h)
                throw std::runtime_error("registry: mask/image size mismatch for " + stem);
            s.mask.resize(mraw.size());
            for (size_t i = 0; i < mraw.size(); ++i) s.mask[i] = mraw[i] >= 128 ? 1 : 0;
        }
        entry.samples.push_back(std::move(s));
    }
    entries_.push_back(std::move(entry));
    return entries_.back().desc.id;
}

const LoadedSample& Registry::sample(int dataset_id, int sample_id) const {
    const Entry& e = entries_[static_cast<size_t>(checked(dataset_id))];
    if (sample_id < 0 || sample_id >= static_cast<int>(e.samples.size()))
        throw std::runtime_error("registry: sample id out of range");
    if (log_access_) access_log_.emplace_back(dataset_id, sample_id);
    return e.samples[static_cast<size_t>(sample_id)];
}

bool Registry::has_mask(int dataset_id, int sample_id) const {
    const Entry& e = entries_[static_cast<size_t>(checked(dataset_id))];
    return !e.samples[static_cast<size_t>(sample_id)].mask.empty();
}

SplitSpec make_split(int n_samples, uint64_t seed, double train_ratio) {
    if (n_samples < 1) throw std::runtime_error("make_split: empty dataset");
    if (!(train_ratio > 0.0 && train_ratio < 1.0))
        throw std::runtime_error("make_split: train_ratio must be in (0,1)");

    std::vector<int> ids(static_cast<size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) ids[static_cast<size_t>(i)] = i;
    Rng rng = Rng(seed).child(Rng::fnv1a("split"));
    // Fisher-Yates; the hand-rolled draw keeps the permutation bit-portable.
    for (int i = n_samples - 1; i > 0; --i)
        std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(rng.uniform_int(0, i))]);

    int n_train = static_cast<int>(train_ratio * n_samples);
    if (n_train < 1) n_train = 1;

    SplitSpec spec;
    spec.seed = seed;
    spec.train_ratio = train_ratio;
    spec.train_ids.assign(ids.begin(), ids.begin() + n_train);
    spec.test_ids.assign(ids.begin() + n_train, ids.end());
    std::sort(spec.train_ids.begin(), spec.train_ids.end());
    std::sort(spec.test_ids.begin(), spec.test_ids.end());
    if (spec.test_ids.empty())
        std::cerr << "warning: split left no test samples (n=" << n_samples << ")\n";
    return spec;
}

std::vector<int> apply_label_fraction(const std::vector<int>& train_ids, double fraction,
                                      uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::runtime_error("apply_label_fraction: fraction outside [0,1]");
    if (fraction == 0.0 || train_ids.empty()) return {};
    std::vector<int> ids = train_ids;
    Rng rng = Rng(seed).child(Rng::fnv1a("labels"));
    for (int i = static_cast<int>(ids.size()) - 1; i > 0; --i)
        std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(rng.uniform_int(0, i))]);
    int n = static_cast<int>(fraction * static_cast<double>(ids.size()));
    if (n < 1) n = 1;
    if (n > static_cast<int>(ids.size())) n = static_cast<int>(ids.size());
    ids.resize(static_cast<size_t>(n));
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::pair<int, int> sample_pair(int n_datasets, Rng& rng) {
    if (n_datasets < 2) throw std::runtime_error("sample_pair: needs >= 2 datasets");
    const int a = rng.uniform_int(0, n_datasets - 1);
    int b = rng.uniform_int(0, n_datasets - 2);
    if (b >= a) ++b;
    return {a, b};
}

namespace {

Batch assemble(const Registry& reg, int dataset_id, const std::vector<int>& ids,
               const std::vector<int>& labeled_ids) {
    const int S = reg.image_size(dataset_id);
    const int B = static_cast<int>(ids.size());
    Batch batch;
    batch.dataset_id = dataset_id;
    batch.images = Tensor({B, 1, S, S});
    batch.masks = Tensor({B, 1, S, S});
    batch.labeled.assign(static_cast<size_t>(B), 0);
    batch.sample_ids = ids;
    const int64_t hw = static_cast<int64_t>(S) * S;
    for (int b = 0; b < B; ++b) {
        const int sid = ids[static_cast<size_t>(b)];
        const LoadedSample& s = reg.sample(dataset_id, sid);
        std::copy(s.image.begin(), s.image.end(), batch.images.data() + b * hw);
        const bool in_fraction =
            std::binary_search(labeled_ids.begin(), labeled_ids.end(), sid);
        if (in_fraction && !s.mask.empty()) {
            batch.labeled[static_cast<size_t>(b)] = 1;
            float* m = batch.masks.data() + b * hw;
            for (int64_t i = 0; i < hw; ++i) m[i] = s.mask[static_cast<size_t>(i)];
        }
    }
    return batch;
}

} // namespace

Batch make_batch(const Registry& reg, int dataset_id, const std::vector<int>& pool,
                 const std::vector<int>& labeled_ids, int batch_size, Rng& rng) {
    if (batch_size < 1) throw std::runtime_error("make_batch: batch_size must be >= 1");
    if (pool.empty()) throw std::runtime_error("make_batch: empty sample pool");
    std::vector<int> ids(static_cast<size_t>(batch_size));
    for (int b = 0; b < batch_size; ++b)
        ids[static_cast<size_t>(b)] =
            pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
    return assemble(reg, dataset_id, ids, labeled_ids);
}

Batch make_eval_batch(const Registry& reg, int dataset_id, int sample_id) {
    std::vector<int> all{sample_id};
    // Evaluation exposes the mask unconditionally; label fractions only gate
    // training visibility.
    return assemble(reg, dataset_id, all, all);
}

} // namespace isoseg::data
