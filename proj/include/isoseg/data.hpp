#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isoseg/rng.hpp"
#include "isoseg/synth.hpp"
#include "isoseg/tensor.hpp"

namespace isoseg::data {

struct DatasetDescriptor {
    int id = -1;
    std::string name;
    std::string path;                      // directory with images/ and masks/
    std::optional<SyntheticRecipe> recipe; // set when the dataset is generated
    std::vector<std::string> tasks;
    double label_fraction = 1.0; // share of train samples exposing masks
};

struct LoadedSample {
    std::string stem;
    std::vector<float> image;  // [-1,1], size*size
    std::vector<uint8_t> mask; // {0,1}; empty when the mask file is missing
};

struct SplitSpec {
    uint64_t seed = 0;
    double train_ratio = 0.8;
    std::vector<int> train_ids;
    std::vector<int> test_ids;
};

struct Batch {
    int dataset_id = -1;
    Tensor images;               // {B,1,H,W}
    Tensor masks;                // {B,1,H,W}, zero where unlabeled
    std::vector<uint8_t> labeled; // B flags; true iff mask valid this batch
    std::vector<int> sample_ids;
};

class Registry {
public:
    // Loads every image (and each task's mask when present) eagerly; id is
    // the insertion index. Throws on duplicate name or unreadable layout.
    int register_dataset(DatasetDescriptor desc);

    int size() const { return static_cast<int>(entries_.size()); }
    const DatasetDescriptor& descriptor(int id) const { return entries_[checked(id)].desc; }
    int sample_count(int id) const {
        return static_cast<int>(entries_[checked(id)].samples.size());
    }
    int image_size(int id) const { return entries_[checked(id)].size; }
    const LoadedSample& sample(int dataset_id, int sample_id) const;
    bool has_mask(int dataset_id, int sample_id) const;

    // File-access instrumentation for split-hygiene checks.
    void set_access_logging(bool on) { log_access_ = on; access_log_.clear(); }
    const std::vector<std::pair<int, int>>& access_log() const { return access_log_; }

private:
    struct Entry {
        DatasetDescriptor desc;
        int size = 0;
        std::vector<LoadedSample> samples;
    };

    int checked(int id) const;

    std::vector<Entry> entries_;
    bool log_access_ = false;
    mutable std::vector<std::pair<int, int>> access_log_;
};

// floor(train_ratio*n) train samples (minimum 1), remainder test;
// deterministic in (seed, n). Warns to stderr when the test side is empty.
SplitSpec make_split(int n_samples, uint64_t seed, double train_ratio = 0.8);

// Label-fraction policy over train ids: exactly max(1, floor(fraction*n))
// ids when fraction > 0, none when fraction == 0. Returned sorted.
std::vector<int> apply_label_fraction(const std::vector<int>& train_ids, double fraction,
                                      uint64_t seed);

// Ordered dataset pair, uniform over the n*(n-1) pairs, a != b.
std::pair<int, int> sample_pair(int n_datasets, Rng& rng);

// B samples drawn uniformly with replacement from `pool`. labeled[i] is true
// iff the sample is inside `labeled_ids` and its mask file existed.
Batch make_batch(const Registry& reg, int dataset_id, const std::vector<int>& pool,
                 const std::vector<int>& labeled_ids, int batch_size, Rng& rng);

// Single-image batch without sampling (evaluation path).
Batch make_eval_batch(const Registry& reg, int dataset_id, int sample_id);

} // namespace isoseg::data
