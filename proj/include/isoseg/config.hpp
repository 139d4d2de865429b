#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "isoseg/losses.hpp"
#include "isoseg/synth.hpp"

namespace isoseg::cfg {

// Configuration problems exit with status 2; runtime failures with 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    std::string name;
    std::string path; // exactly one of path / recipe is set
    bool has_recipe = false;
    data::SyntheticRecipe recipe;
    std::string task = "lobes";
    double label_fraction = 1.0;
};

struct TrainSettings {
    int epochs = 400;
    double full_training_fraction = 0.75;
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    int batch_size = 4;
    int iterations_per_epoch = 0; // 0 = ceil(max train set size / batch_size)
    std::string latent_variant = "shared"; // or "content-style"
    int style_dim = 8;                     // content-style variant only
    int base_filters = 32;
    int residual_layers = 2;
    double split_ratio = 0.8;
    loss::LossWeights weights;
    bool sup_feedback_to_g = false;       // alternative reading: sup loss also trains G
    bool skip_masked_model_passes = false; // elide model-update work behind empty masks
    std::vector<int> checkpoint_epochs;    // empty = stride rule, keep the last five
};

struct EvalSettings {
    int samples_per_dataset = 50; // embedding subset size
    double threshold = 0.5;       // probability binarization
};

struct ExperimentConfig {
    std::string out_dir = "run_out";
    uint64_t seed = 0;
    std::vector<DatasetConfig> datasets;
    TrainSettings train;
    EvalSettings eval;
};

// Parse + validate. Unknown keys are rejected so typos cannot silently fall
// back to defaults. Throws ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Canonical serialization with every default filled in; parse(serialize(c))
// reproduces c exactly.
std::string serialize_config(const ExperimentConfig& c);

// FNV-1a over the canonical serialization with out_dir removed, so the hash
// names the experiment rather than its output location.
uint64_t config_hash(const ExperimentConfig& c);
std::string config_hash_hex(const ExperimentConfig& c);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

} // namespace isoseg::cfg
