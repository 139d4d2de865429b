#pragma once

#include <string>
#include <vector>

#include "isoseg/config.hpp"
#include "isoseg/data.hpp"

namespace isoseg::cli {

struct Options {
    std::string config;
    std::string checkpoint; // path, or glob for eval
    std::string out;        // overrides the config's out_dir when nonempty
    long long seed = -1;    // >= 0 overrides the config's seed
    int source_id = 0;
    int target_id = 0;
    std::string input_dir; // translate input images
};

// Applies --out / --seed on top of the loaded file.
cfg::ExperimentConfig load_with_overrides(const Options& opt);

// Registers every configured dataset; recipe datasets are (re)generated
// deterministically under <out_dir>/corpus/<name> first.
void populate_registry(const cfg::ExperimentConfig& c, data::Registry& reg);

// Shell-style expansion; returns matches sorted by name.
std::vector<std::string> expand_glob(const std::string& pattern);

int cmd_train(const Options& opt);
int cmd_eval(const Options& opt);
int cmd_translate(const Options& opt);
int cmd_embed(const Options& opt);
int cmd_synth(const Options& opt);

// Full argument parser + dispatch. Returns the process exit status:
// 0 success, 1 runtime failure, 2 configuration error.
int run_cli(int argc, const char* const* argv);

} // namespace isoseg::cli
