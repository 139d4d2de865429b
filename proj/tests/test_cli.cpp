#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <initializer_list>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "isoseg/commands.hpp"
#include "isoseg/config.hpp"
#include "isoseg/png_io.hpp"

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

int run_args(std::initializer_list<std::string> args) {
    std::vector<std::string> store(args);
    std::vector<const char*> argv;
    argv.reserve(store.size());
    for (const std::string& s : store) argv.push_back(s.c_str());
    return cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

// Two tiny generated datasets, two epochs, two iterations each: the smallest
// run that still exercises both training phases' file outputs.
std::string mini_config_json(const std::string& out_dir) {
    return std::string("{\n") +
           "  \"out_dir\": \"" + out_dir + "\",\n" +
           "  \"seed\": 3,\n" +
           "  \"datasets\": [\n" +
           "    {\"name\": \"mca\", \"label_fraction\": 1.0,\n" +
           "     \"recipe\": {\"count\": 15, \"seed\": 70, \"image_size\": 16}},\n" +
           "    {\"name\": \"mcb\", \"label_fraction\": 1.0,\n" +
           "     \"recipe\": {\"count\": 15, \"seed\": 71, \"image_size\": 16,\n" +
           "                \"style\": {\"gamma\": 2.2, \"invert\": true}}}\n" +
           "  ],\n" +
           "  \"train\": {\"epochs\": 2, \"iterations_per_epoch\": 2, \"batch_size\": 2,\n" +
           "            \"base_filters\": 8, \"residual_layers\": 1,\n" +
           "            \"learning_rate\": 0.001},\n" +
           "  \"eval\": {\"samples_per_dataset\": 3}\n" +
           "}\n";
}

std::vector<std::string> non_comment_lines(const std::string& text) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        out.push_back(text.substr(pos, end - pos));
        pos = end + 1;
    }
    if (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("config parsing fills defaults and round-trips exactly") {
    const cfg::ExperimentConfig c =
        cfg::parse_config("{\"datasets\": [{\"name\": \"a\", \"path\": \"/x\"}]}");
    CHECK(c.out_dir == "run_out");
    CHECK(c.seed == 0);
    REQUIRE(c.datasets.size() == 1);
    CHECK(c.datasets[0].task == "lobes");
    CHECK(c.datasets[0].label_fraction == 1.0);
    CHECK_FALSE(c.datasets[0].has_recipe);
    CHECK(c.train.epochs == 400);
    CHECK(c.train.full_training_fraction == 0.75);
    CHECK(c.train.learning_rate == 1e-4);
    CHECK(c.train.weight_decay == 1e-5);
    CHECK(c.train.batch_size == 4);
    CHECK(c.train.iterations_per_epoch == 0);
    CHECK(c.train.latent_variant == "shared");
    CHECK(c.train.style_dim == 8);
    CHECK(c.train.base_filters == 32);
    CHECK(c.train.residual_layers == 2);
    CHECK(c.train.split_ratio == 0.8);
    CHECK(c.train.weights.lambda_cyc == 10.0);
    CHECK(c.train.weights.lambda_adv == 1.0);
    CHECK(c.train.weights.lambda_sup == 100.0);
    CHECK(c.train.weights.lambda_latent == 1.0);
    CHECK_FALSE(c.train.sup_feedback_to_g);
    CHECK_FALSE(c.train.skip_masked_model_passes);
    CHECK(c.train.checkpoint_epochs.empty());
    CHECK(c.eval.samples_per_dataset == 50);
    CHECK(c.eval.threshold == 0.5);

    // Non-default everything; serialize -> parse -> serialize is a fixpoint.
    cfg::ExperimentConfig full;
    full.out_dir = "/tmp/somewhere";
    full.seed = 99;
    cfg::DatasetConfig da;
    da.name = "alpha";
    da.path = "/data/alpha";
    da.label_fraction = 0.25;
    cfg::DatasetConfig db;
    db.name = "beta";
    db.has_recipe = true;
    db.recipe.count = 7;
    db.recipe.seed = 12;
    db.recipe.image_size = 32;
    db.recipe.style.gamma = 0.7;
    db.recipe.style.invert = true;
    db.recipe.style.blur = 2;
    db.recipe.shapes.clutter = 9;
    db.label_fraction = 0.0;
    full.datasets = {da, db};
    full.train.epochs = 12;
    full.train.full_training_fraction = 0.5;
    full.train.latent_variant = "content-style";
    full.train.style_dim = 4;
    full.train.checkpoint_epochs = {6, 12};
    full.train.sup_feedback_to_g = true;
    full.eval.samples_per_dataset = 9;

    const std::string text = cfg::serialize_config(full);
    const cfg::ExperimentConfig back = cfg::parse_config(text);
    CHECK(cfg::serialize_config(back) == text);
    CHECK(back.datasets[1].recipe.style.invert);
    CHECK(back.datasets[1].recipe.shapes.clutter == 9);
    CHECK(back.train.checkpoint_epochs == std::vector<int>{6, 12});
}

TEST_CASE("unknown config keys are rejected by name") {
    CHECK_THROWS_WITH_AS(cfg::parse_config("{\"outdir\": \"x\", \"datasets\": []}"),
                         doctest::Contains("unknown key \"outdir\""), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_config("{\"datasets\": [{\"name\": \"a\", \"path\": \"/x\"}],"
                          " \"train\": {\"epoch\": 3}}"),
        doctest::Contains("unknown key \"epoch\""), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_config("{\"datasets\": [{\"name\": \"a\","
                          " \"recipe\": {\"count\": 4, \"style\": {\"gama\": 2.0}}}]}"),
        doctest::Contains("unknown key \"gama\""), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_config("{\"datasets\": [{\"name\": \"a\", \"path\": \"/x\"}],"
                          " \"train\": {\"weights\": {\"cycle\": 1.0}}}"),
        doctest::Contains("unknown key \"cycle\""), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_config("{\"datasets\": [{\"name\": \"a\", \"path\": \"/x\"}],"
                          " \"eval\": {\"samples\": 2}}"),
        doctest::Contains("unknown key \"samples\""), cfg::ConfigError);
}

TEST_CASE("config validation names the broken field") {
    const std::string ds = "\"datasets\": [{\"name\": \"a\", \"path\": \"/x\"}]";
    CHECK_THROWS_WITH_AS(cfg::parse_config("{" + ds + ", \"train\": {\"epochs\": 0}}"),
                         doctest::Contains("epochs"), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_config("{\"datasets\": [{\"name\": \"a\", \"path\": \"/x\","
                          " \"label_fraction\": 1.5}]}"),
        doctest::Contains("label_fraction"), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_config("{" + ds + ", \"train\": {\"latent_variant\": \"foo\"}}"),
        doctest::Contains("latent_variant"), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_config("{\"datasets\": [{\"name\": \"a\", \"path\": \"/x\","
                          " \"recipe\": {\"count\": 4}}]}"),
        doctest::Contains("exactly one of path/recipe"), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(cfg::parse_config("{\"datasets\": [{\"name\": \"a\"}]}"),
                         doctest::Contains("exactly one of path/recipe"), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_config("{\"datasets\": [{\"name\": \"a\", \"path\": \"/x\"},"
                          " {\"name\": \"a\", \"path\": \"/y\"}]}"),
        doctest::Contains("duplicate dataset name"), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_config("{" + ds + ", \"train\": {\"epochs\": 4,"
                          " \"checkpoint_epochs\": [5]}}"),
        doctest::Contains("checkpoint_epochs"), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(cfg::parse_config("{" + ds + ", \"eval\": {\"threshold\": 1.0}}"),
                         doctest::Contains("threshold"), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(cfg::parse_config("not json"), doctest::Contains("parse failure"),
                         cfg::ConfigError);
}

TEST_CASE("config hash ignores the output location but tracks the experiment") {
    cfg::ExperimentConfig a = cfg::parse_config(mini_config_json("/tmp/one"));
    cfg::ExperimentConfig b = cfg::parse_config(mini_config_json("/tmp/two"));
    CHECK(cfg::config_hash(a) == cfg::config_hash(b));
    CHECK(cfg::config_hash_hex(a) == cfg::config_hash_hex(b));
    CHECK(cfg::config_hash_hex(a).size() == 16);
    CHECK(cfg::config_hash_hex(a).find_first_not_of("0123456789abcdef") == std::string::npos);

    b.seed = 4;
    CHECK(cfg::config_hash(a) != cfg::config_hash(b));
    b.seed = a.seed;
    b.train.batch_size = 3;
    CHECK(cfg::config_hash(a) != cfg::config_hash(b));
}

TEST_CASE("run_cli maps error classes to exit codes") {
    CHECK(run_args({"isoseg"}) == 2);                    // missing subcommand
    CHECK(run_args({"isoseg", "nope"}) == 2);            // unknown subcommand
    CHECK(run_args({"isoseg", "train"}) == 2);           // missing required --config
    CHECK(run_args({"isoseg", "train", "--config", "/definitely/not/there.json"}) == 2);
    CHECK(run_args({"isoseg", "--help"}) == 0);
    CHECK(run_args({"isoseg", "train", "--config", "x.json", "--frobnicate"}) == 2);
}

TEST_CASE("cli pipeline drives train, eval, translate, embed and synth end to end") {
    TempDir tmp("clipipe");
    const std::string cfg_path = tmp.str() + "/mini.json";
    const std::string out1 = tmp.str() + "/out1";
    const std::string out2 = tmp.str() + "/out2";
    cfg::write_text_file(cfg_path, mini_config_json(out1));

    // --- train, with a seed override, twice into different out dirs ---
    REQUIRE(run_args({"isoseg", "train", "--config", cfg_path, "--seed", "5"}) == 0);
    CHECK(fs::exists(out1 + "/resolved_config.json"));
    CHECK(fs::exists(out1 + "/train_log.csv"));
    CHECK(fs::exists(out1 + "/ckpt_1.bin"));
    CHECK(fs::exists(out1 + "/ckpt_2.bin"));

    const cfg::ExperimentConfig resolved =
        cfg::parse_config(cfg::read_text_file(out1 + "/resolved_config.json"));
    CHECK(resolved.seed == 5); // --seed landed in the resolved copy

    // Log: one hash comment, one header, 2 epochs * 2 iterations * 3 routines.
    const std::string log1 = cfg::read_text_file(out1 + "/train_log.csv");
    const std::vector<std::string> lines = non_comment_lines(log1);
    REQUIRE(lines.size() >= 2);
    CHECK(lines[0].rfind("# config_hash=", 0) == 0);
    CHECK(lines[1] == "iteration,routine,cyc,adv_g,adv_d,sup,total");
    CHECK(lines.size() == 2 + 12);

    REQUIRE(run_args({"isoseg", "train", "--config", cfg_path, "--seed", "5", "--out", out2}) == 0);
    CHECK(cfg::read_text_file(out2 + "/train_log.csv") == log1);
    CHECK(cfg::read_text_file(out2 + "/ckpt_2.bin") == cfg::read_text_file(out1 + "/ckpt_2.bin"));

    // --- eval over both checkpoints: per-checkpoint rows plus an "all" CI row ---
    REQUIRE(run_args({"isoseg", "eval", "--config", cfg_path, "--seed", "5", "--checkpoint",
                 out1 + "/ckpt_*.bin"}) == 0);
    const std::string report = cfg::read_text_file(out1 + "/eval_report.csv");
    const std::vector<std::string> rlines = non_comment_lines(report);
    REQUIRE(rlines.size() == 1 + 2 * 3); // header + (2 ckpt rows + all) per dataset
    CHECK(rlines[0] == "dataset,checkpoint_epoch,jaccard_mean,jaccard_std,ci_low,ci_high");
    CHECK(rlines[1].rfind("mca,1,", 0) == 0);
    CHECK(rlines[2].rfind("mca,2,", 0) == 0);
    CHECK(rlines[3].rfind("mca,all,", 0) == 0);
    CHECK(rlines[4].rfind("mcb,1,", 0) == 0);
    CHECK(rlines[6].rfind("mcb,all,", 0) == 0);
    // per-checkpoint rows leave the CI cells empty; the "all" row fills them
    CHECK(rlines[1].substr(rlines[1].size() - 2) == ",,");
    CHECK(rlines[3].substr(rlines[3].size() - 2) != ",,");

    // Single checkpoint: the summary row cannot carry an interval.
    REQUIRE(run_args({"isoseg", "eval", "--config", cfg_path, "--seed", "5", "--out", out2,
                 "--checkpoint", out1 + "/ckpt_2.bin"}) == 0);
    const std::vector<std::string> slines =
        non_comment_lines(cfg::read_text_file(out2 + "/eval_report.csv"));
    REQUIRE(slines.size() == 1 + 2 * 2);
    CHECK(slines[2].rfind("mca,all,", 0) == 0);
    CHECK(slines[2].substr(slines[2].size() - 2) == ",,");

    // A dataset whose test samples lack masks is skipped, not fatal: point a
    // path dataset at an images-only copy of mcb.
    const std::string maskless = tmp.str() + "/maskless";
    fs::create_directories(maskless + "/images");
    for (const auto& e : fs::directory_iterator(out1 + "/corpus/mcb/images"))
        fs::copy_file(e.path(), maskless + "/images/" + e.path().filename().string());
    std::string cfg2 = mini_config_json(out1);
    const size_t recipe_pos = cfg2.find("\"recipe\": {\"count\": 15, \"seed\": 71");
    REQUIRE(recipe_pos != std::string::npos);
    const size_t recipe_end = cfg2.find("}}", recipe_pos);
    cfg2.replace(recipe_pos, recipe_end + 2 - recipe_pos, "\"path\": \"" + maskless + "\"");
    const std::string cfg2_path = tmp.str() + "/maskless.json";
    cfg::write_text_file(cfg2_path, cfg2);
    const std::string out3 = tmp.str() + "/out3";
    REQUIRE(run_args({"isoseg", "eval", "--config", cfg2_path, "--seed", "5", "--out", out3,
                 "--checkpoint", out1 + "/ckpt_2.bin"}) == 0);
    const std::string skim = cfg::read_text_file(out3 + "/eval_report.csv");
    CHECK(skim.find("mca,") != std::string::npos);
    CHECK(skim.find("mcb,") == std::string::npos);

    // --- translate: restyle two images from mca into mcb's domain ---
    const std::string tin = tmp.str() + "/tin";
    fs::create_directories(tin);
    fs::copy_file(out1 + "/corpus/mca/images/sample_0000.png", tin + "/sample_0000.png");
    fs::copy_file(out1 + "/corpus/mca/images/sample_0001.png", tin + "/sample_0001.png");
    const std::string tout = tmp.str() + "/tout";
    REQUIRE(run_args({"isoseg", "translate", "--config", cfg_path, "--out", tout, "--checkpoint",
                 out1 + "/ckpt_2.bin", tin, "--source-id", "0", "--target-id", "1"}) == 0);
    std::set<std::string> produced;
    for (const auto& e : fs::directory_iterator(tout)) produced.insert(e.path().filename());
    CHECK(produced == std::set<std::string>{"sample_0000.png", "sample_0001.png"});
    int w = 0, h = 0;
    io::read_png_gray(tout + "/sample_0000.png", w, h);
    CHECK(w == 16);
    CHECK(h == 16);

    CHECK(run_args({"isoseg", "translate", "--config", cfg_path, "--out", tout, "--checkpoint",
               out1 + "/ckpt_2.bin", tin, "--source-id", "7", "--target-id", "1"}) == 2);

    // --- embed: projection artifacts for both datasets ---
    const std::string eout = tmp.str() + "/eout";
    REQUIRE(run_args({"isoseg", "embed", "--config", cfg_path, "--seed", "5", "--out", eout,
                 "--checkpoint", out1 + "/ckpt_2.bin"}) == 0);
    const std::vector<std::string> tsv =
        non_comment_lines(cfg::read_text_file(eout + "/embedding.tsv"));
    REQUIRE(tsv.size() == 1 + 6); // header + 3 test samples per dataset
    CHECK(tsv[0] == "dataset\tsample_id\tx\ty");
    const nlohmann::json gmm =
        nlohmann::json::parse(cfg::read_text_file(eout + "/embedding_gmm.json"));
    REQUIRE(gmm.size() == 2);
    CHECK(gmm[0]["dataset"] == "mca");
    CHECK(gmm[0]["count"] == 3);
    CHECK(gmm[1]["dataset"] == "mcb");

    // Embedding needs a second dataset to compare against.
    std::string cfg1 = "{\"out_dir\": \"" + eout + "\", \"datasets\": [{\"name\": \"solo\"," +
                       " \"path\": \"" + out1 + "/corpus/mca\"}]}";
    const std::string cfg1_path = tmp.str() + "/solo.json";
    cfg::write_text_file(cfg1_path, cfg1);
    CHECK(run_args({"isoseg", "embed", "--config", cfg1_path, "--checkpoint",
               out1 + "/ckpt_2.bin"}) == 2);

    // --- synth: materialize the recipes, reject recipe-free configs ---
    const std::string sout = tmp.str() + "/sout";
    REQUIRE(run_args({"isoseg", "synth", "--config", cfg_path, "--out", sout}) == 0);
    int n_imgs = 0;
    for (const auto& e : fs::directory_iterator(sout + "/corpus/mca/images"))
        n_imgs += e.path().extension() == ".png" ? 1 : 0;
    CHECK(n_imgs == 15);
    CHECK(fs::exists(sout + "/corpus/mcb/masks/lobes/sample_0014.png"));
    CHECK(run_args({"isoseg", "synth", "--config", cfg1_path, "--out", sout}) == 2);
}

} // TEST_SUITE
