#include "isoseg/commands.hpp"

#include <glob.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <stdexcept>

#include "CLI11.hpp"
#include "isoseg/embedding.hpp"
#include "isoseg/evalmetrics.hpp"
#include "isoseg/networks.hpp"
#include "isoseg/onehot.hpp"
#include "isoseg/png_io.hpp"
#include "isoseg/trainer.hpp"

namespace fs = std::filesystem;

namespace isoseg::cli {

cfg::ExperimentConfig load_with_overrides(const Options& opt) {
    cfg::ExperimentConfig c = cfg::load_config(opt.config);
    if (!opt.out.empty()) c.out_dir = opt.out;
    if (opt.seed >= 0) c.seed = static_cast<uint64_t>(opt.seed);
    return c;
}

void populate_registry(const cfg::ExperimentConfig& c, data::Registry& reg) {
    for (size_t i = 0; i < c.datasets.size(); ++i) {
        const cfg::DatasetConfig& d = c.datasets[i];
        data::DatasetDescriptor desc;
        desc.name = d.name;
        desc.tasks = {d.task};
        desc.label_fraction = d.label_fraction;
        if (d.has_recipe) {
            desc.recipe = d.recipe;
            desc.path = data::synth_generate(d.recipe, c.out_dir + "/corpus", d.name);
        } else {
            desc.path = d.path;
        }
        reg.register_dataset(std::move(desc));
    }
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    glob_t g{};
    std::vector<std::string> out;
    const int rc = glob(pattern.c_str(), 0, nullptr, &g);
    if (rc == 0)
        for (size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    globfree(&g);
    if (rc != 0 && rc != GLOB_NOMATCH) throw std::runtime_error("glob failed on " + pattern);
    return out;
}

namespace {

net::GeneratorSpec spec_from(const cfg::ExperimentConfig& c, int n_datasets) {
    net::GeneratorSpec s;
    s.n_datasets = n_datasets;
    s.base_filters = c.train.base_filters;
    s.residual_layers = c.train.residual_layers;
    s.style_dim = c.train.latent_variant == "content-style" ? c.train.style_dim : 0;
    return s;
}

std::vector<int> test_subset(const data::SplitSpec& split, int limit) {
    std::vector<int> ids = split.test_ids;
    std::sort(ids.begin(), ids.end());
    if (static_cast<int>(ids.size()) > limit) ids.resize(static_cast<size_t>(limit));
    return ids;
}

} // namespace

int cmd_train(const Options& opt) {
    const cfg::ExperimentConfig c = load_with_overrides(opt);
    data::Registry reg;
    populate_registry(c, reg);
    train::Trainer trainer(c, reg);
    trainer.run_experiment();
    return 0;
}

int cmd_eval(const Options& opt) {
    const cfg::ExperimentConfig c = load_with_overrides(opt);
    data::Registry reg;
    populate_registry(c, reg);

    std::vector<std::string> ckpts = expand_glob(opt.checkpoint);
    if (ckpts.empty()) throw std::runtime_error("no checkpoints match " + opt.checkpoint);

    const net::GeneratorSpec gspec = spec_from(c, reg.size());
    net::Encoder enc(gspec);
    net::SegmenterM seg(enc.content_channels());
    std::vector<nn::Param*> ps;
    enc.collect_params(ps);
    seg.collect_params(ps);

    // (dataset -> per-checkpoint rows); epochs read from the files so the
    // glob's name order never matters.
    std::vector<std::vector<eval::ReportRow>> rows(reg.size());
    std::vector<std::vector<double>> means(reg.size());
    std::vector<bool> skipped(reg.size(), false);
    std::vector<std::vector<int>> test_ids(reg.size());
    for (int k = 0; k < reg.size(); ++k) {
        const data::SplitSpec split = data::make_split(
            reg.sample_count(k), train::split_seed(c.seed, c.datasets[k].name),
            c.train.split_ratio);
        test_ids[k] = split.test_ids;
        for (int id : split.test_ids)
            if (!reg.has_mask(k, id)) skipped[k] = true;
        if (skipped[k])
            std::cerr << "warning: dataset \"" << c.datasets[k].name
                      << "\" has unlabeled test samples; skipping its evaluation\n";
    }

    struct Scored {
        int epoch;
        std::vector<eval::DatasetEval> per_dataset;
    };
    std::vector<Scored> scored;
    for (const std::string& path : ckpts) {
        Scored s;
        s.epoch = train::load_checkpoint_params(path, ps);
        for (int k = 0; k < reg.size(); ++k) {
            if (skipped[k]) {
                s.per_dataset.emplace_back();
                continue;
            }
            s.per_dataset.push_back(eval::evaluate_dataset(enc, seg, reg, k,
                                                           cond::encode_onehot(k, reg.size()),
                                                           test_ids[k], c.eval.threshold));
        }
        scored.push_back(std::move(s));
    }
    std::sort(scored.begin(), scored.end(),
              [](const Scored& a, const Scored& b) { return a.epoch < b.epoch; });

    for (const Scored& s : scored)
        for (int k = 0; k < reg.size(); ++k) {
            if (skipped[k]) continue;
            eval::ReportRow r;
            r.dataset = c.datasets[k].name;
            r.checkpoint_epoch = std::to_string(s.epoch);
            r.jaccard_mean = s.per_dataset[k].mean;
            r.jaccard_std = s.per_dataset[k].stddev;
            rows[k].push_back(r);
            means[k].push_back(s.per_dataset[k].mean);
        }

    if (ckpts.size() < 2)
        std::cerr << "warning: single checkpoint; confidence intervals left empty\n";
    std::vector<eval::ReportRow> flat;
    for (int k = 0; k < reg.size(); ++k) {
        if (skipped[k]) continue;
        for (const eval::ReportRow& r : rows[k]) flat.push_back(r);
        eval::ReportRow all;
        all.dataset = c.datasets[k].name;
        all.checkpoint_epoch = "all";
        if (means[k].size() >= 2) {
            const eval::MetricSummary s = eval::ensemble_ci(means[k]);
            all.jaccard_mean = s.mean;
            all.jaccard_std = s.stddev;
            all.has_ci = true;
            all.ci_low = s.mean - s.half_width;
            all.ci_high = s.mean + s.half_width;
        } else {
            all.jaccard_mean = means[k].empty() ? 0.0 : means[k][0];
            all.jaccard_std = 0.0;
        }
        flat.push_back(all);
    }

    fs::create_directories(c.out_dir);
    eval::write_eval_report(c.out_dir + "/eval_report.csv", flat);
    return 0;
}

int cmd_translate(const Options& opt) {
    const cfg::ExperimentConfig c = load_with_overrides(opt);
    const int n = static_cast<int>(c.datasets.size());
    if (opt.source_id < 0 || opt.source_id >= n || opt.target_id < 0 || opt.target_id >= n)
        throw cfg::ConfigError("translate: dataset id out of range [0, " + std::to_string(n) +
                               ")");

    const net::GeneratorSpec gspec = spec_from(c, n);
    net::Encoder enc(gspec);
    net::Decoder dec(gspec);
    std::vector<nn::Param*> ps;
    enc.collect_params(ps);
    dec.collect_params(ps);
    train::load_checkpoint_params(opt.checkpoint, ps);

    std::vector<std::string> inputs = expand_glob(opt.input_dir + "/*.png");
    if (inputs.empty()) throw std::runtime_error("no .png inputs in " + opt.input_dir);
    fs::create_directories(c.out_dir);

    const cond::OneHotCode hs = cond::encode_onehot(opt.source_id, n);
    const cond::OneHotCode ht = cond::encode_onehot(opt.target_id, n);
    nn::Ctx ng;
    ng.grad = false;
    for (const std::string& path : inputs) {
        int w = 0, h = 0;
        const std::vector<uint8_t> raw = io::read_png_gray(path, w, h);
        Tensor x({1, 1, h, w});
        for (int i = 0; i < w * h; ++i) x[i] = static_cast<float>(raw[i]) / 127.5f - 1.0f;

        const net::LatentCode lat = enc.forward(x, hs, ng);
        Tensor zstyle;
        if (gspec.style_dim > 0) zstyle = Tensor({1, gspec.style_dim, 1, 1});
        const Tensor y = dec.forward(lat.content, ht, gspec.style_dim > 0 ? &zstyle : nullptr, ng);

        std::vector<uint8_t> out(static_cast<size_t>(w) * h);
        for (int i = 0; i < w * h; ++i) {
            const float v = (std::clamp(y[i], -1.0f, 1.0f) + 1.0f) * 127.5f;
            out[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v));
        }
        const std::string stem = fs::path(path).stem().string();
        io::write_png_gray(c.out_dir + "/" + stem + ".png", out.data(), w, h);
    }
    return 0;
}

int cmd_embed(const Options& opt) {
    const cfg::ExperimentConfig c = load_with_overrides(opt);
    if (c.datasets.size() < 2) throw cfg::ConfigError("embed needs at least 2 datasets");
    data::Registry reg;
    populate_registry(c, reg);

    const net::GeneratorSpec gspec = spec_from(c, reg.size());
    net::Encoder enc(gspec);
    std::vector<nn::Param*> ps;
    enc.collect_params(ps);
    train::load_checkpoint_params(opt.checkpoint, ps);

    std::vector<cond::OneHotCode> codes;
    std::vector<std::vector<int>> ids;
    for (int k = 0; k < reg.size(); ++k) {
        codes.push_back(cond::encode_onehot(k, reg.size()));
        const data::SplitSpec split = data::make_split(
            reg.sample_count(k), train::split_seed(c.seed, c.datasets[k].name),
            c.train.split_ratio);
        ids.push_back(test_subset(split, c.eval.samples_per_dataset));
    }

    const embed::Projection proj = embed::embed_project(enc, reg, codes, ids, c.seed);
    fs::create_directories(c.out_dir);
    cfg::write_text_file(c.out_dir + "/embedding.tsv", embed::render_embedding_tsv(proj));
    cfg::write_text_file(c.out_dir + "/embedding_gmm.json", embed::render_gmm_json(proj));
    return 0;
}

int cmd_synth(const Options& opt) {
    const cfg::ExperimentConfig c = load_with_overrides(opt);
    int generated = 0;
    for (const cfg::DatasetConfig& d : c.datasets)
        if (d.has_recipe) {
            data::synth_generate(d.recipe, c.out_dir + "/corpus", d.name);
            ++generated;
        }
    if (generated == 0) throw cfg::ConfigError("synth: no dataset in the config has a recipe");
    return 0;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"multi-dataset translation + segmentation over a shared latent"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&opt](CLI::App* sub, bool need_ckpt) {
        sub->add_option("--config", opt.config, "experiment config (json)")->required();
        sub->add_option("--out", opt.out, "override the config's out_dir");
        sub->add_option("--seed", opt.seed, "override the config's seed");
        auto* ck = sub->add_option("--checkpoint", opt.checkpoint, "checkpoint path or glob");
        if (need_ckpt) ck->required();
    };

    CLI::App* train = app.add_subcommand("train", "run the full training loop");
    add_common(train, false);
    CLI::App* eval = app.add_subcommand("eval", "score checkpoints on test splits");
    add_common(eval, true);
    CLI::App* translate = app.add_subcommand("translate", "restyle images between datasets");
    add_common(translate, true);
    translate->add_option("input_dir", opt.input_dir, "directory of input .png images")
        ->required();
    translate->add_option("--source-id", opt.source_id, "index of the inputs' dataset")
        ->required();
    translate->add_option("--target-id", opt.target_id, "index of the style to decode into")
        ->required();
    CLI::App* embed = app.add_subcommand("embed", "project latents to 2D with Gaussian fits");
    add_common(embed, true);
    CLI::App* synth = app.add_subcommand("synth", "generate the config's synthetic datasets");
    add_common(synth, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(opt);
        if (app.got_subcommand(eval)) return cmd_eval(opt);
        if (app.got_subcommand(translate)) return cmd_translate(opt);
        if (app.got_subcommand(embed)) return cmd_embed(opt);
        if (app.got_subcommand(synth)) return cmd_synth(opt);
    } catch (const cfg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace isoseg::cli
