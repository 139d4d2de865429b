#include "isoseg/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "isoseg/rng.hpp"

namespace isoseg::cfg {

using nlohmann::json; // std::map-backed: keys serialize sorted, so dumps are canonical

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
}

template <typename T>
T get_or(const json& j, const char* key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("key \"") + key + "\": " + e.what());
    }
}

data::SyntheticRecipe parse_recipe(const json& j, const std::string& where) {
    check_keys(j, {"task", "count", "seed", "image_size", "style", "shapes"}, where);
    data::SyntheticRecipe r;
    r.task = get_or<std::string>(j, "task", r.task);
    r.count = get_or<int>(j, "count", r.count);
    r.seed = get_or<uint64_t>(j, "seed", r.seed);
    r.image_size = get_or<int>(j, "image_size", r.image_size);
    if (j.contains("style")) {
        const json& s = j.at("style");
        check_keys(s, {"gamma", "bias", "invert", "blur", "noise", "border"}, where + ".style");
        r.style.gamma = get_or<double>(s, "gamma", r.style.gamma);
        r.style.bias = get_or<double>(s, "bias", r.style.bias);
        r.style.invert = get_or<bool>(s, "invert", r.style.invert);
        r.style.blur = get_or<int>(s, "blur", r.style.blur);
        r.style.noise = get_or<double>(s, "noise", r.style.noise);
        r.style.border = get_or<bool>(s, "border", r.style.border);
    }
    if (j.contains("shapes")) {
        const json& s = j.at("shapes");
        check_keys(s, {"lobe_rx", "lobe_ry", "center_dx", "jitter", "clutter"},
                   where + ".shapes");
        r.shapes.lobe_rx = get_or<double>(s, "lobe_rx", r.shapes.lobe_rx);
        r.shapes.lobe_ry = get_or<double>(s, "lobe_ry", r.shapes.lobe_ry);
        r.shapes.center_dx = get_or<double>(s, "center_dx", r.shapes.center_dx);
        r.shapes.jitter = get_or<double>(s, "jitter", r.shapes.jitter);
        r.shapes.clutter = get_or<int>(s, "clutter", r.shapes.clutter);
    }
    if (r.count < 1) throw ConfigError(where + ": count must be >= 1");
    if (r.image_size < 4 || r.image_size % 4 != 0)
        throw ConfigError(where + ": image_size must be a positive multiple of 4");
    return r;
}

json recipe_json(const data::SyntheticRecipe& r) {
    json s{{"gamma", r.style.gamma},
           {"bias", r.style.bias},
           {"invert", r.style.invert},
           {"blur", r.style.blur},
           {"noise", r.style.noise},
           {"border", r.style.border}};
    json f{{"lobe_rx", r.shapes.lobe_rx},
           {"lobe_ry", r.shapes.lobe_ry},
           {"center_dx", r.shapes.center_dx},
           {"jitter", r.shapes.jitter},
           {"clutter", r.shapes.clutter}};
    return json{{"task", r.task},      {"count", r.count},   {"seed", r.seed},
                {"image_size", r.image_size}, {"style", s}, {"shapes", f}};
}

void validate(const ExperimentConfig& c) {
    if (c.out_dir.empty()) throw ConfigError("out_dir must not be empty");
    if (c.datasets.empty()) throw ConfigError("at least one dataset is required");
    std::set<std::string> names;
    for (const auto& d : c.datasets) {
        if (d.name.empty()) throw ConfigError("dataset name must not be empty");
        if (!names.insert(d.name).second)
            throw ConfigError("duplicate dataset name \"" + d.name + "\"");
        if (d.path.empty() == !d.has_recipe)
            throw ConfigError("dataset \"" + d.name + "\": exactly one of path/recipe required");
        if (d.label_fraction < 0.0 || d.label_fraction > 1.0)
            throw ConfigError("dataset \"" + d.name + "\": label_fraction outside [0,1]");
        if (d.task.empty()) throw ConfigError("dataset \"" + d.name + "\": task must be named");
    }
    const TrainSettings& t = c.train;
    if (t.epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (!(t.full_training_fraction > 0.0 && t.full_training_fraction < 1.0))
        throw ConfigError("train.full_training_fraction must lie in (0,1)");
    if (!(t.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (t.weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
    if (t.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (t.iterations_per_epoch < 0) throw ConfigError("train.iterations_per_epoch must be >= 0");
    if (t.latent_variant != "shared" && t.latent_variant != "content-style")
        throw ConfigError("train.latent_variant must be \"shared\" or \"content-style\"");
    if (t.latent_variant == "content-style" && t.style_dim < 1)
        throw ConfigError("train.style_dim must be >= 1 in the content-style variant");
    if (t.base_filters < 1) throw ConfigError("train.base_filters must be >= 1");
    if (t.residual_layers < 0) throw ConfigError("train.residual_layers must be >= 0");
    if (!(t.split_ratio > 0.0 && t.split_ratio < 1.0))
        throw ConfigError("train.split_ratio must lie in (0,1)");
    if (t.weights.lambda_cyc < 0 || t.weights.lambda_adv < 0 || t.weights.lambda_sup < 0 ||
        t.weights.lambda_latent < 0)
        throw ConfigError("train.weights must be nonnegative");
    for (int e : t.checkpoint_epochs)
        if (e < 1 || e > t.epochs)
            throw ConfigError("train.checkpoint_epochs entries must lie in [1, epochs]");
    if (c.eval.samples_per_dataset < 1)
        throw ConfigError("eval.samples_per_dataset must be >= 1");
    if (!(c.eval.threshold > 0.0 && c.eval.threshold < 1.0))
        throw ConfigError("eval.threshold must lie in (0,1)");
}

json to_json(const ExperimentConfig& c) {
    json datasets = json::array();
    for (const auto& d : c.datasets) {
        json e{{"name", d.name}, {"task", d.task}, {"label_fraction", d.label_fraction}};
        if (d.has_recipe)
            e["recipe"] = recipe_json(d.recipe);
        else
            e["path"] = d.path;
        datasets.push_back(e);
    }
    json weights{{"cyc", c.train.weights.lambda_cyc},
                 {"adv", c.train.weights.lambda_adv},
                 {"sup", c.train.weights.lambda_sup},
                 {"latent", c.train.weights.lambda_latent}};
    json train{{"epochs", c.train.epochs},
               {"full_training_fraction", c.train.full_training_fraction},
               {"learning_rate", c.train.learning_rate},
               {"weight_decay", c.train.weight_decay},
               {"batch_size", c.train.batch_size},
               {"iterations_per_epoch", c.train.iterations_per_epoch},
               {"latent_variant", c.train.latent_variant},
               {"style_dim", c.train.style_dim},
               {"base_filters", c.train.base_filters},
               {"residual_layers", c.train.residual_layers},
               {"split_ratio", c.train.split_ratio},
               {"weights", weights},
               {"sup_feedback_to_g", c.train.sup_feedback_to_g},
               {"skip_masked_model_passes", c.train.skip_masked_model_passes},
               {"checkpoint_epochs", c.train.checkpoint_epochs}};
    json eval{{"samples_per_dataset", c.eval.samples_per_dataset},
              {"threshold", c.eval.threshold}};
    return json{{"out_dir", c.out_dir}, {"seed", c.seed}, {"datasets", datasets},
                {"train", train},       {"eval", eval}};
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    check_keys(j, {"out_dir", "seed", "datasets", "train", "eval"}, "config");

    ExperimentConfig c;
    c.out_dir = get_or<std::string>(j, "out_dir", c.out_dir);
    c.seed = get_or<uint64_t>(j, "seed", c.seed);

    if (!j.contains("datasets") || !j.at("datasets").is_array())
        throw ConfigError("config: \"datasets\" array is required");
    for (size_t i = 0; i < j.at("datasets").size(); ++i) {
        const json& e = j.at("datasets")[i];
        const std::string where = "datasets[" + std::to_string(i) + "]";
        check_keys(e, {"name", "path", "recipe", "task", "label_fraction"}, where);
        DatasetConfig d;
        d.name = get_or<std::string>(e, "name", "");
        d.path = get_or<std::string>(e, "path", "");
        d.task = get_or<std::string>(e, "task", d.task);
        d.label_fraction = get_or<double>(e, "label_fraction", d.label_fraction);
        if (e.contains("recipe")) {
            d.has_recipe = true;
            d.recipe = parse_recipe(e.at("recipe"), where + ".recipe");
            d.recipe.task = d.task;
        }
        c.datasets.push_back(std::move(d));
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t,
                   {"epochs", "full_training_fraction", "learning_rate", "weight_decay",
                    "batch_size", "iterations_per_epoch", "latent_variant", "style_dim",
                    "base_filters", "residual_layers", "split_ratio", "weights",
                    "sup_feedback_to_g", "skip_masked_model_passes", "checkpoint_epochs"},
                   "train");
        TrainSettings& s = c.train;
        s.epochs = get_or<int>(t, "epochs", s.epochs);
        s.full_training_fraction =
            get_or<double>(t, "full_training_fraction", s.full_training_fraction);
        s.learning_rate = get_or<double>(t, "learning_rate", s.learning_rate);
        s.weight_decay = get_or<double>(t, "weight_decay", s.weight_decay);
        s.batch_size = get_or<int>(t, "batch_size", s.batch_size);
        s.iterations_per_epoch = get_or<int>(t, "iterations_per_epoch", s.iterations_per_epoch);
        s.latent_variant = get_or<std::string>(t, "latent_variant", s.latent_variant);
        s.style_dim = get_or<int>(t, "style_dim", s.style_dim);
        s.base_filters = get_or<int>(t, "base_filters", s.base_filters);
        s.residual_layers = get_or<int>(t, "residual_layers", s.residual_layers);
        s.split_ratio = get_or<double>(t, "split_ratio", s.split_ratio);
        if (t.contains("weights")) {
            const json& w = t.at("weights");
            check_keys(w, {"cyc", "adv", "sup", "latent"}, "train.weights");
            s.weights.lambda_cyc = get_or<double>(w, "cyc", s.weights.lambda_cyc);
            s.weights.lambda_adv = get_or<double>(w, "adv", s.weights.lambda_adv);
            s.weights.lambda_sup = get_or<double>(w, "sup", s.weights.lambda_sup);
            s.weights.lambda_latent = get_or<double>(w, "latent", s.weights.lambda_latent);
        }
        s.sup_feedback_to_g = get_or<bool>(t, "sup_feedback_to_g", s.sup_feedback_to_g);
        s.skip_masked_model_passes =
            get_or<bool>(t, "skip_masked_model_passes", s.skip_masked_model_passes);
        s.checkpoint_epochs =
            get_or<std::vector<int>>(t, "checkpoint_epochs", s.checkpoint_epochs);
    }

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        check_keys(e, {"samples_per_dataset", "threshold"}, "eval");
        c.eval.samples_per_dataset =
            get_or<int>(e, "samples_per_dataset", c.eval.samples_per_dataset);
        c.eval.threshold = get_or<double>(e, "threshold", c.eval.threshold);
    }

    validate(c);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config(read_text_file(path));
}

std::string serialize_config(const ExperimentConfig& c) {
    validate(c);
    return to_json(c).dump(2) + "\n";
}

uint64_t config_hash(const ExperimentConfig& c) {
    json j = to_json(c);
    j.erase("out_dir");
    return Rng::fnv1a(j.dump());
}

std::string config_hash_hex(const ExperimentConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(c)));
    return std::string(buf);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << text;
    if (!f) throw std::runtime_error("write failure: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace isoseg::cfg
