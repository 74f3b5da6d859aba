#include "veloform/config.hpp"

#include "veloform/util.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace veloform {

using nlohmann::json;

json to_json(const LossWeights& w) {
    return {{"lambda_i", w.lambda_i},   {"lambda_s", w.lambda_s},
            {"lambda_v", w.lambda_v},   {"lambda_st", w.lambda_st},
            {"lambda_d", w.lambda_d},   {"lambda_m", w.lambda_m},
            {"lambda_n", w.lambda_n},   {"lambda_recon", w.lambda_recon},
            {"lambda_l", w.lambda_l},   {"alpha", w.alpha},
            {"gamma", w.gamma}};
}

LossWeights weights_from_json(const json& j) {
    LossWeights w;
    w.lambda_i = j.at("lambda_i");
    w.lambda_s = j.at("lambda_s");
    w.lambda_v = j.at("lambda_v");
    w.lambda_st = j.at("lambda_st");
    w.lambda_d = j.at("lambda_d");
    w.lambda_m = j.at("lambda_m");
    w.lambda_n = j.at("lambda_n");
    w.lambda_recon = j.at("lambda_recon");
    w.lambda_l = j.at("lambda_l");
    w.alpha = j.at("alpha");
    w.gamma = j.at("gamma");
    return w;
}

json to_json(const FieldConfig& f) {
    return {{"hidden_layers", f.hidden_layers},
            {"width", f.width},
            {"omega0", f.omega0},
            {"latent_dim", f.latent_dim}};
}

FieldConfig field_config_from_json(const json& j) {
    FieldConfig f;
    f.hidden_layers = j.at("hidden_layers");
    f.width = j.at("width");
    f.omega0 = j.at("omega0");
    f.latent_dim = j.at("latent_dim");
    return f;
}

json to_json(const TrainConfig& c) {
    return {{"time_steps", c.time_steps},
            {"epochs", c.epochs},
            {"steps_per_pair", c.steps_per_pair},
            {"lr_fields", c.lr_fields},
            {"lr_latents", c.lr_latents},
            {"lr_decay", c.lr_decay},
            {"surface_batch", c.surface_batch},
            {"volume_batch", c.volume_batch},
            {"match_batch", c.match_batch},
            {"weights", to_json(c.weights)},
            {"fields", to_json(c.fields)},
            {"latent_reg", c.latent_reg},
            {"seed", c.seed},
            {"checkpoint_interval", c.checkpoint_interval},
            {"integrator", c.train_integrator.scheme == IntegratorConfig::Scheme::Rk4 ? "rk4" : "euler"},
            {"substeps", c.train_integrator.substeps_per_unit},
            {"surface_noise_sigma", c.surface_noise_sigma}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.time_steps = j.at("time_steps");
    c.epochs = j.at("epochs");
    c.steps_per_pair = j.at("steps_per_pair");
    c.lr_fields = j.at("lr_fields");
    c.lr_latents = j.at("lr_latents");
    c.lr_decay = j.value("lr_decay", 1.0);
    c.surface_batch = j.at("surface_batch");
    c.volume_batch = j.at("volume_batch");
    c.match_batch = j.at("match_batch");
    c.weights = weights_from_json(j.at("weights"));
    c.fields = field_config_from_json(j.at("fields"));
    c.latent_reg = j.at("latent_reg");
    c.seed = j.at("seed");
    c.checkpoint_interval = j.at("checkpoint_interval");
    c.train_integrator.scheme = j.at("integrator") == "rk4" ? IntegratorConfig::Scheme::Rk4
                                                            : IntegratorConfig::Scheme::Euler;
    c.train_integrator.substeps_per_unit = j.at("substeps");
    c.surface_noise_sigma = j.at("surface_noise_sigma");
    return c;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream ss(value);
    T out;
    ss >> out;
    if (ss.fail()) throw std::invalid_argument("bad value for config key " + key + ": " + value);
    return out;
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    auto num = [&](auto& field) { field = parse_number<std::decay_t<decltype(field)>>(key, value); };
    if (key == "time_steps") num(cfg.time_steps);
    else if (key == "epochs") num(cfg.epochs);
    else if (key == "steps_per_pair") num(cfg.steps_per_pair);
    else if (key == "lr_fields") num(cfg.lr_fields);
    else if (key == "lr_latents") num(cfg.lr_latents);
    else if (key == "lr_decay") num(cfg.lr_decay);
    else if (key == "surface_batch") num(cfg.surface_batch);
    else if (key == "volume_batch") num(cfg.volume_batch);
    else if (key == "match_batch") num(cfg.match_batch);
    else if (key == "latent_reg") num(cfg.latent_reg);
    else if (key == "seed") num(cfg.seed);
    else if (key == "checkpoint_interval") num(cfg.checkpoint_interval);
    else if (key == "surface_noise_sigma") num(cfg.surface_noise_sigma);
    else if (key == "hidden_layers") num(cfg.fields.hidden_layers);
    else if (key == "width") num(cfg.fields.width);
    else if (key == "omega0") num(cfg.fields.omega0);
    else if (key == "latent_dim") num(cfg.fields.latent_dim);
    else if (key == "lambda_i") num(cfg.weights.lambda_i);
    else if (key == "lambda_s") num(cfg.weights.lambda_s);
    else if (key == "lambda_v") num(cfg.weights.lambda_v);
    else if (key == "lambda_st") num(cfg.weights.lambda_st);
    else if (key == "lambda_d") num(cfg.weights.lambda_d);
    else if (key == "lambda_m") num(cfg.weights.lambda_m);
    else if (key == "lambda_n") num(cfg.weights.lambda_n);
    else if (key == "lambda_recon") num(cfg.weights.lambda_recon);
    else if (key == "lambda_l") num(cfg.weights.lambda_l);
    else if (key == "alpha") num(cfg.weights.alpha);
    else if (key == "gamma") num(cfg.weights.gamma);
    else if (key == "substeps") num(cfg.train_integrator.substeps_per_unit);
    else if (key == "integrator") {
        if (value == "rk4") cfg.train_integrator.scheme = IntegratorConfig::Scheme::Rk4;
        else if (value == "euler") cfg.train_integrator.scheme = IntegratorConfig::Scheme::Euler;
        else throw std::invalid_argument("bad value for config key integrator: " + value);
    } else {
        throw std::invalid_argument("unknown config key: " + key);
    }
}

TrainConfig load_train_config(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key, eq, value;
        if (!(ls >> key)) continue;
        if (!(ls >> eq)) throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                                     ": missing value for key " + key);
        if (eq == "=") {
            if (!(ls >> value))
                throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                            ": missing value for key " + key);
        } else {
            value = eq;
        }
        apply_config_entry(base, key, value);
    }
    return base;
}

}  // namespace veloform
