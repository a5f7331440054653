#include "sslhar/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sslhar {

namespace {

using nlohmann::json;

const std::set<std::string> kModelKinds = {"cnn",      "encdec",      "ladder",      "logreg",
                                           "selftrain", "pseudolabel", "pretrain_cnn"};

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const std::exception&) {
            throw ConfigError(std::string("config key '") + key + "' has the wrong type");
        }
    }
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");

    static const std::set<std::string> known = {
        "data",           "out",
        "model_kind",     "spec",
        "n_labeled",      "window_seconds",
        "overlap",        "sigma",
        "lambdas",        "batch_labeled",
        "batch_unlabeled","learning_rate",
        "beta1",          "beta2",
        "eps_opt",        "max_epochs",
        "patience",       "seed",
        "recon_on_labeled", "transductive",
        "target_train_accuracy", "test_subject",
        "validation_subject",    "l2",
        "logreg_epochs",  "threshold",
        "max_iters",      "alpha_max",
        "ramp_epochs",    "pretrain_epochs"};
    for (const auto& [key, value] : j.items()) {
        if (known.count(key) == 0) throw ConfigError("unknown config key '" + key + "'");
    }

    RunConfig cfg;
    read(j, "data", cfg.data);
    read(j, "out", cfg.out);
    read(j, "model_kind", cfg.model_kind);
    read(j, "spec", cfg.spec);
    read(j, "n_labeled", cfg.n_labeled);
    read(j, "window_seconds", cfg.window_seconds);
    read(j, "overlap", cfg.overlap);
    read(j, "sigma", cfg.sigma);
    read(j, "lambdas", cfg.lambdas);
    read(j, "batch_labeled", cfg.batch_labeled);
    read(j, "batch_unlabeled", cfg.batch_unlabeled);
    read(j, "learning_rate", cfg.learning_rate);
    read(j, "beta1", cfg.beta1);
    read(j, "beta2", cfg.beta2);
    read(j, "eps_opt", cfg.eps_opt);
    read(j, "max_epochs", cfg.max_epochs);
    read(j, "patience", cfg.patience);
    read(j, "seed", cfg.seed);
    read(j, "recon_on_labeled", cfg.recon_on_labeled);
    read(j, "transductive", cfg.transductive);
    read(j, "target_train_accuracy", cfg.target_train_accuracy);
    read(j, "test_subject", cfg.test_subject);
    read(j, "validation_subject", cfg.validation_subject);
    read(j, "l2", cfg.l2);
    read(j, "logreg_epochs", cfg.logreg_epochs);
    read(j, "threshold", cfg.threshold);
    read(j, "max_iters", cfg.max_iters);
    read(j, "alpha_max", cfg.alpha_max);
    read(j, "ramp_epochs", cfg.ramp_epochs);
    read(j, "pretrain_epochs", cfg.pretrain_epochs);
    validate_run_config(cfg);
    return cfg;
}

RunConfig parse_run_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config_text(ss.str());
}

void validate_run_config(const RunConfig& cfg) {
    if (kModelKinds.count(cfg.model_kind) == 0) {
        throw ConfigError("config key 'model_kind' has invalid value '" + cfg.model_kind + "'");
    }
    if (cfg.n_labeled < 1) throw ConfigError("config key 'n_labeled' must be >= 1");
    if (cfg.window_seconds <= 0.0) throw ConfigError("config key 'window_seconds' must be > 0");
    if (cfg.overlap < 0.0 || cfg.overlap >= 1.0) {
        throw ConfigError("config key 'overlap' must be in [0, 1)");
    }
    if (cfg.sigma < 0.0) throw ConfigError("config key 'sigma' must be >= 0");
    if (cfg.batch_labeled < 1) throw ConfigError("config key 'batch_labeled' must be >= 1");
    if (cfg.batch_unlabeled < 0) throw ConfigError("config key 'batch_unlabeled' must be >= 0");
    if (cfg.learning_rate <= 0.0) throw ConfigError("config key 'learning_rate' must be > 0");
    if (cfg.max_epochs < 1) throw ConfigError("config key 'max_epochs' must be >= 1");
    if (cfg.patience < 1) throw ConfigError("config key 'patience' must be >= 1");
    if (cfg.threshold <= 0.0 || cfg.threshold >= 1.0) {
        throw ConfigError("config key 'threshold' must be in (0, 1)");
    }
    if (cfg.alpha_max < 0.0) throw ConfigError("config key 'alpha_max' must be >= 0");
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    j["data"] = cfg.data;
    j["out"] = cfg.out;
    j["model_kind"] = cfg.model_kind;
    j["spec"] = cfg.spec;
    j["n_labeled"] = cfg.n_labeled;
    j["window_seconds"] = cfg.window_seconds;
    j["overlap"] = cfg.overlap;
    j["sigma"] = cfg.sigma;
    j["lambdas"] = cfg.lambdas;
    j["batch_labeled"] = cfg.batch_labeled;
    j["batch_unlabeled"] = cfg.batch_unlabeled;
    j["learning_rate"] = cfg.learning_rate;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["eps_opt"] = cfg.eps_opt;
    j["max_epochs"] = cfg.max_epochs;
    j["patience"] = cfg.patience;
    j["seed"] = cfg.seed;
    j["recon_on_labeled"] = cfg.recon_on_labeled;
    j["transductive"] = cfg.transductive;
    j["target_train_accuracy"] = cfg.target_train_accuracy;
    j["test_subject"] = cfg.test_subject;
    j["validation_subject"] = cfg.validation_subject;
    j["l2"] = cfg.l2;
    j["logreg_epochs"] = cfg.logreg_epochs;
    j["threshold"] = cfg.threshold;
    j["max_iters"] = cfg.max_iters;
    j["alpha_max"] = cfg.alpha_max;
    j["ramp_epochs"] = cfg.ramp_epochs;
    j["pretrain_epochs"] = cfg.pretrain_epochs;
    return j.dump(2);
}

}  // namespace sslhar
