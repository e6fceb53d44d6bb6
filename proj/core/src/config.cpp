#include "amc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

namespace amc {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues read_pairs(const std::string& config_path, const std::vector<std::string>& overrides) {
    KeyValues kvs;
    if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) throw ConfigError(config_path + ": cannot open config file");
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
            line = trim(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(config_path + ":" + std::to_string(lineno) +
                                  ": expected key=value, got '" + line + "'");
            }
            kvs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }
    for (const auto& s : overrides) {
        auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("override '" + s + "' is not key=value");
        }
        kvs.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return kvs;
}

class Schema {
public:
    void field(const std::string& key, std::string* p) {
        setters_[key] = [p](const std::string& v) { *p = v; };
    }
    void field(const std::string& key, int* p) {
        setters_[key] = [p, key](const std::string& v) { *p = parse_ll(key, v); };
    }
    void field(const std::string& key, double* p) {
        setters_[key] = [p, key](const std::string& v) {
            char* end = nullptr;
            const double d = std::strtod(v.c_str(), &end);
            if (end == v.c_str() || *end != '\0') {
                throw ConfigError("key '" + key + "': bad number '" + v + "'");
            }
            *p = d;
        };
    }
    void field(const std::string& key, bool* p) {
        setters_[key] = [p, key](const std::string& v) {
            if (v == "1" || v == "true") *p = true;
            else if (v == "0" || v == "false") *p = false;
            else throw ConfigError("key '" + key + "': expected 0/1, got '" + v + "'");
        };
    }
    void field(const std::string& key, uint64_t* p) {
        setters_[key] = [p, key](const std::string& v) {
            *p = static_cast<uint64_t>(parse_ll(key, v));
        };
    }

    void apply(const KeyValues& kvs) const {
        for (const auto& [key, value] : kvs) {
            auto it = setters_.find(key);
            if (it == setters_.end()) {
                throw ConfigError("unknown config key '" + key + "'");
            }
            it->second(value);
        }
    }

private:
    static long long parse_ll(const std::string& key, const std::string& v) {
        char* end = nullptr;
        const long long n = std::strtoll(v.c_str(), &end, 10);
        if (end == v.c_str() || *end != '\0') {
            throw ConfigError("key '" + key + "': bad integer '" + v + "'");
        }
        return n;
    }

    std::map<std::string, std::function<void(const std::string&)>> setters_;
};

}  // namespace

TrainConfig RunConfig::train_config() const {
    TrainConfig tc;
    tc.margin = margin;
    tc.negatives = negatives;
    tc.batch_size = batch_size;
    tc.epochs = epochs;
    tc.loss_mode = loss_mode_from_name(loss_mode);
    tc.k_neg = k_neg;
    tc.lr = lr;
    tc.beta1 = beta1;
    tc.beta2 = beta2;
    tc.eps_adam = eps_adam;
    tc.grad_clip = grad_clip;
    tc.seed = seed;
    tc.validate();
    return tc;
}

Hyperparams RunConfig::hyperparams(const DatasetBundle& b) const {
    Hyperparams hp;
    hp.d_q = b.d_q;
    hp.d_v = b.d_v;
    hp.d_k = b.d_k;
    hp.r = b.r;
    hp.d = embed_dim;
    hp.modality = modality_from_name(modality);
    hp.validate();
    return hp;
}

RunConfig parse_run_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
    RunConfig c;
    Schema schema;
    schema.field("bundle", &c.bundle);
    schema.field("checkpoint", &c.checkpoint);
    schema.field("out", &c.out);
    schema.field("modality", &c.modality);
    schema.field("embed_dim", &c.embed_dim);
    schema.field("margin", &c.margin);
    schema.field("negatives", &c.negatives);
    schema.field("batch_size", &c.batch_size);
    schema.field("epochs", &c.epochs);
    schema.field("loss_mode", &c.loss_mode);
    schema.field("k_neg", &c.k_neg);
    schema.field("lr", &c.lr);
    schema.field("beta1", &c.beta1);
    schema.field("beta2", &c.beta2);
    schema.field("eps_adam", &c.eps_adam);
    schema.field("grad_clip", &c.grad_clip);
    schema.field("holdout_fraction", &c.holdout_fraction);
    schema.field("seed", &c.seed);
    schema.apply(read_pairs(config_path, overrides));
    if (c.holdout_fraction < 0.0 || c.holdout_fraction >= 1.0) {
        throw ConfigError("holdout_fraction must lie in [0, 1)");
    }
    modality_from_name(c.modality);   // reject bad names early
    loss_mode_from_name(c.loss_mode);
    return c;
}

SynthSpec parse_synth_spec(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
    SynthSpec s;
    Schema schema;
    schema.field("n_queries", &s.n_queries);
    schema.field("n_images", &s.n_images);
    schema.field("keywords_per_image", &s.keywords_per_image);
    schema.field("d_q", &s.d_q);
    schema.field("d_v", &s.d_v);
    schema.field("d_k", &s.d_k);
    schema.field("r", &s.r);
    schema.field("latent_dim", &s.latent_dim);
    schema.field("visual_fraction", &s.visual_fraction);
    schema.field("noise", &s.noise);
    schema.field("distractors_per_query", &s.distractors_per_query);
    schema.field("relevant_per_query", &s.relevant_per_query);
    schema.field("plant_decoys", &s.plant_decoys);
    schema.field("plant_confounders", &s.plant_confounders);
    schema.field("seed", &s.seed);
    schema.apply(read_pairs(config_path, overrides));
    s.validate();
    return s;
}

}  // namespace amc
