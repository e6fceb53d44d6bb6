// Plain-text key=value run configuration with command-line overrides.
// Unknown keys are rejected; '#' starts a comment.

#pragma once

#include <string>
#include <vector>

#include "amc/data.hpp"
#include "amc/model.hpp"
#include "amc/train.hpp"

namespace amc {

struct RunConfig {
    // Paths.
    std::string bundle;      // dataset directory
    std::string checkpoint;  // model file: output of train, input of eval/rank
    std::string out;         // report directory

    // Model.
    std::string modality = "full";
    int embed_dim = 8;  // d

    // Training.
    double margin = 1.0;
    int negatives = 3;
    int batch_size = 128;
    int epochs = 30;
    std::string loss_mode = "pairwise";
    int k_neg = 2;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    double grad_clip = 0.0;
    double holdout_fraction = 0.0;
    uint64_t seed = 1;

    TrainConfig train_config() const;
    /// Binds d_q/d_v/d_k/r from the bundle header to this config's d and
    /// modality; validates the result.
    Hyperparams hyperparams(const DatasetBundle& bundle) const;
};

/// `config_path` may be empty (defaults only). `overrides` are repeatable
/// `key=value` strings applied after the file.
RunConfig parse_run_config(const std::string& config_path,
                           const std::vector<std::string>& overrides);

/// Same file format for the generator: n_queries, n_images,
/// keywords_per_image, d_q, d_v, d_k, r, latent_dim, visual_fraction, noise,
/// distractors_per_query, seed.
SynthSpec parse_synth_spec(const std::string& config_path,
                           const std::vector<std::string>& overrides);

}  // namespace amc
