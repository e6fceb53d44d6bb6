// Ranking losses, click-tuple sampling, Adam, and the training loop.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "amc/data.hpp"
#include "amc/model.hpp"
#include "amc/tape.hpp"

namespace amc {

enum class LossMode { kPairwise, kBidirectional };

std::string loss_mode_name(LossMode m);
LossMode loss_mode_from_name(const std::string& name);

struct TrainConfig {
    double margin = 1.0;  // alpha
    int negatives = 3;    // t, negatives per tuple (pairwise mode)
    int batch_size = 128;
    int epochs = 30;
    LossMode loss_mode = LossMode::kPairwise;
    int k_neg = 2;  // negatives per direction (bidirectional mode)
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    double grad_clip = 0.0;  // max global gradient norm; 0 disables
    uint64_t seed = 1;

    void validate() const;
};

/// One training sample: a query, its most-clicked image, and t images with
/// strictly fewer clicks for that query.
struct ClickTuple {
    std::string query_id;
    std::string positive;
    std::vector<std::string> negatives;
};

/// One caption-ranking sample with its sampled contrastive sets.
struct CaptionPair {
    std::string query_id;  // the caption, encoded as a query vector
    std::string image_id;
    std::vector<std::string> negative_queries;
    std::vector<std::string> negative_images;
};

struct TupleSample {
    std::vector<ClickTuple> tuples;
    int skipped_queries = 0;
};

/// Per query: positive = max-click image (ties to the lowest image id);
/// negatives drawn uniformly without replacement from that query's
/// lower-click images, topped up from the global pool. Queries with no
/// negatives available anywhere are skipped and counted. Deterministic for
/// a given (seed, epoch).
TupleSample sample_tuples(const DatasetBundle& bundle, int t, uint64_t seed, uint64_t epoch);

/// One pair per positive click; negatives per direction drawn from
/// non-matching captions/images. Throws ConfigError (instructing a smaller
/// k_neg) when a side has too few candidates.
std::vector<CaptionPair> sample_caption_pairs(const DatasetBundle& bundle, int k_neg,
                                              uint64_t seed, uint64_t epoch);

/// Sum over negatives of max(0, margin - s(q, x+) + s(q, x-_j)); nonnegative,
/// tape-tracked through the full model.
Value ranking_loss(Tape& tape, const ParamNodes& pn, const Hyperparams& hp,
                   const DatasetBundle& bundle, const ClickTuple& tuple, double margin);

/// Both contrastive directions of the caption objective, summed over pairs.
Value caption_ranking_loss(Tape& tape, const ParamNodes& pn, const Hyperparams& hp,
                           const DatasetBundle& bundle, const std::vector<CaptionPair>& batch,
                           double margin);

struct AdamState {
    ModelParams m;  // first moments
    ModelParams v;  // second moments
    long long step = 0;

    static AdamState init(const ModelParams& params);
};

/// Standard bias-corrected Adam update in place. A non-finite gradient
/// aborts the step (state untouched) naming the offending tensor.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;  // mean per tuple (or per pair)
    std::optional<double> held_out;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochLog> log;
    int skipped_queries = 0;
};

/// Called after every epoch with the current parameters.
using EpochCallback = std::function<void(const EpochLog&, const ModelParams&)>;

/// Mini-batch loop: batch loss is the sum over tuples, one Adam step per
/// batch; the logged loss is the epoch mean per tuple. Deterministic for a
/// given config.
TrainResult train(const DatasetBundle& bundle, const TrainConfig& cfg, const Hyperparams& hp,
                  const DatasetBundle* held_out = nullptr,
                  const EpochCallback& on_epoch = nullptr);

/// Mean per-tuple (pairwise) or per-pair (bidirectional) loss at fixed
/// parameters, without tracking gradients.
double evaluate_loss(const DatasetBundle& bundle, const TrainConfig& cfg, const Hyperparams& hp,
                     const ModelParams& params, uint64_t epoch);

}  // namespace amc
