#include "amc/train.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "amc/rng.hpp"

namespace amc {

std::string loss_mode_name(LossMode m) {
    return m == LossMode::kPairwise ? "pairwise" : "bidirectional";
}

LossMode loss_mode_from_name(const std::string& name) {
    if (name == "pairwise") return LossMode::kPairwise;
    if (name == "bidirectional") return LossMode::kBidirectional;
    throw ConfigError("unknown loss_mode '" + name + "' (expected pairwise or bidirectional)");
}

void TrainConfig::validate() const {
    if (margin <= 0.0) throw ConfigError("margin must be > 0");
    if (negatives < 1) throw ConfigError("negatives must be >= 1");
    if (k_neg < 1) throw ConfigError("k_neg must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (lr <= 0.0) throw ConfigError("lr must be > 0");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0) {
        throw ConfigError("beta1 and beta2 must lie in (0, 1)");
    }
    if (eps_adam <= 0.0) throw ConfigError("eps_adam must be > 0");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0 (0 disables)");
}

TupleSample sample_tuples(const DatasetBundle& bundle, int t, uint64_t seed, uint64_t epoch) {
    if (t < 1) throw ConfigError("negatives per tuple must be >= 1");
    Rng rng = Rng::stream(seed, epoch);
    TupleSample out;

    std::vector<std::string> all_images;
    all_images.reserve(bundle.images.size());
    for (const auto& [id, _] : bundle.images) all_images.push_back(id);

    for (const auto& [qid, rows] : bundle.clicks_by_query()) {
        long long max_count = 0;
        for (const auto& c : rows) max_count = std::max(max_count, c.count);
        std::string positive;
        std::set<std::string> at_max;
        std::vector<std::string> lower;
        for (const auto& c : rows) {
            if (c.count == max_count) {
                at_max.insert(c.image_id);
                if (positive.empty() || c.image_id < positive) positive = c.image_id;
            } else {
                lower.push_back(c.image_id);
            }
        }
        std::sort(lower.begin(), lower.end());

        ClickTuple tuple;
        tuple.query_id = qid;
        tuple.positive = positive;
        rng.shuffle(lower);
        for (const auto& id : lower) {
            if (static_cast<int>(tuple.negatives.size()) == t) break;
            tuple.negatives.push_back(id);
        }
        if (static_cast<int>(tuple.negatives.size()) < t) {
            // Top up from the global pool; anything tied with the positive's
            // click count stays excluded so it has strictly the most clicks.
            std::set<std::string> taken(tuple.negatives.begin(), tuple.negatives.end());
            const size_t available = all_images.size() - at_max.size() - taken.size();
            if (available < static_cast<size_t>(t) - tuple.negatives.size()) {
                ++out.skipped_queries;
                continue;
            }
            while (static_cast<int>(tuple.negatives.size()) < t) {
                const auto& id =
                    all_images[static_cast<size_t>(rng.below(static_cast<long long>(all_images.size())))];
                if (at_max.count(id) || taken.count(id)) continue;
                taken.insert(id);
                tuple.negatives.push_back(id);
            }
        }
        out.tuples.push_back(std::move(tuple));
    }
    rng.shuffle(out.tuples);
    return out;
}

std::vector<CaptionPair> sample_caption_pairs(const DatasetBundle& bundle, int k_neg,
                                              uint64_t seed, uint64_t epoch) {
    if (k_neg < 1) throw ConfigError("k_neg must be >= 1");
    Rng rng = Rng::stream(seed, epoch ^ 0x9e3779b9ULL);

    std::set<std::pair<std::string, std::string>> matches;
    std::vector<CaptionPair> pairs;
    for (const auto& c : bundle.clicks) {
        if (c.count > 0) matches.insert({c.query_id, c.image_id});
    }
    for (const auto& m : matches) pairs.push_back({m.first, m.second, {}, {}});

    std::vector<std::string> all_queries, all_images;
    for (const auto& [id, _] : bundle.queries) all_queries.push_back(id);
    for (const auto& [id, _] : bundle.images) all_images.push_back(id);

    auto sample_negatives = [&](const std::vector<std::string>& pool,
                                const std::function<bool(const std::string&)>& is_match,
                                const char* side) {
        int candidates = 0;
        for (const auto& id : pool) candidates += is_match(id) ? 0 : 1;
        if (candidates < k_neg) {
            throw ConfigError(std::string("only ") + std::to_string(candidates) +
                              " negative " + side + " available; use a smaller k_neg");
        }
        std::vector<std::string> chosen;
        std::set<std::string> taken;
        while (static_cast<int>(chosen.size()) < k_neg) {
            const auto& id =
                pool[static_cast<size_t>(rng.below(static_cast<long long>(pool.size())))];
            if (is_match(id) || taken.count(id)) continue;
            taken.insert(id);
            chosen.push_back(id);
        }
        return chosen;
    };

    for (auto& p : pairs) {
        p.negative_queries = sample_negatives(
            all_queries,
            [&](const std::string& q) { return matches.count({q, p.image_id}) > 0; },
            "captions");
        p.negative_images = sample_negatives(
            all_images,
            [&](const std::string& x) { return matches.count({p.query_id, x}) > 0; },
            "images");
    }
    rng.shuffle(pairs);
    return pairs;
}

namespace {

struct ImageNodes {
    Value map;
    Value keywords;  // invalid when the image has none
    KeywordMask mask;
};

Value fetch_query(Tape& tape, const DatasetBundle& bundle, const std::string& qid) {
    auto it = bundle.queries.find(qid);
    if (it == bundle.queries.end()) throw DataError("unknown query id '" + qid + "'");
    return tape.input(it->second);
}

ImageNodes fetch_image(Tape& tape, const DatasetBundle& bundle, const std::string& iid) {
    auto it = bundle.images.find(iid);
    if (it == bundle.images.end()) throw DataError("unknown image id '" + iid + "'");
    ImageNodes out;
    out.map = tape.input(it->second);
    if (const Tensor* k = bundle.keywords_for(iid)) {
        out.keywords = tape.input(*k);
        out.mask = KeywordMask::all(k->shape[0]);
    }
    return out;
}

Value pair_score(Tape& tape, const ParamNodes& pn, const Hyperparams& hp,
                 const DatasetBundle& bundle, const std::string& qid, const std::string& iid,
                 Value query) {
    ImageNodes img = fetch_image(tape, bundle, iid);
    (void)qid;
    return score(query, img.map, img.keywords, img.mask, pn, hp);
}

}  // namespace

Value ranking_loss(Tape& tape, const ParamNodes& pn, const Hyperparams& hp,
                   const DatasetBundle& bundle, const ClickTuple& tuple, double margin) {
    if (tuple.negatives.empty()) throw ContractError("ranking_loss requires >= 1 negative");
    Value query = fetch_query(tape, bundle, tuple.query_id);
    Value pos = pair_score(tape, pn, hp, bundle, tuple.query_id, tuple.positive, query);
    std::vector<std::pair<double, Value>> hinges;
    hinges.reserve(tuple.negatives.size());
    for (const auto& neg_id : tuple.negatives) {
        Value neg = pair_score(tape, pn, hp, bundle, tuple.query_id, neg_id, query);
        hinges.emplace_back(1.0, relu(lincomb({{-1.0, pos}, {1.0, neg}}, margin)));
    }
    return lincomb(hinges);
}

Value caption_ranking_loss(Tape& tape, const ParamNodes& pn, const Hyperparams& hp,
                           const DatasetBundle& bundle, const std::vector<CaptionPair>& batch,
                           double margin) {
    if (batch.empty()) throw ContractError("caption_ranking_loss requires >= 1 pair");
    std::vector<std::pair<double, Value>> hinges;
    for (const auto& pair : batch) {
        if (pair.negative_queries.empty() || pair.negative_images.empty()) {
            throw ContractError("caption pair is missing sampled negatives");
        }
        Value caption = fetch_query(tape, bundle, pair.query_id);
        Value pos = pair_score(tape, pn, hp, bundle, pair.query_id, pair.image_id, caption);
        // Caption-contrastive: the true image against negative captions.
        for (const auto& neg_q : pair.negative_queries) {
            Value neg_caption = fetch_query(tape, bundle, neg_q);
            Value s = pair_score(tape, pn, hp, bundle, neg_q, pair.image_id, neg_caption);
            hinges.emplace_back(1.0, relu(lincomb({{-1.0, pos}, {1.0, s}}, margin)));
        }
        // Image-contrastive: the true caption against negative images.
        for (const auto& neg_x : pair.negative_images) {
            Value s = pair_score(tape, pn, hp, bundle, pair.query_id, neg_x, caption);
            hinges.emplace_back(1.0, relu(lincomb({{-1.0, pos}, {1.0, s}}, margin)));
        }
    }
    return lincomb(hinges);
}

AdamState AdamState::init(const ModelParams& params) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    s.step = 0;
    return s;
}

namespace {

ModelParams collect_grads(Tape& tape, const ParamNodes& pn, const ModelParams& like) {
    ModelParams g = like.zeros_like();
    g.query_embed_w = tape.gradient(pn.query_embed_w);
    g.query_embed_b = tape.gradient(pn.query_embed_b);
    g.intent_embed_w = tape.gradient(pn.intent_embed_w);
    g.intent_embed_b = tape.gradient(pn.intent_embed_b);
    g.visual_proj_w = tape.gradient(pn.visual_proj_w);
    g.attn_kernel_w = tape.gradient(pn.attn_kernel_w);
    g.attn_kernel_b = tape.gradient(pn.attn_kernel_b);
    g.query_lang_w = tape.gradient(pn.query_lang_w);
    g.keyword_lang_w = tape.gradient(pn.keyword_lang_w);
    g.bilinear_w = tape.gradient(pn.bilinear_w);
    if (like.has_fusion()) g.fusion_w = tape.gradient(pn.fusion_w);
    return g;
}

void clip_grads(ModelParams& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    grads.for_each([&sq](const char*, Tensor& t) {
        for (double v : t.data) sq += v * v;
    });
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    grads.for_each([scale](const char*, Tensor& t) {
        for (double& v : t.data) v *= scale;
    });
}

}  // namespace

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg) {
    grads.for_each([](const char* name, const Tensor& g) {
        if (!g.all_finite()) {
            throw std::runtime_error(std::string("non-finite gradient in ") + name +
                                     "; step aborted");
        }
    });
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    auto update = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
        for (size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g.data[i];
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
            const double m_hat = m.data[i] / bc1;
            const double v_hat = v.data[i] / bc2;
            p.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
        }
    };
    update(params.query_embed_w, grads.query_embed_w, state.m.query_embed_w, state.v.query_embed_w);
    update(params.query_embed_b, grads.query_embed_b, state.m.query_embed_b, state.v.query_embed_b);
    update(params.intent_embed_w, grads.intent_embed_w, state.m.intent_embed_w,
           state.v.intent_embed_w);
    update(params.intent_embed_b, grads.intent_embed_b, state.m.intent_embed_b,
           state.v.intent_embed_b);
    update(params.visual_proj_w, grads.visual_proj_w, state.m.visual_proj_w,
           state.v.visual_proj_w);
    update(params.attn_kernel_w, grads.attn_kernel_w, state.m.attn_kernel_w,
           state.v.attn_kernel_w);
    update(params.attn_kernel_b, grads.attn_kernel_b, state.m.attn_kernel_b,
           state.v.attn_kernel_b);
    update(params.query_lang_w, grads.query_lang_w, state.m.query_lang_w, state.v.query_lang_w);
    update(params.keyword_lang_w, grads.keyword_lang_w, state.m.keyword_lang_w,
           state.v.keyword_lang_w);
    update(params.bilinear_w, grads.bilinear_w, state.m.bilinear_w, state.v.bilinear_w);
    if (params.has_fusion()) {
        update(params.fusion_w, grads.fusion_w, state.m.fusion_w, state.v.fusion_w);
    }
}

double evaluate_loss(const DatasetBundle& bundle, const TrainConfig& cfg, const Hyperparams& hp,
                     const ModelParams& params, uint64_t epoch) {
    Tape tape;
    double total = 0.0;
    long long n = 0;
    if (cfg.loss_mode == LossMode::kPairwise) {
        TupleSample sample = sample_tuples(bundle, cfg.negatives, cfg.seed, epoch);
        for (const auto& tuple : sample.tuples) {
            tape.reset();
            ParamNodes pn = attach_params(tape, params, /*tracked=*/false);
            total += tape.value(ranking_loss(tape, pn, hp, bundle, tuple, cfg.margin)).value();
            ++n;
        }
    } else {
        auto pairs = sample_caption_pairs(bundle, cfg.k_neg, cfg.seed, epoch);
        for (const auto& pair : pairs) {
            tape.reset();
            ParamNodes pn = attach_params(tape, params, /*tracked=*/false);
            total += tape.value(caption_ranking_loss(tape, pn, hp, bundle, {pair}, cfg.margin))
                         .value();
            ++n;
        }
    }
    return n > 0 ? total / static_cast<double>(n) : 0.0;
}

TrainResult train(const DatasetBundle& bundle, const TrainConfig& cfg, const Hyperparams& hp,
                  const DatasetBundle* held_out, const EpochCallback& on_epoch) {
    cfg.validate();
    hp.validate();
    TrainResult out;
    out.params = init_params(hp, cfg.seed);
    AdamState state = AdamState::init(out.params);
    Tape tape;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        long long n_samples = 0;

        auto run_batch = [&](int batch_samples, const std::function<Value(ParamNodes&)>& loss_fn) {
            tape.reset();
            ParamNodes pn = attach_params(tape, out.params, /*tracked=*/true);
            Value loss = loss_fn(pn);
            epoch_loss += tape.value(loss).value();
            n_samples += batch_samples;
            tape.backward(loss);
            ModelParams grads = collect_grads(tape, pn, out.params);
            clip_grads(grads, cfg.grad_clip);
            adam_step(out.params, grads, state, cfg);
        };

        if (cfg.loss_mode == LossMode::kPairwise) {
            TupleSample sample =
                sample_tuples(bundle, cfg.negatives, cfg.seed, static_cast<uint64_t>(epoch));
            if (epoch == 0) out.skipped_queries = sample.skipped_queries;
            for (size_t start = 0; start < sample.tuples.size();
                 start += static_cast<size_t>(cfg.batch_size)) {
                const size_t end =
                    std::min(sample.tuples.size(), start + static_cast<size_t>(cfg.batch_size));
                run_batch(static_cast<int>(end - start), [&](ParamNodes& pn) {
                    std::vector<std::pair<double, Value>> terms;
                    for (size_t i = start; i < end; ++i) {
                        terms.emplace_back(
                            1.0, ranking_loss(tape, pn, hp, bundle, sample.tuples[i], cfg.margin));
                    }
                    return lincomb(terms);
                });
            }
        } else {
            auto pairs =
                sample_caption_pairs(bundle, cfg.k_neg, cfg.seed, static_cast<uint64_t>(epoch));
            for (size_t start = 0; start < pairs.size();
                 start += static_cast<size_t>(cfg.batch_size)) {
                const size_t end =
                    std::min(pairs.size(), start + static_cast<size_t>(cfg.batch_size));
                std::vector<CaptionPair> batch(pairs.begin() + static_cast<long>(start),
                                               pairs.begin() + static_cast<long>(end));
                run_batch(static_cast<int>(end - start), [&](ParamNodes& pn) {
                    return caption_ranking_loss(tape, pn, hp, bundle, batch, cfg.margin);
                });
            }
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = n_samples > 0 ? epoch_loss / static_cast<double>(n_samples) : 0.0;
        if (held_out != nullptr) {
            log.held_out = evaluate_loss(*held_out, cfg, hp, out.params, /*epoch=*/0);
        }
        out.log.push_back(log);
        if (on_epoch) on_epoch(log, out.params);
    }
    return out;
}

}  // namespace amc
