// The AMC network: query embeddings, visual and language intra-attention,
// inter-attention fusion, and the final correlation score.
//
// Parameters are immutable during evaluation and safe to share read-only
// across threads; training mutates a single instance with one writer.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "amc/tape.hpp"
#include "amc/tensor.hpp"

namespace amc {

/// Which modalities feed the final score (the ablation grid).
enum class Modality {
    kImageOnly,    // cosine(q_m, v_q)
    kKeywordOnly,  // cosine(q_m, k_q)
    kLateFusion,   // w1*cosine(q_m, v_q) + w2*cosine(q_m, k_q), w1/w2 learned
    kFull,         // cosine(q_m, x_q) with inter-attention fusion
};

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& name);

struct Hyperparams {
    int d_q = 0;  // query feature dim
    int d_v = 0;  // image feature channels per grid cell
    int d_k = 0;  // keyword feature dim
    int d = 0;    // shared embedding dim
    int r = 0;    // grid side; image maps are r x r x d_v
    Modality modality = Modality::kFull;

    /// Throws ShapeError unless all dims are >= 1, r >= 1, and the embedding
    /// is a genuine compression (d < d_q and d < d_k).
    void validate() const;

    bool uses_visual() const { return modality != Modality::kKeywordOnly; }
    bool uses_keywords() const { return modality != Modality::kImageOnly; }
};

/// The trainable parameter set. `fusion_w` (two scalars, both 0.5 at init)
/// exists only in the late-fusion configuration.
struct ModelParams {
    Hyperparams hp;
    Tensor query_embed_w, query_embed_b;    // main embedding q_m
    Tensor intent_embed_w, intent_embed_b;  // intent embedding q'
    Tensor visual_proj_w;                   // 1x1 convolution kernel, no bias
    Tensor attn_kernel_w, attn_kernel_b;    // query-guided spatial kernel s_q
    Tensor query_lang_w;                    // query side of the bilinear form
    Tensor keyword_lang_w;                  // keyword side of the bilinear form
    Tensor bilinear_w;                      // bilinear similarity matrix
    Tensor fusion_w;                        // late-fusion weights; empty otherwise

    bool has_fusion() const { return !fusion_w.empty(); }

    /// Visits (name, tensor) pairs in a fixed order; fusion_w last when present.
    void for_each(const std::function<void(const char*, Tensor&)>& fn);
    void for_each(const std::function<void(const char*, const Tensor&)>& fn) const;

    /// Same-shape zero copy, for gradient/moment containers.
    ModelParams zeros_like() const;
};

/// Xavier-uniform weights, zero biases; bit-identical for a given seed.
ModelParams init_params(const Hyperparams& hp, uint64_t seed);

/// Flags which rows of a keyword matrix are real; padding rows never
/// contribute probability mass.
struct KeywordMask {
    std::vector<bool> active;

    static KeywordMask all(int n) { return KeywordMask{std::vector<bool>(static_cast<size_t>(n), true)}; }
    int n_active() const {
        int c = 0;
        for (bool b : active) c += b ? 1 : 0;
        return c;
    }
};

/// Every intermediate of one scoring pass, for diagnostics and tests.
/// Fields not produced by the active modality config stay empty.
struct ForwardTrace {
    Tensor q_m;             // main query embedding (d)
    Tensor q_intent;        // intent embedding (d)
    Tensor v_proj;          // projected image map (r*r x d)
    Tensor s_q;             // spatial attention kernel (d)
    Tensor attn_map;        // M, spatial attention (r x r)
    Tensor v_q;             // attended visual embedding (d)
    Tensor keyword_scores;  // bilinear scores (n)
    Tensor keyword_probs;   // p(K|q) (n)
    Tensor k_q;             // attended keyword embedding (d)
    double c_v = 0.0, c_k = 0.0;  // modality correlations with q_intent
    double p_v = 0.0, p_k = 0.0;  // modality weights (sum to 1)
    Tensor x_q;             // fused multi-modal embedding (d)
    bool keywords_absent = false;
};

/// Tape handles for one attached copy of the parameters.
struct ParamNodes {
    Value query_embed_w, query_embed_b;
    Value intent_embed_w, intent_embed_b;
    Value visual_proj_w;
    Value attn_kernel_w, attn_kernel_b;
    Value query_lang_w, keyword_lang_w, bilinear_w;
    Value fusion_w;  // invalid handle unless late fusion
};

/// Inserts every parameter tensor as a leaf. Tracked leaves receive
/// gradients; pass tracked=false for evaluation-only passes.
ParamNodes attach_params(Tape& tape, const ModelParams& params, bool tracked = true);

enum class QueryEmbed { kMain, kIntent };

/// ReLU(W q + b) with the main or the intent projection; the two use
/// distinct parameters.
Value embed_query(Value q, const ParamNodes& pn, QueryEmbed which);

struct VanOut {
    Value pooled;     // v_q (d)
    Value attn;       // M flattened (r*r)
    Value projected;  // v' (r*r x d)
    Value kernel;     // s_q (d)
};

/// Visual intra-attention: projects the grid with the 1x1 kernel, scores
/// each cell against the query-generated kernel, softmaxes over all r*r
/// cells jointly, and mean-pools the re-weighted map (so attention and
/// pooling contribute a 1/r^2 factor together).
VanOut van_forward(Value q, Value image_map, const ParamNodes& pn, const Hyperparams& hp);

struct LanOut {
    Value pooled;  // k_q (d); zero vector when the modality is absent
    Value probs;   // p(K|q) (n); invalid handle when absent
    Value scores;  // bilinear scores (n); invalid handle when absent
    bool modality_absent = false;
};

/// Language intra-attention: bilinear query-keyword scores, masked softmax,
/// and probability-weighted pooling of the projected keywords. With zero
/// unmasked rows the modality is reported absent and k_q is a zero vector.
LanOut lan_forward(Value q, Value keywords, const KeywordMask& mask, const ParamNodes& pn,
                   const Hyperparams& hp);

struct MtnOut {
    Value fused;    // x_q (d)
    Value weights;  // [p_v, p_k]
    Value corr_v;   // c_v; invalid when the keyword modality is absent
    Value corr_k;   // c_k; invalid when the keyword modality is absent
};

/// Inter-attention: softmax over the cosine correlations of q' with each
/// modality embedding, then the convex combination. An absent keyword
/// modality degenerates to p_v = 1, p_k = 0.
MtnOut mtn_forward(Value q_intent, Value v_q, const LanOut& lan, const ParamNodes& pn);

/// Full correlation score for one (query, image, keywords) triple under the
/// configured modality. Returns the scalar score node; fills `trace` with
/// plain-tensor intermediates when non-null.
Value score(Value q, Value image_map, Value keywords, const KeywordMask& mask,
            const ParamNodes& pn, const Hyperparams& hp, ForwardTrace* trace = nullptr);

}  // namespace amc
