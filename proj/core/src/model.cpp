#include "amc/model.hpp"

#include <cmath>

#include "amc/rng.hpp"

namespace amc {

std::string modality_name(Modality m) {
    switch (m) {
        case Modality::kImageOnly: return "img-only";
        case Modality::kKeywordOnly: return "key-only";
        case Modality::kLateFusion: return "late-fusion";
        case Modality::kFull: return "full";
    }
    throw ContractError("unknown modality");
}

Modality modality_from_name(const std::string& name) {
    if (name == "img-only") return Modality::kImageOnly;
    if (name == "key-only") return Modality::kKeywordOnly;
    if (name == "late-fusion") return Modality::kLateFusion;
    if (name == "full") return Modality::kFull;
    throw ConfigError("unknown modality '" + name +
                      "' (expected img-only, key-only, late-fusion, or full)");
}

void Hyperparams::validate() const {
    if (d_q < 1 || d_v < 1 || d_k < 1 || d < 1 || r < 1) {
        throw ShapeError("hyperparams must all be >= 1 (d_q=" + std::to_string(d_q) +
                         " d_v=" + std::to_string(d_v) + " d_k=" + std::to_string(d_k) +
                         " d=" + std::to_string(d) + " r=" + std::to_string(r) + ")");
    }
    if (d >= d_q || d >= d_k) {
        throw ShapeError("embedding dim d=" + std::to_string(d) +
                         " must be smaller than d_q=" + std::to_string(d_q) + " and d_k=" +
                         std::to_string(d_k));
    }
}

void ModelParams::for_each(const std::function<void(const char*, Tensor&)>& fn) {
    fn("query_embed_w", query_embed_w);
    fn("query_embed_b", query_embed_b);
    fn("intent_embed_w", intent_embed_w);
    fn("intent_embed_b", intent_embed_b);
    fn("visual_proj_w", visual_proj_w);
    fn("attn_kernel_w", attn_kernel_w);
    fn("attn_kernel_b", attn_kernel_b);
    fn("query_lang_w", query_lang_w);
    fn("keyword_lang_w", keyword_lang_w);
    fn("bilinear_w", bilinear_w);
    if (has_fusion()) fn("fusion_w", fusion_w);
}

void ModelParams::for_each(const std::function<void(const char*, const Tensor&)>& fn) const {
    const_cast<ModelParams*>(this)->for_each(
        [&fn](const char* name, Tensor& t) { fn(name, t); });
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z;
    z.hp = hp;
    for_each([&z](const char* name, const Tensor& t) {
        // Mirror structure; relies on for_each visiting every member.
        Tensor zero = Tensor::zeros(t.shape);
        std::string n = name;
        if (n == "query_embed_w") z.query_embed_w = std::move(zero);
        else if (n == "query_embed_b") z.query_embed_b = std::move(zero);
        else if (n == "intent_embed_w") z.intent_embed_w = std::move(zero);
        else if (n == "intent_embed_b") z.intent_embed_b = std::move(zero);
        else if (n == "visual_proj_w") z.visual_proj_w = std::move(zero);
        else if (n == "attn_kernel_w") z.attn_kernel_w = std::move(zero);
        else if (n == "attn_kernel_b") z.attn_kernel_b = std::move(zero);
        else if (n == "query_lang_w") z.query_lang_w = std::move(zero);
        else if (n == "keyword_lang_w") z.keyword_lang_w = std::move(zero);
        else if (n == "bilinear_w") z.bilinear_w = std::move(zero);
        else if (n == "fusion_w") z.fusion_w = std::move(zero);
    });
    return z;
}

namespace {

Tensor xavier_uniform(Rng& rng, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t = Tensor::zeros(Shape{fan_in, fan_out});
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

ModelParams init_params(const Hyperparams& hp, uint64_t seed) {
    hp.validate();
    Rng rng(seed);
    ModelParams p;
    p.hp = hp;
    p.query_embed_w = xavier_uniform(rng, hp.d_q, hp.d);
    p.query_embed_b = Tensor::zeros(Shape{hp.d});
    p.intent_embed_w = xavier_uniform(rng, hp.d_q, hp.d);
    p.intent_embed_b = Tensor::zeros(Shape{hp.d});
    p.visual_proj_w = xavier_uniform(rng, hp.d_v, hp.d);
    p.attn_kernel_w = xavier_uniform(rng, hp.d_q, hp.d);
    p.attn_kernel_b = Tensor::zeros(Shape{hp.d});
    p.query_lang_w = xavier_uniform(rng, hp.d_q, hp.d);
    p.keyword_lang_w = xavier_uniform(rng, hp.d_k, hp.d);
    p.bilinear_w = xavier_uniform(rng, hp.d, hp.d);
    if (hp.modality == Modality::kLateFusion) {
        p.fusion_w = Tensor::filled(Shape{2}, 0.5);
    }
    return p;
}

ParamNodes attach_params(Tape& tape, const ModelParams& params, bool tracked) {
    auto put = [&](const Tensor& t) { return tracked ? tape.param(t) : tape.input(t); };
    ParamNodes pn;
    pn.query_embed_w = put(params.query_embed_w);
    pn.query_embed_b = put(params.query_embed_b);
    pn.intent_embed_w = put(params.intent_embed_w);
    pn.intent_embed_b = put(params.intent_embed_b);
    pn.visual_proj_w = put(params.visual_proj_w);
    pn.attn_kernel_w = put(params.attn_kernel_w);
    pn.attn_kernel_b = put(params.attn_kernel_b);
    pn.query_lang_w = put(params.query_lang_w);
    pn.keyword_lang_w = put(params.keyword_lang_w);
    pn.bilinear_w = put(params.bilinear_w);
    if (params.has_fusion()) pn.fusion_w = put(params.fusion_w);
    return pn;
}

Value embed_query(Value q, const ParamNodes& pn, QueryEmbed which) {
    const bool main = which == QueryEmbed::kMain;
    Value w = main ? pn.query_embed_w : pn.intent_embed_w;
    Value b = main ? pn.query_embed_b : pn.intent_embed_b;
    return relu(add(matmul(q, w), b));
}

VanOut van_forward(Value q, Value image_map, const ParamNodes& pn, const Hyperparams& hp) {
    Tape& t = *q.tape;
    const Tensor& v = t.value(image_map);
    if (v.shape.rank() != 3 || v.shape[0] != hp.r || v.shape[1] != hp.r ||
        v.shape[2] != hp.d_v) {
        throw ShapeError("image map shape " + v.shape.str() + " does not match [" +
                         std::to_string(hp.r) + "x" + std::to_string(hp.r) + "x" +
                         std::to_string(hp.d_v) + "]");
    }
    const int cells = hp.r * hp.r;
    VanOut out;
    Value grid = reshape(image_map, Shape{cells, hp.d_v});
    out.projected = matmul(grid, pn.visual_proj_w);  // 1x1 convolution, no bias
    out.kernel = relu(add(matmul(q, pn.attn_kernel_w), pn.attn_kernel_b));
    Value logits = matmul(out.projected, out.kernel);
    out.attn = softmax(logits);  // joint distribution over all r*r cells
    out.pooled = mean_rows(row_scale(out.projected, out.attn));
    return out;
}

LanOut lan_forward(Value q, Value keywords, const KeywordMask& mask, const ParamNodes& pn,
                   const Hyperparams& hp) {
    Tape& t = *q.tape;
    LanOut out;
    if (mask.n_active() == 0) {
        out.modality_absent = true;
        out.pooled = t.input(Tensor::zeros(Shape{hp.d}));
        return out;
    }
    if (!keywords.valid()) {
        throw ContractError("lan_forward: active mask rows but no keyword tensor");
    }
    const Tensor& k = t.value(keywords);
    if (k.shape.rank() != 2 || k.shape[1] != hp.d_k) {
        throw ShapeError("keyword matrix shape " + k.shape.str() + " does not match [n x " +
                         std::to_string(hp.d_k) + "]");
    }
    if (static_cast<size_t>(k.shape[0]) != mask.active.size()) {
        throw ShapeError("keyword mask covers " + std::to_string(mask.active.size()) +
                         " rows but matrix has " + std::to_string(k.shape[0]));
    }
    Value projected = matmul(keywords, pn.keyword_lang_w);           // n x d
    Value query_side = matmul(matmul(q, pn.query_lang_w), pn.bilinear_w);  // d
    out.scores = matmul(projected, query_side);                      // n
    out.probs = masked_softmax(out.scores, mask.active);
    out.pooled = matmul(out.probs, projected);                       // d
    return out;
}

MtnOut mtn_forward(Value q_intent, Value v_q, const LanOut& lan, const ParamNodes&) {
    Tape& t = *q_intent.tape;
    MtnOut out;
    if (lan.modality_absent) {
        // Degenerate softmax over the single present modality.
        out.weights = t.input(Tensor::from(Shape{2}, {1.0, 0.0}));
        out.fused = v_q;
        return out;
    }
    out.corr_v = cosine(q_intent, v_q);
    out.corr_k = cosine(q_intent, lan.pooled);
    out.weights = softmax(pack({out.corr_v, out.corr_k}));
    Value p_v = at(out.weights, 0);
    Value p_k = at(out.weights, 1);
    out.fused = add(scale(p_v, v_q), scale(p_k, lan.pooled));
    return out;
}

namespace {

Tensor grid_view(const Tensor& flat, int r, int d) {
    Tensor g = Tensor::zeros(Shape{r, r, d});
    g.data = flat.data;
    return g;
}

}  // namespace

Value score(Value q, Value image_map, Value keywords, const KeywordMask& mask,
            const ParamNodes& pn, const Hyperparams& hp, ForwardTrace* trace) {
    Tape& t = *q.tape;
    const Tensor& qv = t.value(q);
    if (qv.shape.rank() != 1 || qv.shape[0] != hp.d_q) {
        throw ShapeError("query shape " + qv.shape.str() + " does not match [" +
                         std::to_string(hp.d_q) + "]");
    }
    Value q_m = embed_query(q, pn, QueryEmbed::kMain);
    if (trace) *trace = ForwardTrace{};
    if (trace) trace->q_m = t.value(q_m);

    VanOut van;
    if (hp.uses_visual()) {
        van = van_forward(q, image_map, pn, hp);
        if (trace) {
            trace->v_proj = grid_view(t.value(van.projected), hp.r, hp.d);
            trace->s_q = t.value(van.kernel);
            Tensor m = Tensor::zeros(Shape{hp.r, hp.r});
            m.data = t.value(van.attn).data;
            trace->attn_map = std::move(m);
            trace->v_q = t.value(van.pooled);
        }
    }
    LanOut lan;
    if (hp.uses_keywords()) {
        lan = lan_forward(q, keywords, mask, pn, hp);
        if (trace) {
            trace->keywords_absent = lan.modality_absent;
            trace->k_q = t.value(lan.pooled);
            if (!lan.modality_absent) {
                trace->keyword_scores = t.value(lan.scores);
                trace->keyword_probs = t.value(lan.probs);
            }
        }
    }

    Value s;
    switch (hp.modality) {
        case Modality::kImageOnly:
            s = cosine(q_m, van.pooled);
            break;
        case Modality::kKeywordOnly:
            s = cosine(q_m, lan.pooled);
            break;
        case Modality::kLateFusion: {
            if (!pn.fusion_w.valid()) {
                throw ContractError("late-fusion config requires fusion_w parameters");
            }
            Value c_img = cosine(q_m, van.pooled);
            Value c_key = cosine(q_m, lan.pooled);
            s = dot(pn.fusion_w, pack({c_img, c_key}));
            break;
        }
        case Modality::kFull: {
            Value q_intent = embed_query(q, pn, QueryEmbed::kIntent);
            MtnOut mtn = mtn_forward(q_intent, van.pooled, lan, pn);
            if (trace) {
                trace->q_intent = t.value(q_intent);
                const Tensor& w = t.value(mtn.weights);
                trace->p_v = w.data[0];
                trace->p_k = w.data[1];
                if (!lan.modality_absent) {
                    trace->c_v = t.value(mtn.corr_v).value();
                    trace->c_k = t.value(mtn.corr_k).value();
                }
                trace->x_q = t.value(mtn.fused);
            }
            s = cosine(q_m, mtn.fused);
            break;
        }
    }
    return s;
}

}  // namespace amc
