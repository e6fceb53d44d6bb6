#include "amc/gradcheck.hpp"

#include <cmath>
#include <cstdio>

#include "amc/rng.hpp"
#include "amc/train.hpp"

namespace amc {

namespace {

constexpr double kKinkGuard = 1e-3;
constexpr double kStep = 1e-5;

struct Problem {
    DatasetBundle bundle;
    ClickTuple tuple;
    ModelParams params;
    Hyperparams hp;
    double margin = 1.0;
};

Tensor random_tensor(Rng& rng, const Shape& s) {
    Tensor t = Tensor::zeros(s);
    for (double& v : t.data) v = rng.normal();
    return t;
}

Problem make_problem(const GradCheckShapes& sh, Modality modality, uint64_t seed) {
    Problem p;
    p.hp = Hyperparams{sh.d_q, sh.d_v, sh.d_k, sh.d, sh.r, modality};
    p.params = init_params(p.hp, seed);
    Rng rng(splitmix64(seed) ^ 0x5bf03635ULL);
    DatasetBundle& b = p.bundle;
    b.d_q = sh.d_q;
    b.d_v = sh.d_v;
    b.d_k = sh.d_k;
    b.r = sh.r;
    b.queries["q0"] = random_tensor(rng, Shape{sh.d_q});
    p.tuple.query_id = "q0";
    p.tuple.positive = "x_pos";
    std::vector<std::string> ids = {"x_pos"};
    for (int j = 0; j < sh.t; ++j) {
        ids.push_back("x_neg" + std::to_string(j));
        p.tuple.negatives.push_back(ids.back());
    }
    for (const auto& id : ids) {
        b.images[id] = random_tensor(rng, Shape{sh.r, sh.r, sh.d_v});
        b.keywords[id] = random_tensor(rng, Shape{sh.n_keywords, sh.d_k});
    }
    return p;
}

double loss_value(const Problem& p) {
    Tape tape;
    ParamNodes pn = attach_params(tape, p.params, /*tracked=*/false);
    return tape.value(ranking_loss(tape, pn, p.hp, p.bundle, p.tuple, p.margin)).value();
}

// The model's ReLU sites are all of the form W^T q + b, so the kink distance
// can be checked directly from the parameters.
bool near_relu_kink(const Problem& p) {
    const Tensor& q = p.bundle.queries.at("q0");
    auto check = [&](const Tensor& w, const Tensor* bias) {
        const int d = w.shape[1];
        for (int j = 0; j < d; ++j) {
            double acc = bias ? bias->data[static_cast<size_t>(j)] : 0.0;
            for (int i = 0; i < w.shape[0]; ++i) acc += q[i] * w.at(i, j);
            if (std::fabs(acc) < kKinkGuard) return true;
        }
        return false;
    };
    if (check(p.params.query_embed_w, &p.params.query_embed_b)) return true;
    if (check(p.params.attn_kernel_w, &p.params.attn_kernel_b)) return true;
    if (p.hp.modality == Modality::kFull &&
        check(p.params.intent_embed_w, &p.params.intent_embed_b)) {
        return true;
    }
    return false;
}

bool near_hinge_kink(const Problem& p) {
    Tape tape;
    ParamNodes pn = attach_params(tape, p.params, /*tracked=*/false);
    Value query = tape.input(p.bundle.queries.at(p.tuple.query_id));
    auto score_of = [&](const std::string& iid) {
        Value map = tape.input(p.bundle.images.at(iid));
        const Tensor& k = p.bundle.keywords.at(iid);
        Value kw = tape.input(k);
        return tape.value(score(query, map, kw, KeywordMask::all(k.shape[0]), pn, p.hp)).value();
    };
    const double pos = score_of(p.tuple.positive);
    for (const auto& neg_id : p.tuple.negatives) {
        const double slack = p.margin - pos + score_of(neg_id);
        if (std::fabs(slack) < kKinkGuard) return true;
    }
    return false;
}

std::vector<int> unflatten(const Shape& s, int flat) {
    std::vector<int> idx(static_cast<size_t>(s.rank()));
    for (int axis = s.rank() - 1; axis >= 0; --axis) {
        idx[static_cast<size_t>(axis)] = flat % s[axis];
        flat /= s[axis];
    }
    return idx;
}

}  // namespace

bool GradCheckReport::passed() const {
    for (const auto& e : entries) {
        if (!(e.worst_rel_err < tol)) return false;
    }
    return !entries.empty();
}

std::string GradCheckReport::text() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "gradcheck modality=%s d_q=%d d_v=%d d_k=%d d=%d r=%d n=%d t=%d seeds=%d "
                  "h=%.0e tol=%.0e\n",
                  modality_name(modality).c_str(), shapes.d_q, shapes.d_v, shapes.d_k, shapes.d,
                  shapes.r, shapes.n_keywords, shapes.t, seeds, step, tol);
    std::string out = buf;
    for (const auto& e : entries) {
        std::string idx = "(";
        for (size_t i = 0; i < e.worst_index.size(); ++i) {
            if (i) idx += ",";
            idx += std::to_string(e.worst_index[i]);
        }
        idx += ")";
        std::snprintf(buf, sizeof(buf), "tensor %-16s worst_rel_err %.3e at %s seed %d %s\n",
                      e.tensor.c_str(), e.worst_rel_err, idx.c_str(), e.worst_seed,
                      e.worst_rel_err < tol ? "PASS" : "FAIL");
        out += buf;
    }
    out += passed() ? "overall PASS\n" : "overall FAIL\n";
    return out;
}

GradCheckReport run_model_gradcheck(const GradCheckShapes& shapes, int seeds, double tol,
                                    uint64_t base_seed, Modality modality) {
    GradCheckReport report;
    report.shapes = shapes;
    report.modality = modality;
    report.seeds = seeds;
    report.tol = tol;
    report.step = kStep;

    uint64_t sub_seed = base_seed;
    for (int s = 0; s < seeds; ++s) {
        Problem p;
        int attempts = 0;
        for (;;) {
            sub_seed = splitmix64(sub_seed + 1);
            p = make_problem(shapes, modality, sub_seed);
            if (!near_relu_kink(p) && !near_hinge_kink(p)) break;
            if (++attempts > 200) {
                throw ContractError("gradcheck could not find a kink-free sample");
            }
        }

        // Analytic gradients.
        Tape tape;
        ParamNodes pn = attach_params(tape, p.params, /*tracked=*/true);
        Value loss = ranking_loss(tape, pn, p.hp, p.bundle, p.tuple, p.margin);
        tape.backward(loss);

        std::vector<std::pair<const char*, Value>> handles = {
            {"query_embed_w", pn.query_embed_w},   {"query_embed_b", pn.query_embed_b},
            {"intent_embed_w", pn.intent_embed_w}, {"intent_embed_b", pn.intent_embed_b},
            {"visual_proj_w", pn.visual_proj_w},   {"attn_kernel_w", pn.attn_kernel_w},
            {"attn_kernel_b", pn.attn_kernel_b},   {"query_lang_w", pn.query_lang_w},
            {"keyword_lang_w", pn.keyword_lang_w}, {"bilinear_w", pn.bilinear_w},
        };
        if (p.params.has_fusion()) handles.emplace_back("fusion_w", pn.fusion_w);

        if (report.entries.empty()) {
            for (const auto& [name, _] : handles) {
                report.entries.push_back(GradCheckEntry{name, 0.0, {0}, 0});
            }
        }

        for (size_t ti = 0; ti < handles.size(); ++ti) {
            const Tensor analytic = tape.gradient(handles[ti].second);
            Tensor* target = nullptr;
            p.params.for_each([&](const char* name, Tensor& t) {
                if (std::string(name) == handles[ti].first) target = &t;
            });
            GradCheckEntry& entry = report.entries[ti];
            for (long long i = 0; i < target->numel(); ++i) {
                const double keep = (*target)[i];
                (*target)[i] = keep + kStep;
                const double up = loss_value(p);
                (*target)[i] = keep - kStep;
                const double down = loss_value(p);
                (*target)[i] = keep;
                const double fd = (up - down) / (2.0 * kStep);
                const double a = analytic[i];
                const double rel =
                    std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-4});
                if (rel > entry.worst_rel_err) {
                    entry.worst_rel_err = rel;
                    entry.worst_index = unflatten(target->shape, static_cast<int>(i));
                    entry.worst_seed = s;
                }
            }
        }
    }
    return report;
}

}  // namespace amc
