#include "amc/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>

#include "amc/checkpoint.hpp"
#include "amc/gradcheck.hpp"
#include "amc/metrics.hpp"
#include "amc/rng.hpp"

namespace fs = std::filesystem;

namespace amc {

namespace {

// Exclusive lock on a report directory, released on scope exit.
class ReportLock {
public:
    explicit ReportLock(const std::string& dir) : path_(dir + "/.lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw DataError(dir + ": cannot create report dir (" + ec.message() + ")");
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (f == nullptr) {
            throw DataError(path_ + ": report dir is locked by another writer (remove the "
                            "stale .lock if no other run is active)");
        }
        std::fclose(f);
    }
    ~ReportLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    ReportLock(const ReportLock&) = delete;
    ReportLock& operator=(const ReportLock&) = delete;

private:
    std::string path_;
};

void require_out_dir(const RunConfig& cfg) {
    if (cfg.out.empty()) throw ConfigError("missing report dir: set out= or pass --out");
}

DatasetBundle load_bundle_checked(const RunConfig& cfg) {
    if (cfg.bundle.empty()) throw ConfigError("missing dataset: set bundle= or --set bundle=DIR");
    if (!fs::exists(cfg.bundle)) throw DataError(cfg.bundle + ": no such bundle directory");
    return load_bundle(cfg.bundle);
}

void check_checkpoint_dims(const ModelParams& params, const DatasetBundle& b,
                           const std::string& path) {
    if (params.hp.d_q != b.d_q || params.hp.d_v != b.d_v || params.hp.d_k != b.d_k ||
        params.hp.r != b.r) {
        throw ShapeError(path + ": checkpoint dims (d_q=" + std::to_string(params.hp.d_q) +
                         " d_v=" + std::to_string(params.hp.d_v) +
                         " d_k=" + std::to_string(params.hp.d_k) +
                         " r=" + std::to_string(params.hp.r) + ") do not match bundle (d_q=" +
                         std::to_string(b.d_q) + " d_v=" + std::to_string(b.d_v) +
                         " d_k=" + std::to_string(b.d_k) + " r=" + std::to_string(b.r) + ")");
    }
}

double score_pair(Tape& tape, const ModelParams& params, const DatasetBundle& bundle,
                  const std::string& qid, const std::string& iid, ForwardTrace* trace = nullptr) {
    tape.reset();
    ParamNodes pn = attach_params(tape, params, /*tracked=*/false);
    Value q = tape.input(bundle.queries.at(qid));
    Value map = tape.input(bundle.images.at(iid));
    Value kw;
    KeywordMask mask;
    if (const Tensor* k = bundle.keywords_for(iid)) {
        kw = tape.input(*k);
        mask = KeywordMask::all(k->shape[0]);
    }
    return tape.value(score(q, map, kw, mask, pn, params.hp, trace)).value();
}

// Clicks restricted to a query subset; features stay shared.
DatasetBundle filter_clicks(const DatasetBundle& b, const std::set<std::string>& keep) {
    DatasetBundle out = b;
    out.clicks.clear();
    out.judgments.clear();
    for (const auto& c : b.clicks) {
        if (keep.count(c.query_id)) out.clicks.push_back(c);
    }
    for (const auto& j : b.judgments) {
        if (keep.count(j.query_id)) out.judgments.push_back(j);
    }
    return out;
}

std::string fmt_loss(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& log) {
    require_out_dir(cfg);
    DatasetBundle bundle = load_bundle_checked(cfg);
    const Hyperparams hp = cfg.hyperparams(bundle);
    const TrainConfig tc = cfg.train_config();
    ReportLock lock(cfg.out);

    DatasetBundle train_split = bundle;
    DatasetBundle held_out;
    bool have_held_out = false;
    if (cfg.holdout_fraction > 0.0) {
        std::vector<std::string> qids;
        for (const auto& [qid, _] : bundle.clicks_by_query()) qids.push_back(qid);
        Rng rng = Rng::stream(cfg.seed, 0x4f1dULL);
        rng.shuffle(qids);
        const size_t n_held = static_cast<size_t>(cfg.holdout_fraction * qids.size());
        std::set<std::string> held(qids.begin(), qids.begin() + static_cast<long>(n_held));
        std::set<std::string> rest(qids.begin() + static_cast<long>(n_held), qids.end());
        if (!held.empty()) {
            held_out = filter_clicks(bundle, held);
            train_split = filter_clicks(bundle, rest);
            have_held_out = true;
        }
    }

    const std::string final_path =
        cfg.checkpoint.empty() ? cfg.out + "/checkpoint.amc" : cfg.checkpoint;
    const std::string loss_path = cfg.out + "/loss_log.tsv";
    std::ofstream loss_log(loss_path, std::ios::trunc);
    if (!loss_log) throw DataError(loss_path + ": cannot open for writing");

    auto on_epoch = [&](const EpochLog& e, const ModelParams& params) {
        save_checkpoint(params, cfg.out + "/checkpoint_latest.amc");
        loss_log << e.epoch << "\t" << fmt_loss(e.train_loss);
        if (e.held_out) loss_log << "\t" << fmt_loss(*e.held_out);
        loss_log << "\n";
        loss_log.flush();
        log << "epoch " << e.epoch << " train_loss " << fmt_loss(e.train_loss);
        if (e.held_out) log << " held_out " << fmt_loss(*e.held_out);
        log << "\n";
    };

    TrainResult result =
        train(train_split, tc, hp, have_held_out ? &held_out : nullptr, on_epoch);
    if (result.skipped_queries > 0) {
        log << "warning: skipped " << result.skipped_queries
            << " queries with no negatives available\n";
    }
    save_checkpoint(result.params, final_path);
    log << "final checkpoint " << final_path << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& log) {
    require_out_dir(cfg);
    if (cfg.checkpoint.empty()) throw ConfigError("missing checkpoint: pass --checkpoint PATH");
    DatasetBundle bundle = load_bundle_checked(cfg);
    ModelParams params = load_checkpoint(cfg.checkpoint);
    check_checkpoint_dims(params, bundle, cfg.checkpoint);
    ReportLock lock(cfg.out);
    Tape tape;

    std::vector<MetricReport> rows;
    std::string roc_text;
    if (loss_mode_from_name(cfg.loss_mode) == LossMode::kBidirectional) {
        // Caption ranking: for each image, rank every caption in the bundle.
        std::vector<JudgedList> per_image;
        std::set<std::pair<std::string, std::string>> matches;
        for (const auto& c : bundle.clicks) {
            if (c.count > 0) matches.insert({c.query_id, c.image_id});
        }
        for (const auto& [iid, _] : bundle.images) {
            JudgedList list;
            bool any_true = false;
            for (const auto& [qid, __] : bundle.queries) {
                const bool is_true = matches.count({qid, iid}) > 0;
                any_true = any_true || is_true;
                list.push_back({qid, score_pair(tape, params, bundle, qid, iid), is_true ? 1 : 0});
            }
            if (any_true) per_image.push_back(std::move(list));
        }
        if (per_image.empty()) {
            throw DataError(cfg.bundle + ": no image has a clicked caption to rank");
        }
        for (int k : {1, 5, 10}) {
            MetricReport r;
            r.metric = "caption_r";
            r.k = k;
            r.value = caption_recall(per_image, k);
            r.contributing = static_cast<int>(per_image.size());
            rows.push_back(r);
        }
    } else {
        auto judged = bundle.judgments_by_query();
        auto clicked = bundle.clicks_by_query();
        std::vector<JudgedList> graded_lists;   // judgments as grades
        std::vector<JudgedList> clicked_lists;  // click counts as relevance
        std::vector<double> pos_scores, neg_scores;
        for (const auto& [qid, js] : judged) {
            JudgedList graded;
            std::map<std::string, long long> count_of;
            if (auto it = clicked.find(qid); it != clicked.end()) {
                for (const auto& c : it->second) count_of[c.image_id] = c.count;
            }
            JudgedList by_clicks;
            std::set<std::string> seen;
            for (const auto& j : js) {
                const double s = score_pair(tape, params, bundle, qid, j.image_id);
                graded.push_back({j.image_id, s, j.grade});
                (j.grade > 0 ? pos_scores : neg_scores).push_back(s);
                long long cc = 0;
                if (auto it = count_of.find(j.image_id); it != count_of.end()) cc = it->second;
                by_clicks.push_back({j.image_id, s, cc});
                seen.insert(j.image_id);
            }
            // Clicked images missing from the judgments still count for recall.
            for (const auto& [iid, cc] : count_of) {
                if (!seen.count(iid)) {
                    by_clicks.push_back({iid, score_pair(tape, params, bundle, qid, iid), cc});
                }
            }
            graded_lists.push_back(std::move(graded));
            clicked_lists.push_back(std::move(by_clicks));
        }
        if (graded_lists.empty()) {
            throw DataError(cfg.bundle + ": no judgments to evaluate");
        }
        for (int k : {5, 10, 15, 20, 25}) rows.push_back(aggregate_ndcg(graded_lists, k));
        rows.push_back(aggregate_precision(graded_lists, 5));
        rows.push_back(aggregate_map(graded_lists));
        rows.push_back(aggregate_mrr(graded_lists));
        RocResult roc = roc_auc(pos_scores, neg_scores);
        MetricReport auc_row;
        auc_row.metric = "auc";
        auc_row.value = roc.auc;
        auc_row.contributing = static_cast<int>(graded_lists.size());
        rows.push_back(auc_row);
        roc_text = format_roc(roc.curve);
        for (int k : {1, 5, 10, 15, 20}) rows.push_back(aggregate_recall(clicked_lists, k));
    }

    const std::string metrics_path = cfg.out + "/metrics.tsv";
    std::ofstream os(metrics_path, std::ios::trunc);
    if (!os) throw DataError(metrics_path + ": cannot open for writing");
    os << format_report(rows);
    os.close();
    if (!roc_text.empty()) {
        std::ofstream roc_os(cfg.out + "/roc.txt", std::ios::trunc);
        roc_os << roc_text;
    }
    log << format_report(rows);
    return 0;
}

int cmd_rank(const RunConfig& cfg, const std::string& query_id, int top_k, bool explain,
             std::ostream& log) {
    require_out_dir(cfg);
    if (cfg.checkpoint.empty()) throw ConfigError("missing checkpoint: pass --checkpoint PATH");
    if (top_k < 1) throw ConfigError("top_k must be >= 1");
    DatasetBundle bundle = load_bundle_checked(cfg);
    ModelParams params = load_checkpoint(cfg.checkpoint);
    check_checkpoint_dims(params, bundle, cfg.checkpoint);

    if (!bundle.queries.count(query_id)) {
        std::string msg = "unknown query id '" + query_id + "'; nearest ids:";
        auto it = bundle.queries.lower_bound(query_id);
        auto lo = it;
        for (int i = 0; i < 2 && lo != bundle.queries.begin(); ++i) --lo;
        int listed = 0;
        for (auto cur = lo; cur != bundle.queries.end() && listed < 5; ++cur, ++listed) {
            msg += " " + cur->first;
        }
        throw DataError(msg);
    }
    ReportLock lock(cfg.out);
    Tape tape;

    struct Entry {
        std::string id;
        double score;
        ForwardTrace trace;
    };
    std::vector<Entry> entries;
    for (const auto& [iid, _] : bundle.images) {
        Entry e;
        e.id = iid;
        e.score = score_pair(tape, params, bundle, query_id, iid, explain ? &e.trace : nullptr);
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (static_cast<int>(entries.size()) > top_k) entries.resize(static_cast<size_t>(top_k));

    const std::string rank_path = cfg.out + "/rank.tsv";
    std::ofstream os(rank_path, std::ios::trunc);
    if (!os) throw DataError(rank_path + ": cannot open for writing");
    char buf[160];
    for (size_t i = 0; i < entries.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu\t%s\t%.9g\n", i + 1, entries[i].id.c_str(),
                      entries[i].score);
        os << buf;
        log << buf;
    }
    os.close();

    if (explain) {
        const std::string expl_path = cfg.out + "/rank_explain.txt";
        std::ofstream eos(expl_path, std::ios::trunc);
        if (!eos) throw DataError(expl_path + ": cannot open for writing");
        for (size_t i = 0; i < entries.size(); ++i) {
            const ForwardTrace& tr = entries[i].trace;
            eos << "result " << (i + 1) << " " << entries[i].id << "\n";
            std::snprintf(buf, sizeof(buf), "modality_weights p_v %.9g p_k %.9g\n", tr.p_v,
                          tr.p_k);
            eos << buf;
            if (!tr.attn_map.empty()) {
                eos << "attention_map";
                for (double v : tr.attn_map.data) {
                    std::snprintf(buf, sizeof(buf), " %.9g", v);
                    eos << buf;
                }
                eos << "\n";
            }
            if (!tr.keyword_probs.empty()) {
                std::vector<std::pair<double, int>> top;
                for (int j = 0; j < tr.keyword_probs.shape[0]; ++j) {
                    top.emplace_back(tr.keyword_probs[j], j);
                }
                std::sort(top.begin(), top.end(), [](const auto& a, const auto& b) {
                    if (a.first != b.first) return a.first > b.first;
                    return a.second < b.second;
                });
                if (top.size() > 10) top.resize(10);
                eos << "top_keywords";
                for (const auto& [prob, idx] : top) {
                    std::snprintf(buf, sizeof(buf), " %d:%.9g", idx, prob);
                    eos << buf;
                }
                eos << "\n";
            }
        }
    }
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
    GradCheckReport report = run_model_gradcheck({}, 20, 1e-4, cfg.seed);
    log << report.text();
    if (!cfg.out.empty()) {
        ReportLock lock(cfg.out);
        std::ofstream os(cfg.out + "/gradcheck.txt", std::ios::trunc);
        os << report.text();
    }
    return report.passed() ? 0 : 2;
}

int cmd_synth(const SynthSpec& spec, const std::string& out_dir, std::ostream& log) {
    if (out_dir.empty()) throw ConfigError("missing output dir: pass --out DIR");
    SynthResult result = generate_synthetic(spec);
    save_bundle(result.bundle, out_dir);
    log << "wrote bundle with " << result.bundle.queries.size() << " queries, "
        << result.bundle.images.size() << " images to " << out_dir << "\n";
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 1;
    if (dynamic_cast<const ShapeError*>(&e) != nullptr) return 1;
    if (dynamic_cast<const DataError*>(&e) != nullptr) return 1;
    return 2;
}

}  // namespace amc
