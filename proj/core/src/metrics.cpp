#include "amc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace amc {

namespace {

bool rank_order(const JudgedCandidate& a, const JudgedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

double dcg(const JudgedList& in_rank_order, int k) {
    double s = 0.0;
    const int n = std::min<int>(k, static_cast<int>(in_rank_order.size()));
    for (int j = 0; j < n; ++j) {
        const double gain = std::pow(2.0, static_cast<double>(in_rank_order[static_cast<size_t>(j)].rel)) - 1.0;
        s += gain / std::log2(static_cast<double>(j) + 2.0);
    }
    return s;
}

}  // namespace

JudgedList ranked(JudgedList list) {
    std::sort(list.begin(), list.end(), rank_order);
    return list;
}

std::optional<double> ndcg_at_k(const JudgedList& list, int k) {
    if (static_cast<int>(list.size()) < k) return std::nullopt;
    JudgedList by_score = ranked(list);
    JudgedList ideal = list;
    std::sort(ideal.begin(), ideal.end(),
              [](const JudgedCandidate& a, const JudgedCandidate& b) { return a.rel > b.rel; });
    const double idcg = dcg(ideal, k);
    if (idcg == 0.0) return std::nullopt;
    return dcg(by_score, k) / idcg;
}

std::optional<double> precision_at_k(const JudgedList& list, int k) {
    if (list.empty()) return std::nullopt;
    JudgedList by_score = ranked(list);
    const int n = std::min<int>(k, static_cast<int>(by_score.size()));
    int hits = 0;
    for (int j = 0; j < n; ++j) hits += by_score[static_cast<size_t>(j)].rel > 0 ? 1 : 0;
    return static_cast<double>(hits) / k;
}

std::optional<double> average_precision(const JudgedList& list) {
    JudgedList by_score = ranked(list);
    int hits = 0;
    double sum = 0.0;
    for (size_t j = 0; j < by_score.size(); ++j) {
        if (by_score[j].rel > 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(j + 1);
        }
    }
    if (hits == 0) return std::nullopt;
    return sum / hits;
}

std::optional<double> reciprocal_rank(const JudgedList& list) {
    JudgedList by_score = ranked(list);
    for (size_t j = 0; j < by_score.size(); ++j) {
        if (by_score[j].rel > 0) return 1.0 / static_cast<double>(j + 1);
    }
    return std::nullopt;
}

std::optional<double> recall_at_k(const JudgedList& list, int k) {
    int total = 0;
    for (const auto& c : list) total += c.rel > 0 ? 1 : 0;
    if (total == 0) return std::nullopt;
    JudgedList by_score = ranked(list);
    const int n = std::min<int>(k, static_cast<int>(by_score.size()));
    int hits = 0;
    for (int j = 0; j < n; ++j) hits += by_score[static_cast<size_t>(j)].rel > 0 ? 1 : 0;
    return static_cast<double>(hits) / total;
}

RocResult roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
    if (positives.empty() || negatives.empty()) {
        throw ContractError("roc_auc requires scores on both sides");
    }
    struct Scored {
        double score;
        bool positive;
    };
    std::vector<Scored> all;
    all.reserve(positives.size() + negatives.size());
    for (double s : positives) all.push_back({s, true});
    for (double s : negatives) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.positive < b.positive;  // stable grouping; ranks below use midranks
    });

    // Mann-Whitney with midranks for ties equals pairwise counting with the
    // half-credit tie convention.
    const double m_pos = static_cast<double>(positives.size());
    const double m_neg = static_cast<double>(negatives.size());
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < all.size()) {
        size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t t = i; t < j; ++t) {
            if (all[t].positive) rank_sum_pos += midrank;
        }
        i = j;
    }
    RocResult out;
    out.auc = (rank_sum_pos - m_pos * (m_pos + 1.0) / 2.0) / (m_pos * m_neg);

    // ROC polyline: sweep thresholds from high to low, one point per distinct
    // score (ties advance both counts at once, drawing the diagonal segment).
    out.curve.push_back({0.0, 0.0});
    double tp = 0.0, fp = 0.0;
    size_t hi = all.size();
    while (hi > 0) {
        size_t lo = hi;
        while (lo > 0 && all[lo - 1].score == all[hi - 1].score) --lo;
        for (size_t t = lo; t < hi; ++t) {
            if (all[t].positive) tp += 1.0;
            else fp += 1.0;
        }
        out.curve.push_back({fp / m_neg, tp / m_pos});
        hi = lo;
    }
    return out;
}

double caption_recall(const std::vector<JudgedList>& per_image, int k) {
    if (per_image.empty()) {
        throw ContractError("caption_recall requires at least one image");
    }
    int hits = 0;
    for (const auto& list : per_image) {
        bool any_true = false;
        for (const auto& c : list) any_true = any_true || c.rel > 0;
        if (!any_true) {
            throw ContractError("caption_recall: an image has no true caption among candidates");
        }
        JudgedList by_score = ranked(list);
        const int n = std::min<int>(k, static_cast<int>(by_score.size()));
        for (int j = 0; j < n; ++j) {
            if (by_score[static_cast<size_t>(j)].rel > 0) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(per_image.size());
}

namespace {

template <class F>
MetricReport aggregate(const std::string& name, int k, const std::vector<JudgedList>& queries,
                       F&& per_query) {
    MetricReport r;
    r.metric = name;
    r.k = k;
    double sum = 0.0;
    for (const auto& q : queries) {
        if (auto v = per_query(q)) {
            sum += *v;
            ++r.contributing;
        } else {
            ++r.skipped;
        }
    }
    r.value = r.contributing > 0 ? sum / r.contributing : 0.0;
    return r;
}

}  // namespace

MetricReport aggregate_ndcg(const std::vector<JudgedList>& queries, int k) {
    return aggregate("ndcg", k, queries, [k](const JudgedList& q) { return ndcg_at_k(q, k); });
}

MetricReport aggregate_precision(const std::vector<JudgedList>& queries, int k) {
    return aggregate("p", k, queries,
                     [k](const JudgedList& q) { return precision_at_k(q, k); });
}

MetricReport aggregate_map(const std::vector<JudgedList>& queries) {
    return aggregate("map", -1, queries,
                     [](const JudgedList& q) { return average_precision(q); });
}

MetricReport aggregate_mrr(const std::vector<JudgedList>& queries) {
    return aggregate("mrr", -1, queries,
                     [](const JudgedList& q) { return reciprocal_rank(q); });
}

MetricReport aggregate_recall(const std::vector<JudgedList>& queries, int k) {
    return aggregate("r", k, queries, [k](const JudgedList& q) { return recall_at_k(q, k); });
}

std::string format_report(const std::vector<MetricReport>& rows) {
    std::string out = "metric\tk\tvalue\tn_queries\tn_skipped\n";
    char buf[160];
    for (const auto& r : rows) {
        if (r.k >= 0) {
            std::snprintf(buf, sizeof(buf), "%s\t%d\t%.6f\t%d\t%d\n", r.metric.c_str(), r.k,
                          r.value, r.contributing, r.skipped);
        } else {
            std::snprintf(buf, sizeof(buf), "%s\t-\t%.6f\t%d\t%d\n", r.metric.c_str(), r.value,
                          r.contributing, r.skipped);
        }
        out += buf;
    }
    return out;
}

std::string format_roc(const std::vector<RocPoint>& curve) {
    std::string out = "fpr\ttpr\n";
    char buf[80];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\n", p.fpr, p.tpr);
        out += buf;
    }
    return out;
}

}  // namespace amc
