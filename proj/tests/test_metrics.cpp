#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "amc/metrics.hpp"
#include "amc/rng.hpp"
#include "doctest.h"

using namespace amc;

namespace {

// Brute-force oracles, written against the definitions rather than the
// library code: explicit sort, direct formula, O(n^2) where natural.

JudgedList oracle_sorted(JudgedList l) {
    std::stable_sort(l.begin(), l.end(), [](const JudgedCandidate& a, const JudgedCandidate& b) {
        return a.id < b.id;
    });
    std::stable_sort(l.begin(), l.end(), [](const JudgedCandidate& a, const JudgedCandidate& b) {
        return a.score > b.score;
    });
    return l;
}

double oracle_dcg(const JudgedList& sorted, int k) {
    double s = 0.0;
    for (int j = 0; j < k && j < static_cast<int>(sorted.size()); ++j) {
        s += (std::exp2(static_cast<double>(sorted[static_cast<size_t>(j)].rel)) - 1.0) *
             (std::log(2.0) / std::log(static_cast<double>(j + 2)));
    }
    return s;
}

std::optional<double> oracle_ndcg(const JudgedList& l, int k) {
    if (static_cast<int>(l.size()) < k) return std::nullopt;
    JudgedList ideal = l;
    std::sort(ideal.begin(), ideal.end(),
              [](const JudgedCandidate& a, const JudgedCandidate& b) { return a.rel > b.rel; });
    const double idcg = oracle_dcg(ideal, k);
    if (idcg == 0.0) return std::nullopt;
    return oracle_dcg(oracle_sorted(l), k) / idcg;
}

std::optional<double> oracle_ap(const JudgedList& l) {
    JudgedList s = oracle_sorted(l);
    int rel_seen = 0;
    double acc = 0.0;
    for (size_t j = 0; j < s.size(); ++j) {
        if (s[j].rel > 0) {
            ++rel_seen;
            int hits = 0;
            for (size_t i = 0; i <= j; ++i) hits += s[i].rel > 0 ? 1 : 0;
            acc += static_cast<double>(hits) / static_cast<double>(j + 1);
        }
    }
    if (rel_seen == 0) return std::nullopt;
    return acc / rel_seen;
}

double oracle_auc_pairs(const std::vector<double>& pos, const std::vector<double>& neg) {
    double wins = 0.0;
    for (double p : pos) {
        for (double n : neg) {
            if (p > n) wins += 1.0;
            else if (p == n) wins += 0.5;
        }
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

JudgedList random_list(Rng& rng, int n, int max_grade = 3, bool tie_prone = false) {
    JudgedList l;
    for (int i = 0; i < n; ++i) {
        double s = tie_prone ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform(-1.0, 1.0);
        l.push_back({"c" + std::to_string(i), s, rng.below(max_grade + 1)});
    }
    return l;
}

}  // namespace

TEST_CASE("ndcg on ideal, graded, and short lists") {
    JudgedList ideal = {{"a", 0.9, 3}, {"b", 0.8, 2}, {"c", 0.7, 1}, {"d", 0.6, 0}};
    CHECK(*ndcg_at_k(ideal, 4) == doctest::Approx(1.0).epsilon(1e-14));

    // Ranked order carries grades [0, 3]: DCG = 7/log2(3), IDCG = 7.
    JudgedList two = {{"a", 0.9, 0}, {"b", 0.1, 3}};
    const double dcg = 7.0 / std::log2(3.0);
    CHECK(dcg == doctest::Approx(4.4165).epsilon(1e-4));
    CHECK(*ndcg_at_k(two, 2) == doctest::Approx(dcg / 7.0).epsilon(1e-12));
    CHECK(*ndcg_at_k(two, 2) == doctest::Approx(0.6309).epsilon(1e-4));

    CHECK_FALSE(ndcg_at_k(two, 3).has_value());  // shorter than k -> skipped
    JudgedList all_zero = {{"a", 0.9, 0}, {"b", 0.1, 0}};
    CHECK_FALSE(ndcg_at_k(all_zero, 2).has_value());  // IDCG = 0 -> skipped
}

TEST_CASE("precision, ap, and mrr basics") {
    JudgedList l = {{"a", 0.9, 1}, {"b", 0.8, 0}, {"c", 0.7, 1}, {"d", 0.6, 0}};
    CHECK(*average_precision(l) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    CHECK(*average_precision(l) == doctest::Approx(0.8333).epsilon(1e-4));

    JudgedList second = {{"a", 0.9, 0}, {"b", 0.8, 1}, {"c", 0.7, 0}};
    CHECK(*reciprocal_rank(second) == 0.5);

    JudgedList top = {{"a", 0.9, 2}, {"b", 0.8, 1}, {"c", 0.7, 0}};
    CHECK(*precision_at_k(top, 2) == 1.0);

    JudgedList none = {{"a", 0.9, 0}};
    CHECK_FALSE(average_precision(none).has_value());
    CHECK_FALSE(reciprocal_rank(none).has_value());
}

TEST_CASE("recall at k basics") {
    JudgedList l = {{"a", 0.9, 5}, {"b", 0.8, 0}, {"c", 0.7, 2}, {"d", 0.6, 3}, {"e", 0.5, 1}};
    // 4 clicked overall; top 3 by score holds a, c (clicked) and b.
    CHECK(*recall_at_k(l, 3) == doctest::Approx(0.5));
    CHECK(*recall_at_k(l, 5) == 1.0);
    CHECK(*recall_at_k(l, 50) == 1.0);
    JudgedList unclicked = {{"a", 0.9, 0}};
    CHECK_FALSE(recall_at_k(unclicked, 1).has_value());
}

TEST_CASE("auc separation, ties, and errors") {
    CHECK(roc_auc({2.0, 3.0}, {0.0, 1.0}).auc == 1.0);
    CHECK(roc_auc({1.0, 1.0, 1.0}, {1.0, 1.0}).auc == 0.5);
    CHECK_THROWS_AS(roc_auc({}, {1.0}), ContractError);
    CHECK_THROWS_AS(roc_auc({1.0}, {}), ContractError);
}

TEST_CASE("auc equals the quadratic pairwise count on random data") {
    Rng rng(31);
    for (int iter = 0; iter < 50; ++iter) {
        std::vector<double> pos, neg;
        for (int i = 0; i < 50; ++i) {
            // Discretized scores make ties common.
            pos.push_back(static_cast<double>(rng.below(20)) / 10.0 + rng.uniform() * 0.0);
            neg.push_back(static_cast<double>(rng.below(20)) / 10.0);
        }
        CHECK(roc_auc(pos, neg).auc == oracle_auc_pairs(pos, neg));
    }
}

TEST_CASE("roc polyline is a monotone path from origin to (1,1)") {
    Rng rng(32);
    std::vector<double> pos, neg;
    for (int i = 0; i < 40; ++i) pos.push_back(rng.normal() + 0.5);
    for (int i = 0; i < 60; ++i) neg.push_back(rng.normal());
    RocResult roc = roc_auc(pos, neg);
    REQUIRE(roc.curve.size() >= 2);
    CHECK(roc.curve.front().fpr == 0.0);
    CHECK(roc.curve.front().tpr == 0.0);
    CHECK(roc.curve.back().fpr == 1.0);
    CHECK(roc.curve.back().tpr == 1.0);
    for (size_t i = 1; i < roc.curve.size(); ++i) {
        CHECK(roc.curve[i].fpr >= roc.curve[i - 1].fpr);
        CHECK(roc.curve[i].tpr >= roc.curve[i - 1].tpr);
    }
}

TEST_CASE("caption recall basics and the random baseline") {
    std::vector<JudgedList> always_first;
    for (int i = 0; i < 10; ++i) {
        always_first.push_back({{"true", 1.0, 1}, {"x", 0.5, 0}, {"y", 0.2, 0}});
    }
    CHECK(caption_recall(always_first, 1) == 1.0);

    // Random scores, 5 true captions among 5000, top 10: expectation ~1%.
    Rng rng(33);
    std::vector<JudgedList> random_lists;
    for (int img = 0; img < 1000; ++img) {
        JudgedList l;
        l.reserve(5000);
        for (int c = 0; c < 5000; ++c) {
            l.push_back({"c" + std::to_string(c), rng.uniform(), c < 5 ? 1 : 0});
        }
        random_lists.push_back(std::move(l));
    }
    const double r10 = caption_recall(random_lists, 10);
    CHECK(r10 == doctest::Approx(0.01).epsilon(1.0));  // within [0, 0.02]
    CHECK(r10 < 0.025);

    std::vector<JudgedList> no_true = {{{"a", 1.0, 0}}};
    CHECK_THROWS_AS(caption_recall(no_true, 1), ContractError);
}

TEST_CASE("caption recall equals a membership-check oracle on small batches") {
    Rng rng(34);
    for (int iter = 0; iter < 200; ++iter) {
        std::vector<JudgedList> batch;
        const int n_img = 1 + static_cast<int>(rng.below(6));
        for (int i = 0; i < n_img; ++i) {
            JudgedList l = random_list(rng, 2 + static_cast<int>(rng.below(10)), 1);
            l[static_cast<size_t>(rng.below(static_cast<long long>(l.size())))].rel = 1;
            batch.push_back(std::move(l));
        }
        const int k = 1 + static_cast<int>(rng.below(6));
        int hits = 0;
        for (const auto& l : batch) {
            JudgedList s = oracle_sorted(l);
            bool hit = false;
            for (int j = 0; j < k && j < static_cast<int>(s.size()); ++j) {
                hit = hit || s[static_cast<size_t>(j)].rel > 0;
            }
            hits += hit ? 1 : 0;
        }
        CHECK(caption_recall(batch, k) == static_cast<double>(hits) / n_img);
    }
}

TEST_CASE("metrics agree with brute-force oracles on 1000 random instances") {
    Rng rng(35);
    for (int iter = 0; iter < 1000; ++iter) {
        const int n = 1 + static_cast<int>(rng.below(20));
        const bool ties = rng.uniform() < 0.5;
        JudgedList l = random_list(rng, n, 3, ties);
        const int k = 1 + static_cast<int>(rng.below(20));

        auto nd = ndcg_at_k(l, k);
        auto nd_o = oracle_ndcg(l, k);
        CHECK(nd.has_value() == nd_o.has_value());
        if (nd) CHECK(*nd == doctest::Approx(*nd_o).epsilon(1e-12));

        auto ap = average_precision(l);
        auto ap_o = oracle_ap(l);
        CHECK(ap.has_value() == ap_o.has_value());
        if (ap) CHECK(*ap == doctest::Approx(*ap_o).epsilon(1e-12));

        // Counting metrics must agree exactly.
        JudgedList s = oracle_sorted(l);
        int hits_k = 0, total_rel = 0;
        std::optional<double> mrr_o;
        for (size_t j = 0; j < s.size(); ++j) {
            if (s[j].rel > 0) {
                total_rel += 1;
                if (static_cast<int>(j) < k) ++hits_k;
                if (!mrr_o) mrr_o = 1.0 / static_cast<double>(j + 1);
            }
        }
        if (!l.empty()) {
            CHECK(*precision_at_k(l, k) == static_cast<double>(hits_k) / k);
        }
        auto rr = reciprocal_rank(l);
        CHECK(rr.has_value() == mrr_o.has_value());
        if (rr) CHECK(*rr == *mrr_o);
        auto rec = recall_at_k(l, k);
        if (total_rel > 0) {
            CHECK(*rec == static_cast<double>(hits_k) / total_rel);
        } else {
            CHECK_FALSE(rec.has_value());
        }

        // Everything lies in [0, 1].
        for (auto v : {nd, ap, rr, rec}) {
            if (v) {
                CHECK(*v >= 0.0);
                CHECK(*v <= 1.0 + 1e-12);
            }
        }
    }
}

TEST_CASE("metrics are invariant under strictly monotone score transforms") {
    Rng rng(36);
    auto affine = [](double x) { return 2.0 * x + 1.0; };
    auto squash = [](double x) { return std::tanh(x); };
    for (int iter = 0; iter < 300; ++iter) {
        JudgedList l = random_list(rng, 2 + static_cast<int>(rng.below(15)));
        const int k = 1 + static_cast<int>(rng.below(10));
        for (auto f : {+affine, +squash}) {
            JudgedList m = l;
            for (auto& c : m) c.score = f(c.score);
            auto nd1 = ndcg_at_k(l, k), nd2 = ndcg_at_k(m, k);
            CHECK(nd1.has_value() == nd2.has_value());
            if (nd1) CHECK(*nd1 == doctest::Approx(*nd2).epsilon(1e-12));
            auto ap1 = average_precision(l), ap2 = average_precision(m);
            if (ap1) CHECK(*ap1 == *ap2);
            auto p1 = precision_at_k(l, k), p2 = precision_at_k(m, k);
            CHECK(*p1 == *p2);
            auto r1 = recall_at_k(l, k), r2 = recall_at_k(m, k);
            CHECK(r1.has_value() == r2.has_value());
            if (r1) CHECK(*r1 == *r2);
        }
    }
}

TEST_CASE("repeated evaluation is bit-identical under ties") {
    Rng rng(37);
    JudgedList l = random_list(rng, 12, 2, /*tie_prone=*/true);
    auto a = ndcg_at_k(l, 5);
    auto b = ndcg_at_k(l, 5);
    CHECK(*a == *b);
    CHECK(ranked(l)[0].id == ranked(l)[0].id);
    // Ascending-id tie-break: equal scores order by id.
    JudgedList tied = {{"b", 1.0, 0}, {"a", 1.0, 1}, {"c", 1.0, 2}};
    JudgedList r = ranked(tied);
    CHECK(r[0].id == "a");
    CHECK(r[1].id == "b");
    CHECK(r[2].id == "c");
}

TEST_CASE("aggregate rows count contributors and skips") {
    std::vector<JudgedList> queries = {
        {{"a", 0.9, 1}, {"b", 0.8, 0}},  // fine
        {{"a", 0.9, 0}},                 // no relevant -> skipped for map/mrr
    };
    MetricReport mrr = aggregate_mrr(queries);
    CHECK(mrr.contributing == 1);
    CHECK(mrr.skipped == 1);
    CHECK(mrr.contributing + mrr.skipped == 2);
    CHECK(mrr.value == 1.0);

    MetricReport ndcg = aggregate_ndcg(queries, 2);
    CHECK(ndcg.contributing == 1);  // second list is shorter than k
    CHECK(ndcg.skipped == 1);

    std::string text = format_report({mrr, ndcg});
    CHECK(text.find("mrr\t-\t1.000000\t1\t1") != std::string::npos);
    CHECK(text.find("ndcg\t2\t") != std::string::npos);
}
