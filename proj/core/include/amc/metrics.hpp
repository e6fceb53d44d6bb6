// Ranked-retrieval metrics with deterministic tie handling: candidates sort
// by descending score, ties broken by ascending candidate id, so repeated
// evaluation is bit-identical. All metrics are pure functions and safe to
// evaluate in parallel across queries.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "amc/tensor.hpp"

namespace amc {

/// One scored candidate. `rel` is the integer relevance: a graded judgment
/// for NDCG, or a click count when recall over clicks is wanted. Binary
/// metrics treat rel > 0 as relevant.
struct JudgedCandidate {
    std::string id;
    double score = 0.0;
    long long rel = 0;
};

using JudgedList = std::vector<JudgedCandidate>;

/// Candidates in rank order (score desc, id asc).
JudgedList ranked(JudgedList list);

/// NDCG@k with exponential gain (2^rel - 1) and log2(j+1) discount.
/// Returns nullopt (skip) when the list has fewer than k candidates or the
/// ideal DCG is zero.
std::optional<double> ndcg_at_k(const JudgedList& list, int k);

/// Fraction of the top min(k, size) ranks that are relevant, divided by k.
/// Returns nullopt for an empty list.
std::optional<double> precision_at_k(const JudgedList& list, int k);

/// Mean over relevant ranks i of precision-at-i; nullopt when nothing is
/// relevant.
std::optional<double> average_precision(const JudgedList& list);

/// 1 / rank of the first relevant candidate; nullopt when nothing is
/// relevant.
std::optional<double> reciprocal_rank(const JudgedList& list);

/// (# clicked in top k) / (# clicked overall); nullopt with zero clicked.
std::optional<double> recall_at_k(const JudgedList& list, int k);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocResult {
    double auc = 0.0;
    std::vector<RocPoint> curve;
};

/// AUC by sort-and-rank (Mann-Whitney), ties counting one half, plus the ROC
/// polyline. Throws ContractError when either side is empty.
RocResult roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives);

/// Fraction of images whose top-k ranked captions include a true one
/// (rel > 0). Each list must contain at least one true caption.
double caption_recall(const std::vector<JudgedList>& per_image, int k);

/// An aggregated metric row. k < 0 means the metric has no cutoff.
struct MetricReport {
    std::string metric;
    int k = -1;
    double value = 0.0;
    int contributing = 0;
    int skipped = 0;
};

MetricReport aggregate_ndcg(const std::vector<JudgedList>& queries, int k);
MetricReport aggregate_precision(const std::vector<JudgedList>& queries, int k);
MetricReport aggregate_map(const std::vector<JudgedList>& queries);
MetricReport aggregate_mrr(const std::vector<JudgedList>& queries);
MetricReport aggregate_recall(const std::vector<JudgedList>& queries, int k);

/// Tab-separated rows `metric  k  value  n_queries  n_skipped` with `-` for
/// an absent k.
std::string format_report(const std::vector<MetricReport>& rows);

/// Two-column `fpr  tpr` text for plotting.
std::string format_roc(const std::vector<RocPoint>& curve);

}  // namespace amc
