// Dataset bundles (directory of text record files) and the synthetic
// click-through generator with planted, modality-dependent relevance.
//
// Bundle layout: header.txt (d_q, d_v, d_k, r), queries.txt, images.txt,
// keywords.txt (variable-length keyword rows grouped by image id),
// clicks.tsv, judgments.tsv. All numbers are decimal text; ids are ASCII
// tokens without whitespace. Bundles are immutable after load.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "amc/tensor.hpp"

namespace amc {

struct ClickRecord {
    std::string query_id;
    std::string image_id;
    long long count = 0;
};

struct JudgmentRecord {
    std::string query_id;
    std::string image_id;
    int grade = 0;
};

struct DatasetBundle {
    int d_q = 0, d_v = 0, d_k = 0, r = 0;
    std::map<std::string, Tensor> queries;   // id -> [d_q]
    std::map<std::string, Tensor> images;    // id -> [r x r x d_v]
    std::map<std::string, Tensor> keywords;  // image id -> [n x d_k]; absent means n = 0
    std::vector<ClickRecord> clicks;         // file order preserved
    std::vector<JudgmentRecord> judgments;   // file order preserved

    /// Keyword matrix for an image, or nullptr when it has none.
    const Tensor* keywords_for(const std::string& image_id) const;

    /// Clicks grouped by query id, in file order within a query.
    std::map<std::string, std::vector<ClickRecord>> clicks_by_query() const;
    std::map<std::string, std::vector<JudgmentRecord>> judgments_by_query() const;
};

/// Loads and validates a bundle directory: declared dims on every record,
/// referential integrity for clicks/judgments/keywords. Errors name the file
/// and line.
DatasetBundle load_bundle(const std::string& dir);

/// Writes the six bundle files; save followed by load is bit-identical.
void save_bundle(const DatasetBundle& bundle, const std::string& dir);

/// Generator knobs. `visual_fraction` is the share of queries whose planted
/// relevance lives in the image grid; the rest plant it in keyword rows.
struct SynthSpec {
    int n_queries = 200;
    int n_images = 1000;
    int keywords_per_image = 10;
    int d_q = 16;
    int d_v = 12;
    int d_k = 12;
    int r = 3;
    int latent_dim = 4;            // d*
    double visual_fraction = 0.5;  // rho
    double noise = 0.3;
    uint64_t seed = 1;

    /// Judged distractors per query on top of its relevant images.
    int distractors_per_query = 20;

    /// Relevant images planted per query; the remaining images carry pure
    /// noise. Must satisfy relevant_per_query * n_queries <= n_images.
    int relevant_per_query = 2;

    /// Plant one decoy image per query: the query's latent in the wrong
    /// modality, lightly clicked and judged irrelevant. Decoys are what make
    /// modality gating observable; a model that reads the uninformative
    /// modality ranks them high.
    bool plant_decoys = true;

    /// Plant a different query's latent in the uninformative modality of
    /// every relevant image (mislabeled tags, visually confusable content).
    /// With confounders no fixed modality weighting ranks well, so the
    /// benefit of query-conditioned gating becomes measurable.
    bool plant_confounders = true;

    void validate() const;
};

/// Ground truth behind a generated bundle, for attention localization and
/// oracle-ranking checks.
struct PlantedTruth {
    std::map<std::string, bool> query_is_visual;
    std::map<std::string, Tensor> query_latent;                    // z per query
    std::map<std::string, int> image_cell;                         // planted grid cell
    std::map<std::string, std::vector<int>> image_keyword_rows;    // planted rows
    std::map<std::string, std::map<std::string, double>> strength; // query -> image -> lambda
    std::map<std::string, std::string> decoy_for;                  // decoy image -> query
};

struct SynthResult {
    DatasetBundle bundle;
    PlantedTruth truth;
};

/// Deterministic for a given spec. Each relevant image carries its query's
/// latent in exactly one grid cell (visual queries) or in a fifth of its
/// keyword rows (keyword queries); click counts descend with planted
/// relevance rank plus noise; grades quantize planted relevance to {0..3}.
SynthResult generate_synthetic(const SynthSpec& spec);

/// Planted-relevance score, the oracle ranking for generated bundles.
double planted_score(const PlantedTruth& truth, const std::string& query_id,
                     const std::string& image_id);

}  // namespace amc
