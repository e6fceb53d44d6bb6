#include "amc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "amc/rng.hpp"

namespace fs = std::filesystem;

namespace amc {

namespace {

// %.17g survives a text round-trip bit-exactly for finite doubles.
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& tok, const std::string& where) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw DataError(where + ": bad number '" + tok + "'");
    }
    return v;
}

long long parse_int(const std::string& tok, const std::string& where) {
    char* end = nullptr;
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0') {
        throw DataError(where + ": bad integer '" + tok + "'");
    }
    return v;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

std::string loc(const std::string& file, int lineno) {
    return file + ":" + std::to_string(lineno);
}

// Applies `fn(lineno, tokens)` to every non-empty line.
template <class F>
void for_each_line(const std::string& path, F&& fn) {
    std::ifstream is(path);
    if (!is) throw DataError(path + ": missing file");
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto toks = split_ws(line);
        if (toks.empty()) continue;
        fn(lineno, toks);
    }
}

}  // namespace

const Tensor* DatasetBundle::keywords_for(const std::string& image_id) const {
    auto it = keywords.find(image_id);
    return it == keywords.end() ? nullptr : &it->second;
}

std::map<std::string, std::vector<ClickRecord>> DatasetBundle::clicks_by_query() const {
    std::map<std::string, std::vector<ClickRecord>> out;
    for (const auto& c : clicks) out[c.query_id].push_back(c);
    return out;
}

std::map<std::string, std::vector<JudgmentRecord>> DatasetBundle::judgments_by_query() const {
    std::map<std::string, std::vector<JudgmentRecord>> out;
    for (const auto& j : judgments) out[j.query_id].push_back(j);
    return out;
}

DatasetBundle load_bundle(const std::string& dir) {
    DatasetBundle b;
    const std::string header = dir + "/header.txt";
    std::map<std::string, int> dims;
    for_each_line(header, [&](int lineno, const std::vector<std::string>& toks) {
        if (toks.size() != 2) {
            throw DataError(loc(header, lineno) + ": expected 'key value'");
        }
        if (toks[0] != "d_q" && toks[0] != "d_v" && toks[0] != "d_k" && toks[0] != "r") {
            throw DataError(loc(header, lineno) + ": unknown header key '" + toks[0] + "'");
        }
        if (dims.count(toks[0])) {
            throw DataError(loc(header, lineno) + ": duplicate header key '" + toks[0] + "'");
        }
        const long long v = parse_int(toks[1], loc(header, lineno));
        if (v < 1) throw DataError(loc(header, lineno) + ": " + toks[0] + " must be >= 1");
        dims[toks[0]] = static_cast<int>(v);
    });
    for (const char* key : {"d_q", "d_v", "d_k", "r"}) {
        if (!dims.count(key)) throw DataError(header + ": missing key '" + std::string(key) + "'");
    }
    b.d_q = dims["d_q"];
    b.d_v = dims["d_v"];
    b.d_k = dims["d_k"];
    b.r = dims["r"];

    auto read_vectors = [](const std::string& path, int want,
                           std::map<std::string, Tensor>& out, const Shape& shape) {
        for_each_line(path, [&](int lineno, const std::vector<std::string>& toks) {
            if (static_cast<int>(toks.size()) != want + 1) {
                throw DataError(loc(path, lineno) + ": expected id plus " + std::to_string(want) +
                                " values, got " + std::to_string(toks.size() - 1));
            }
            if (out.count(toks[0])) {
                throw DataError(loc(path, lineno) + ": duplicate id '" + toks[0] + "'");
            }
            std::vector<double> vals(static_cast<size_t>(want));
            for (int i = 0; i < want; ++i) {
                vals[static_cast<size_t>(i)] = parse_double(toks[static_cast<size_t>(i) + 1],
                                                            loc(path, lineno));
            }
            out[toks[0]] = Tensor::from(shape, std::move(vals));
        });
    };
    read_vectors(dir + "/queries.txt", b.d_q, b.queries, Shape{b.d_q});
    read_vectors(dir + "/images.txt", b.r * b.r * b.d_v, b.images, Shape{b.r, b.r, b.d_v});

    // Keyword rows, grouped per image; n varies per image.
    const std::string kwpath = dir + "/keywords.txt";
    std::map<std::string, std::vector<double>> rows;
    for_each_line(kwpath, [&](int lineno, const std::vector<std::string>& toks) {
        if (static_cast<int>(toks.size()) != b.d_k + 1) {
            throw DataError(loc(kwpath, lineno) + ": expected image id plus " +
                            std::to_string(b.d_k) + " values, got " +
                            std::to_string(toks.size() - 1));
        }
        if (!b.images.count(toks[0])) {
            throw DataError(loc(kwpath, lineno) + ": dangling reference to image '" + toks[0] +
                            "'");
        }
        auto& flat = rows[toks[0]];
        for (int i = 0; i < b.d_k; ++i) {
            flat.push_back(parse_double(toks[static_cast<size_t>(i) + 1], loc(kwpath, lineno)));
        }
    });
    for (auto& [id, flat] : rows) {
        const int n = static_cast<int>(flat.size()) / b.d_k;
        b.keywords[id] = Tensor::from(Shape{n, b.d_k}, std::move(flat));
    }

    const std::string clpath = dir + "/clicks.tsv";
    std::set<std::pair<std::string, std::string>> seen_clicks;
    for_each_line(clpath, [&](int lineno, const std::vector<std::string>& toks) {
        if (toks.size() != 3) {
            throw DataError(loc(clpath, lineno) + ": expected 'query image count'");
        }
        if (!b.queries.count(toks[0])) {
            throw DataError(loc(clpath, lineno) + ": dangling reference to query '" + toks[0] +
                            "'");
        }
        if (!b.images.count(toks[1])) {
            throw DataError(loc(clpath, lineno) + ": dangling reference to image '" + toks[1] +
                            "'");
        }
        if (!seen_clicks.insert({toks[0], toks[1]}).second) {
            throw DataError(loc(clpath, lineno) + ": duplicate click row for (" + toks[0] + ", " +
                            toks[1] + ")");
        }
        const long long count = parse_int(toks[2], loc(clpath, lineno));
        if (count < 0) throw DataError(loc(clpath, lineno) + ": negative click count");
        b.clicks.push_back({toks[0], toks[1], count});
    });

    const std::string jdpath = dir + "/judgments.tsv";
    std::set<std::pair<std::string, std::string>> seen_judgments;
    for_each_line(jdpath, [&](int lineno, const std::vector<std::string>& toks) {
        if (toks.size() != 3) {
            throw DataError(loc(jdpath, lineno) + ": expected 'query image grade'");
        }
        if (!b.queries.count(toks[0])) {
            throw DataError(loc(jdpath, lineno) + ": dangling reference to query '" + toks[0] +
                            "'");
        }
        if (!b.images.count(toks[1])) {
            throw DataError(loc(jdpath, lineno) + ": dangling reference to image '" + toks[1] +
                            "'");
        }
        if (!seen_judgments.insert({toks[0], toks[1]}).second) {
            throw DataError(loc(jdpath, lineno) + ": duplicate judgment row for (" + toks[0] +
                            ", " + toks[1] + ")");
        }
        const long long grade = parse_int(toks[2], loc(jdpath, lineno));
        if (grade < 0) throw DataError(loc(jdpath, lineno) + ": negative grade");
        b.judgments.push_back({toks[0], toks[1], static_cast<int>(grade)});
    });
    return b;
}

void save_bundle(const DatasetBundle& bundle, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError(dir + ": cannot create directory (" + ec.message() + ")");

    auto open = [](const std::string& path) {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw DataError(path + ": cannot open for writing");
        return os;
    };

    {
        auto os = open(dir + "/header.txt");
        os << "d_q " << bundle.d_q << "\n"
           << "d_v " << bundle.d_v << "\n"
           << "d_k " << bundle.d_k << "\n"
           << "r " << bundle.r << "\n";
    }
    {
        auto os = open(dir + "/queries.txt");
        for (const auto& [id, t] : bundle.queries) {
            os << id;
            for (double v : t.data) os << " " << fmt(v);
            os << "\n";
        }
    }
    {
        auto os = open(dir + "/images.txt");
        for (const auto& [id, t] : bundle.images) {
            os << id;
            for (double v : t.data) os << " " << fmt(v);
            os << "\n";
        }
    }
    {
        auto os = open(dir + "/keywords.txt");
        for (const auto& [id, t] : bundle.keywords) {
            const int n = t.shape[0];
            for (int row = 0; row < n; ++row) {
                os << id;
                for (int c = 0; c < bundle.d_k; ++c) os << " " << fmt(t.at(row, c));
                os << "\n";
            }
        }
    }
    {
        auto os = open(dir + "/clicks.tsv");
        for (const auto& c : bundle.clicks) {
            os << c.query_id << "\t" << c.image_id << "\t" << c.count << "\n";
        }
    }
    {
        auto os = open(dir + "/judgments.tsv");
        for (const auto& j : bundle.judgments) {
            os << j.query_id << "\t" << j.image_id << "\t" << j.grade << "\n";
        }
    }
}

void SynthSpec::validate() const {
    if (n_queries < 1 || n_images < 1 || keywords_per_image < 1) {
        throw ConfigError("synthetic counts must be >= 1");
    }
    if (relevant_per_query < 1) {
        throw ConfigError("relevant_per_query must be >= 1");
    }
    const long long planted = static_cast<long long>(relevant_per_query + (plant_decoys ? 1 : 0));
    if (planted * n_queries > n_images) {
        throw ConfigError("need (relevant_per_query + decoys) * n_queries <= n_images; add "
                          "images, lower relevant_per_query, or set plant_decoys=0");
    }
    if (d_q < 1 || d_v < 1 || d_k < 1 || r < 1) {
        throw ConfigError("synthetic dims must be >= 1");
    }
    if (latent_dim < 1 || latent_dim > std::min({d_q, d_v, d_k})) {
        throw ConfigError("latent_dim must satisfy 1 <= d* <= min(d_q, d_v, d_k)");
    }
    if (2 * latent_dim > d_v || 2 * latent_dim > d_k) {
        throw ConfigError("image-side dims must fit the latent's split code: need "
                          "d_v, d_k >= 2 * latent_dim");
    }
    if (latent_dim + 1 > d_q) {
        throw ConfigError("need d_q >= latent_dim + 1 (one coordinate carries the query type)");
    }
    if (visual_fraction < 0.0 || visual_fraction > 1.0) {
        throw ConfigError("visual_fraction must lie in [0, 1]");
    }
    if (noise < 0.0) throw ConfigError("noise must be >= 0");
    if (distractors_per_query < 0) throw ConfigError("distractors_per_query must be >= 0");
}

namespace {

std::string padded_id(const char* prefix, int index, int total) {
    int width = 1;
    for (int v = total - 1; v >= 10; v /= 10) ++width;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, std::min(width, 12), index);
    return buf;
}

// Signal amplitudes for planted latent content, relative to the noise tilt.
// The keyword side is stronger because LAN pools the signal over the whole
// keyword set (only a fifth of the rows carry it), while VAN's signal sits
// in a single attended cell. The visual side additionally carries more tilt
// noise: grid features aggregate background clutter.
constexpr double kVisualGain = 2.0;
constexpr double kKeywordGain = 3.5;
constexpr double kVisualNoiseFactor = 1.0;

// Planted cells and rows carry more feature energy than background clutter,
// the way detector activations spike on real objects and curated tags.
constexpr double kPlantNorm = 1.5;

// Amplitude of the query-type coordinate. Loud enough that every query
// projection separates the two query populations from initialization on.
constexpr double kTypeGain = 3.0;

}  // namespace

SynthResult generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    SynthResult out;
    DatasetBundle& b = out.bundle;
    PlantedTruth& truth = out.truth;
    b.d_q = spec.d_q;
    b.d_v = spec.d_v;
    b.d_k = spec.d_k;
    b.r = spec.r;

    const int m_rel = spec.relevant_per_query;
    const int n_visual = static_cast<int>(std::lround(spec.visual_fraction * spec.n_queries));
    const int cells = spec.r * spec.r;
    const int planted_rows = std::max(1, spec.keywords_per_image / 5);

    std::vector<std::string> query_ids(static_cast<size_t>(spec.n_queries));
    std::vector<std::string> image_ids(static_cast<size_t>(spec.n_images));
    for (int i = 0; i < spec.n_queries; ++i) query_ids[static_cast<size_t>(i)] = padded_id("q", i, spec.n_queries);
    for (int j = 0; j < spec.n_images; ++j) image_ids[static_cast<size_t>(j)] = padded_id("img", j, spec.n_images);

    // Queries: unit latent in the leading coordinates, a type flag, noise padding.
    for (int i = 0; i < spec.n_queries; ++i) {
        const bool visual = i < n_visual;
        Tensor z = Tensor::zeros(Shape{spec.latent_dim});
        double zn = 0.0;
        for (double& v : z.data) {
            v = rng.normal();
            zn += v * v;
        }
        zn = std::sqrt(zn);
        if (zn < 1e-12) zn = 1.0;
        for (double& v : z.data) v /= zn;

        Tensor q = Tensor::zeros(Shape{spec.d_q});
        for (int c = 0; c < spec.latent_dim; ++c) q[c] = z[c];
        q[spec.latent_dim] = visual ? kTypeGain : -kTypeGain;
        for (int c = spec.latent_dim + 1; c < spec.d_q; ++c) q[c] = spec.noise * rng.normal();

        const std::string& qid = query_ids[static_cast<size_t>(i)];
        b.queries[qid] = std::move(q);
        truth.query_is_visual[qid] = visual;
        truth.query_latent[qid] = std::move(z);
    }

    // Image layout: [0, m_rel*Q) relevant, then one decoy per query when
    // enabled, then pure-noise filler.
    const int decoy_base = m_rel * spec.n_queries;
    const int decoy_count = spec.plant_decoys ? spec.n_queries : 0;

    // Every grid cell and keyword row is a unit-norm direction (feature
    // extractors emit comparable-magnitude embeddings). Planted content tilts
    // the direction toward the latent's nonnegative split code
    // [relu(z); relu(-z)], the kind of pattern a post-ReLU extractor emits;
    // higher relevance means a cleaner tilt.
    auto unit_direction = [&](int dim) {
        Tensor u = Tensor::zeros(Shape{dim});
        double n = 0.0;
        for (double& v : u.data) {
            v = rng.normal();
            n += v * v;
        }
        n = std::sqrt(n);
        if (n < 1e-12) {
            u[0] = 1.0;
            return u;
        }
        for (double& v : u.data) v /= n;
        return u;
    };
    auto split_code = [&](const Tensor& z, int dim) {
        Tensor p = Tensor::zeros(Shape{dim});
        for (int c = 0; c < spec.latent_dim; ++c) {
            p[c] = z[c] > 0 ? z[c] : 0.0;
            p[spec.latent_dim + c] = z[c] < 0 ? -z[c] : 0.0;
        }
        return p;  // unit norm because |z| is
    };
    auto planted_direction = [&](const Tensor& z, int dim, double strength, double gain) {
        Tensor p = split_code(z, dim);
        Tensor eta = unit_direction(dim);
        Tensor out = Tensor::zeros(Shape{dim});
        double n = 0.0;
        for (int c = 0; c < dim; ++c) {
            out[c] = gain * strength * p[c] + spec.noise * eta[c];
            n += out[c] * out[c];
        }
        n = std::sqrt(n);
        if (n < 1e-12) n = 1.0;
        for (double& v : out.data) v *= kPlantNorm / n;
        return out;
    };
    auto plant_cell = [&](Tensor& map, const Tensor& z, double strength) {
        const int cell = static_cast<int>(rng.below(cells));
        Tensor dir = planted_direction(z, spec.d_v, strength / kVisualNoiseFactor, kVisualGain);
        for (int c = 0; c < spec.d_v; ++c) {
            map.data[static_cast<size_t>(cell) * spec.d_v + c] = dir[c];
        }
        return cell;
    };
    auto plant_rows = [&](Tensor& kws, const Tensor& z, double strength) {
        std::vector<int> all_rows(static_cast<size_t>(spec.keywords_per_image));
        for (int t = 0; t < spec.keywords_per_image; ++t) all_rows[static_cast<size_t>(t)] = t;
        rng.shuffle(all_rows);
        std::vector<int> rows(all_rows.begin(), all_rows.begin() + planted_rows);
        std::sort(rows.begin(), rows.end());
        for (int row : rows) {
            Tensor dir = planted_direction(z, spec.d_k, strength, kKeywordGain);
            for (int c = 0; c < spec.d_k; ++c) kws.at(row, c) = dir[c];
        }
        return rows;
    };

    for (int j = 0; j < spec.n_images; ++j) {
        const std::string& iid = image_ids[static_cast<size_t>(j)];
        Tensor map = Tensor::zeros(Shape{spec.r, spec.r, spec.d_v});
        for (int cell = 0; cell < cells; ++cell) {
            Tensor dir = unit_direction(spec.d_v);
            for (int c = 0; c < spec.d_v; ++c) {
                map.data[static_cast<size_t>(cell) * spec.d_v + c] = dir[c];
            }
        }
        Tensor kws = Tensor::zeros(Shape{spec.keywords_per_image, spec.d_k});
        for (int row = 0; row < spec.keywords_per_image; ++row) {
            Tensor dir = unit_direction(spec.d_k);
            for (int c = 0; c < spec.d_k; ++c) kws.at(row, c) = dir[c];
        }

        if (j < decoy_base) {
            const int owner = j / m_rel;
            const std::string& qid = query_ids[static_cast<size_t>(owner)];
            const int rank = j % m_rel;
            const double lambda =
                m_rel == 1 ? 1.0 : 1.0 - 0.3 * static_cast<double>(rank) / (m_rel - 1);
            const Tensor& z = truth.query_latent[qid];
            // Confounder: some other query's latent planted in the wrong
            // modality of every relevant image (mislabeled tags, visually
            // confusable content). The visual plant is stronger because the
            // grid's query-kernel attention is biased toward salient cells,
            // so a weak visual lure would go unread.
            const Tensor* confound = nullptr;
            if (spec.plant_confounders && spec.n_queries > 1) {
                int other = static_cast<int>(rng.below(spec.n_queries - 1));
                if (other >= owner) ++other;
                confound = &truth.query_latent[query_ids[static_cast<size_t>(other)]];
            }
            if (truth.query_is_visual[qid]) {
                truth.image_cell[iid] = plant_cell(map, z, lambda);
                if (confound) plant_rows(kws, *confound, 1.0);
            } else {
                truth.image_keyword_rows[iid] = plant_rows(kws, z, lambda);
                if (confound) plant_cell(map, *confound, 2.0);
            }
            truth.strength[qid][iid] = lambda;
        } else if (j < decoy_base + decoy_count) {
            // Decoy: the query's latent planted in the wrong modality, so a
            // model that cannot gate modalities ranks it high.
            const int owner = j - decoy_base;
            const std::string& qid = query_ids[static_cast<size_t>(owner)];
            const Tensor& z = truth.query_latent[qid];
            if (truth.query_is_visual[qid]) {
                plant_rows(kws, z, 1.0);
            } else {
                plant_cell(map, z, 1.0);
            }
            truth.decoy_for[iid] = qid;
        }
        b.images[iid] = std::move(map);
        b.keywords[iid] = std::move(kws);
    }

    // Clicks: descending with planted rank, plus integer noise, floor 2;
    // decoys attract a single stray click. Judgments: graded relevants, the
    // grade-0 decoy, then grade-0 distractors.
    for (int i = 0; i < spec.n_queries; ++i) {
        const std::string& qid = query_ids[static_cast<size_t>(i)];
        std::set<int> taken;
        for (int k = 0; k < m_rel; ++k) {
            const int j = i * m_rel + k;
            taken.insert(j);
            const std::string& iid = image_ids[static_cast<size_t>(j)];
            long long count = 10LL * (m_rel - k);
            if (spec.noise > 0.0) {
                count += std::llround(3.0 * spec.noise * rng.normal());
            }
            if (count < 2) count = 2;
            b.clicks.push_back({qid, iid, count});

            const double lambda = truth.strength[qid][iid];
            int grade;
            if (m_rel == 1) {
                grade = 3;
            } else {
                const double t = (lambda - 0.7) / 0.3;  // back to [0, 1]
                grade = 1 + std::min(2, static_cast<int>(t * 2.9999));
            }
            b.judgments.push_back({qid, iid, grade});
        }
        if (spec.plant_decoys) {
            const int j = decoy_base + i;
            taken.insert(j);
            b.clicks.push_back({qid, image_ids[static_cast<size_t>(j)], 1});
            b.judgments.push_back({qid, image_ids[static_cast<size_t>(j)], 0});
        }
        int want = std::min(spec.distractors_per_query,
                            spec.n_images - static_cast<int>(taken.size()));
        std::set<int> chosen;
        while (static_cast<int>(chosen.size()) < want) {
            const int j = static_cast<int>(rng.below(spec.n_images));
            if (taken.count(j) || chosen.count(j)) continue;
            chosen.insert(j);
            b.judgments.push_back({qid, image_ids[static_cast<size_t>(j)], 0});
        }
    }
    return out;
}

double planted_score(const PlantedTruth& truth, const std::string& query_id,
                     const std::string& image_id) {
    auto qi = truth.strength.find(query_id);
    if (qi == truth.strength.end()) return 0.0;
    auto ii = qi->second.find(image_id);
    return ii == qi->second.end() ? 0.0 : ii->second;
}

}  // namespace amc
