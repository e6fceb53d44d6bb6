#include "amc/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace amc {

namespace {

constexpr const char* kMagic = "AMC-CHECKPOINT-V1";

void write_le64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le64(std::istream& is, const std::string& path) {
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8)) {
        throw DataError(path + ": truncated payload");
    }
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(bytes[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError(path + ": cannot open for writing");
    os << kMagic << "\n";
    os << "modality " << modality_name(params.hp.modality) << "\n";
    os << "d_q " << params.hp.d_q << "\n";
    os << "d_v " << params.hp.d_v << "\n";
    os << "d_k " << params.hp.d_k << "\n";
    os << "d " << params.hp.d << "\n";
    os << "r " << params.hp.r << "\n";
    params.for_each([&os](const char* name, const Tensor& t) {
        os << "tensor " << name << " " << t.shape.rank();
        for (int i = 0; i < t.shape.rank(); ++i) os << " " << t.shape[i];
        os << "\n";
    });
    os << "payload\n";
    params.for_each([&os](const char*, const Tensor& t) {
        for (double v : t.data) write_le64(os, v);
    });
    if (!os) throw DataError(path + ": write failed");
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError(path + ": cannot open");
    std::string line;
    int lineno = 1;
    if (!std::getline(is, line) || line != kMagic) {
        throw DataError(path + ":1: not a checkpoint file (bad magic)");
    }

    Hyperparams hp;
    std::string modality;
    std::vector<std::pair<std::string, Shape>> manifest;
    while (std::getline(is, line)) {
        ++lineno;
        if (line == "payload") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        auto fail = [&](const std::string& why) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + why);
        };
        if (key == "modality") {
            if (!(ls >> modality)) fail("missing modality value");
        } else if (key == "d_q" || key == "d_v" || key == "d_k" || key == "d" || key == "r") {
            int v;
            if (!(ls >> v)) fail("missing integer for " + key);
            if (key == "d_q") hp.d_q = v;
            else if (key == "d_v") hp.d_v = v;
            else if (key == "d_k") hp.d_k = v;
            else if (key == "d") hp.d = v;
            else hp.r = v;
        } else if (key == "tensor") {
            std::string name;
            int rank;
            if (!(ls >> name >> rank) || rank < 1 || rank > 3) {
                fail("malformed tensor entry");
            }
            int d0 = 0, d1 = 0, d2 = 0;
            if (rank >= 1 && !(ls >> d0)) fail("missing extent");
            if (rank >= 2 && !(ls >> d1)) fail("missing extent");
            if (rank >= 3 && !(ls >> d2)) fail("missing extent");
            Shape s = rank == 1 ? Shape{d0} : rank == 2 ? Shape{d0, d1} : Shape{d0, d1, d2};
            manifest.emplace_back(name, s);
        } else {
            fail("unknown manifest key '" + key + "'");
        }
    }
    if (line != "payload") {
        throw DataError(path + ": manifest missing payload marker");
    }
    if (modality.empty()) {
        throw DataError(path + ": manifest missing modality");
    }
    hp.modality = modality_from_name(modality);
    hp.validate();

    std::map<std::string, Tensor> tensors;
    for (const auto& [name, shape] : manifest) {
        std::vector<double> data(static_cast<size_t>(shape.numel()));
        for (double& v : data) v = read_le64(is, path);
        tensors[name] = Tensor::from(shape, std::move(data));
    }

    ModelParams params;
    params.hp = hp;
    if (hp.modality == Modality::kLateFusion) {
        params.fusion_w = Tensor::zeros(Shape{2});  // placeholder so for_each visits it
    }
    std::vector<std::string> missing;
    params.for_each([&](const char* name, Tensor& t) {
        auto it = tensors.find(name);
        if (it == tensors.end()) {
            missing.push_back(name);
            return;
        }
        t = std::move(it->second);
        tensors.erase(it);
    });
    if (!missing.empty()) {
        throw DataError(path + ": manifest missing tensor '" + missing.front() + "'");
    }
    if (!tensors.empty()) {
        throw DataError(path + ": unexpected tensor '" + tensors.begin()->first + "'");
    }

    // Shape sanity against the declared hyperparams.
    auto expect = [&](const char* name, const Tensor& t, const Shape& s) {
        if (t.shape != s) {
            throw DataError(path + ": tensor " + name + " has shape " + t.shape.str() +
                            ", expected " + s.str());
        }
    };
    expect("query_embed_w", params.query_embed_w, Shape{hp.d_q, hp.d});
    expect("query_embed_b", params.query_embed_b, Shape{hp.d});
    expect("intent_embed_w", params.intent_embed_w, Shape{hp.d_q, hp.d});
    expect("intent_embed_b", params.intent_embed_b, Shape{hp.d});
    expect("visual_proj_w", params.visual_proj_w, Shape{hp.d_v, hp.d});
    expect("attn_kernel_w", params.attn_kernel_w, Shape{hp.d_q, hp.d});
    expect("attn_kernel_b", params.attn_kernel_b, Shape{hp.d});
    expect("query_lang_w", params.query_lang_w, Shape{hp.d_q, hp.d});
    expect("keyword_lang_w", params.keyword_lang_w, Shape{hp.d_k, hp.d});
    expect("bilinear_w", params.bilinear_w, Shape{hp.d, hp.d});
    if (params.has_fusion()) expect("fusion_w", params.fusion_w, Shape{2});
    return params;
}

}  // namespace amc
