// Finite-difference validation of the full model + ranking-loss gradients.
// Seeds whose forward pass lands near a ReLU kink or a hinge kink are
// resampled so the central difference is trustworthy.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amc/model.hpp"

namespace amc {

struct GradCheckShapes {
    int d_q = 7;
    int d_v = 5;
    int d_k = 6;
    int d = 4;
    int r = 3;
    int n_keywords = 3;
    int t = 2;  // negatives per tuple
};

struct GradCheckEntry {
    std::string tensor;
    double worst_rel_err = 0.0;
    std::vector<int> worst_index;  // multi-index of the worst entry
    int worst_seed = 0;
};

struct GradCheckReport {
    GradCheckShapes shapes;
    Modality modality = Modality::kFull;
    int seeds = 0;
    double step = 1e-5;
    double tol = 1e-4;
    std::vector<GradCheckEntry> entries;  // one per parameter tensor

    bool passed() const;
    /// Fixed-format report, identical for identical seeds.
    std::string text() const;
};

GradCheckReport run_model_gradcheck(const GradCheckShapes& shapes = {}, int seeds = 20,
                                    double tol = 1e-4, uint64_t base_seed = 1,
                                    Modality modality = Modality::kFull);

}  // namespace amc
