#pragma once

#include <span>
#include <vector>

#include "cocole/codebook.hpp"
#include "cocole/encoders.hpp"
#include "cocole/tensor.hpp"

namespace cocole {

// Coefficients of the four terms. All 1 by default (unweighted sum); a zero
// weight drops the term entirely, which is how the ablation flags work.
struct LossWeights {
    double ce = 1.0;
    double ma = 1.0;
    double orth = 1.0;
    double cc = 1.0;
};

struct ObjectiveConfig {
    double tau = 0.07;
    std::size_t k3 = 4;
    LossWeights weights;
    // Divide the orthogonality sum by its term count N(N-1)/2 instead of N(N-1).
    bool normalized_orthogonality = false;
};

struct LossBreakdown {
    Tensor ce, ma, orth, cc, total;  // scalars, graph-connected
};

// <f_v, f_t_d> / tau for every class d.
Tensor class_logits(const Tensor& image_feature, std::span<const Tensor> class_features, double tau);
// Softmax of class_logits, as plain values.
std::vector<double> class_probabilities(const Tensor& image_feature, std::span<const Tensor> class_features,
                                        double tau);

// -log p(label | x) under the temperature softmax over classes.
Tensor loss_ce(const Tensor& image_feature, std::span<const Tensor> class_features, std::size_t label, double tau);

// sum_i (1 - cos(f_v, V_i)) over the selected keys.
Tensor loss_ma(const Tensor& image_feature, std::span<const Tensor> selected_keys);

// sum_{i<j} |cos(E_t(P_i), E_t(P_j))| / (N(N-1)); each prompt encoded alone.
Tensor loss_or(const FrozenEncoders& encoders, std::span<const Tensor> prompts, bool normalized = false);

// (1/C) sum_d ||f_l_d - f_h_d||^2 over the seen classes.
Tensor loss_cc(std::span<const Tensor> learned, std::span<const Tensor> handcrafted);

struct TrainingExample {
    Tensor image_feature;  // frozen unit feature
    std::size_t label;     // index into the seen-class list
};

struct ExampleLosses {
    RetrievalResult retrieval;
    Tensor ce, ma, cc;
};

// The per-example terms: retrieve, build class features over the seen
// classes, then ce, ma and cc (terms with zero weight come back as constant 0).
ExampleLosses example_losses(const FrozenEncoders& encoders, const CodebookParams& params,
                             const TrainingExample& example, std::span<const Tensor> class_embeddings,
                             std::span<const Tensor> handcrafted, const ObjectiveConfig& config);

// Batch objective on a single graph: per-example ce/ma/cc averaged over the
// batch, orthogonality once, weighted sum.
LossBreakdown total_loss(const FrozenEncoders& encoders, const CodebookParams& params,
                         std::span<const TrainingExample> batch, std::span<const Tensor> class_embeddings,
                         std::span<const Tensor> handcrafted, const ObjectiveConfig& config);

}  // namespace cocole
