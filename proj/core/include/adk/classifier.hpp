#pragma once

#include <span>
#include <vector>

#include "adk/knowledge.hpp"

namespace adk {

/// Full per-image prediction: the three head distributions, their fusion,
/// and the argmax. fused_score is the unnormalized sum p_hand + p_desc
/// (entries in [0, 2], summing to 2); ties in the argmax break to the lowest
/// class index.
struct PredictionRecord {
    ProbabilityVector p_hand;
    ProbabilityVector p_comp;
    ProbabilityVector p_inst;
    ProbabilityVector p_desc;  // (p_comp + p_inst) / 2
    std::vector<double> fused_score;
    std::size_t predicted = 0;
};

/// Cross-entropy of each head at the true label plus their sum. When a head
/// probability underflows to exactly 0 it is clamped to 1e-300 before the
/// log and `clamped` is set.
struct LossBreakdown {
    double hand = 0.0;
    double comp = 0.0;
    double inst = 0.0;
    double total = 0.0;
    bool clamped = false;
};

/// Softmax over cosine(v, class_vectors[n]) / tau.
ProbabilityVector head_probabilities(const FeatureVector& v,
                                     const std::vector<FeatureVector>& class_vectors,
                                     Temperature tau);

/// Assemble a record from the three head distributions (fusion arithmetic
/// only; no similarity computation).
PredictionRecord fuse_heads(ProbabilityVector hand, ProbabilityVector comp,
                            ProbabilityVector inst);

/// Run all three heads for one image and fuse. kb and bank must agree on
/// class names, order and dimension (SchemaError otherwise); tau comes from
/// the bank.
PredictionRecord classify(const FeatureVector& v, const KnowledgeBank& kb,
                          const DescriptorBank& bank);

LossBreakdown loss(const PredictionRecord& record, std::size_t label);

/// Exact gradient of the total loss with respect to the image vector,
/// including the chain through the attention weights and through the
/// cosine normalization of v. Descriptor and handcrafted features are
/// treated as constants.
FeatureVector grad_image(const FeatureVector& v, const KnowledgeBank& kb,
                         const DescriptorBank& bank, std::size_t label);

/// kb and bank physically restricted to `class_subset` (order preserved as
/// given). SchemaError on empty, duplicate or out-of-range subsets.
std::pair<KnowledgeBank, DescriptorBank> restrict_classes(const KnowledgeBank& kb,
                                                          const DescriptorBank& bank,
                                                          std::span<const std::size_t> class_subset);

/// classify() on the restricted problem; probabilities renormalize over the
/// subset and `predicted` is subset-relative.
PredictionRecord classify_subset(const FeatureVector& v, const KnowledgeBank& kb,
                                 const DescriptorBank& bank,
                                 std::span<const std::size_t> class_subset);

}  // namespace adk
