#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "adk/knowledge.hpp"

namespace adk {

/// Pairwise cosine matrix among C class-level vectors.
struct SimilarityMap {
    std::vector<std::vector<double>> matrix;

    std::size_t size() const noexcept { return matrix.size(); }
};

enum class CountConvention {
    Mac,    // one multiply-accumulate counted as one flop
    Flop2,  // one multiply-accumulate counted as two flops
};

enum class CostMethod {
    Clip,    // frozen prompt features, one image encode + class logits
    CoCoOp,  // online text encoding of N image-conditioned prompts per image
    Adk,     // Clip plus descriptor attention, weighted sums and two extra heads
};

struct CostModelParams {
    double image_encoder_gflops = 0.0;
    double text_encoder_gflops_per_prompt = 0.0;
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::size_t descriptors_per_class = 0;
    CountConvention convention = CountConvention::Mac;
    // When true, the baseline's offline encoding of the N class prompts is
    // charged to the `text` column instead of being treated as free.
    bool include_prompt_encoding = false;
};

/// Per-image inference cost in GFLOPs. `total` sums encode + text +
/// knowledge + logits; exponentials/divisions of softmax and fusion are
/// lower-order and reported separately in `lower_order`, outside the total.
struct CostBreakdown {
    double encode = 0.0;
    double text = 0.0;
    double knowledge = 0.0;
    double logits = 0.0;
    double lower_order = 0.0;
    double total = 0.0;
};

/// Mean image vector per class (no re-normalization). Labels must cover
/// every class in [0, C) where C = max(label)+1; a class with zero samples
/// raises MissingClassError. An antipodal pair can yield a (near-)zero
/// prototype; downstream cosine use then raises DegenerateVectorError.
std::vector<FeatureVector> class_prototypes(const std::vector<FeatureVector>& images,
                                            const std::vector<std::size_t>& labels);

SimilarityMap similarity_map(const std::vector<FeatureVector>& vectors);

/// Row-wise discrepancy between two similarity maps: each row (diagonal
/// excluded) becomes a distribution via softmax at temperature 1, and the
/// result is the mean over rows of KL(text_row || image_row). The
/// softmax convention makes absolute values convention-dependent; orderings
/// between maps are the meaningful output.
double map_kld(const SimilarityMap& text_map, const SimilarityMap& image_map);

struct RankedDescription {
    std::string text;
    std::size_t index = 0;  // descriptor index within the class
    double weight = 0.0;
};

struct TopDescriptions {
    std::vector<RankedDescription> top;  // descending weight, ties by lower index
    double other_weight = 0.0;           // 1 - sum of listed weights
};

TopDescriptions top_descriptions(const FeatureVector& v, const DescriptorBank& bank,
                                 std::size_t class_index, std::size_t k);

CostBreakdown inference_cost(const CostModelParams& params, CostMethod method);

}  // namespace adk
