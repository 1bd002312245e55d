#include "adk/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace adk {

std::vector<FeatureVector> class_prototypes(const std::vector<FeatureVector>& images,
                                            const std::vector<std::size_t>& labels) {
    if (images.empty()) {
        throw EmptyInputError("class_prototypes: no images");
    }
    if (images.size() != labels.size()) {
        throw SchemaError("class_prototypes: " + std::to_string(images.size()) + " images vs " +
                          std::to_string(labels.size()) + " labels");
    }
    const std::size_t dim = images.front().dim();
    std::size_t num_classes = 0;
    for (std::size_t l : labels) {
        num_classes = std::max(num_classes, l + 1);
    }
    std::vector<KahanAccumulator> acc(num_classes, KahanAccumulator(dim));
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].dim() != dim) {
            throw DimensionError("class_prototypes: inconsistent image dims");
        }
        acc[labels[i]].add(images[i].span());
        ++counts[labels[i]];
    }
    std::vector<FeatureVector> out;
    out.reserve(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] == 0) {
            throw MissingClassError("class " + std::to_string(c) + " has no samples");
        }
        out.emplace_back(acc[c].take_scaled(1.0 / static_cast<double>(counts[c])));
    }
    return out;
}

SimilarityMap similarity_map(const std::vector<FeatureVector>& vectors) {
    if (vectors.size() < 2) {
        throw SchemaError("similarity_map requires C >= 2 vectors");
    }
    const std::size_t c = vectors.size();
    SimilarityMap map;
    map.matrix.assign(c, std::vector<double>(c, 0.0));
    for (std::size_t a = 0; a < c; ++a) {
        for (std::size_t b = a; b < c; ++b) {
            const double s = cosine_similarity(vectors[a], vectors[b]);
            map.matrix[a][b] = s;
            map.matrix[b][a] = s;
        }
    }
    return map;
}

namespace {

// Off-diagonal row -> distribution via softmax at temperature 1.
std::vector<double> row_distribution(const std::vector<double>& row, std::size_t skip) {
    std::vector<double> scores;
    scores.reserve(row.size() - 1);
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (j != skip) {
            scores.push_back(row[j]);
        }
    }
    return softmax(scores, Temperature(1.0)).probs();
}

}  // namespace

double map_kld(const SimilarityMap& text_map, const SimilarityMap& image_map) {
    const std::size_t c = text_map.size();
    if (c < 2) {
        throw SchemaError("map_kld requires C >= 2");
    }
    if (image_map.size() != c) {
        throw SchemaError("map_kld: map sizes " + std::to_string(c) + " vs " +
                          std::to_string(image_map.size()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        const std::vector<double> p = row_distribution(text_map.matrix[i], i);
        const std::vector<double> q = row_distribution(image_map.matrix[i], i);
        double row_kl = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            // softmax output is strictly positive, so the log is well defined
            row_kl += p[j] * std::log(p[j] / q[j]);
        }
        sum += row_kl;
    }
    const double kld = sum / static_cast<double>(c);
    if (kld < -1e-12) {
        throw InvariantError("map_kld produced a negative value: " + std::to_string(kld));
    }
    return std::max(kld, 0.0);
}

TopDescriptions top_descriptions(const FeatureVector& v, const DescriptorBank& bank,
                                 std::size_t class_index, std::size_t k) {
    const std::size_t m = bank.descriptors_per_class();
    if (k < 1 || k > m) {
        throw IndexError("k " + std::to_string(k) + " outside [1, " + std::to_string(m) + "]");
    }
    const std::vector<double> w = attention_weights(v, bank, class_index);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    TopDescriptions out;
    out.top.reserve(k);
    double listed = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t idx = order[r];
        out.top.push_back({bank.descriptions(class_index)[idx], idx, w[idx]});
        listed += w[idx];
    }
    out.other_weight = 1.0 - listed;
    return out;
}

CostBreakdown inference_cost(const CostModelParams& params, CostMethod method) {
    const double n = static_cast<double>(params.num_classes);
    const double m = static_cast<double>(params.descriptors_per_class);
    const double d = static_cast<double>(params.dim);
    const double macs_to_gflops =
        (params.convention == CountConvention::Mac ? 1.0 : 2.0) * 1e-9;

    CostBreakdown out;
    out.encode = params.image_encoder_gflops;
    // Offline encoding of the N fixed prompts, amortized into the baseline on
    // request. CoCoOp has no offline prompts (its context is image-conditioned),
    // so the flag does not apply there.
    if (params.include_prompt_encoding && method != CostMethod::CoCoOp) {
        out.text = params.text_encoder_gflops_per_prompt * n;
    }

    switch (method) {
        case CostMethod::Clip:
            out.logits = n * d * macs_to_gflops;
            out.lower_order = n * macs_to_gflops;  // class softmax exp+div
            break;
        case CostMethod::CoCoOp:
            // online text encoding of N image-conditioned prompts, every image
            out.text = params.text_encoder_gflops_per_prompt * n;
            out.logits = n * d * macs_to_gflops;
            out.lower_order = n * macs_to_gflops;
            break;
        case CostMethod::Adk:
            // descriptor similarities + attention-weighted sums
            out.knowledge = 2.0 * n * m * d * macs_to_gflops;
            // hand logits as in the baseline, plus comp and inst heads when
            // descriptors are present at all
            out.logits = (m > 0.0 ? 3.0 : 1.0) * n * d * macs_to_gflops;
            out.lower_order =
                (m > 0.0 ? n * m + 3.0 * n + 2.0 * n : n) * macs_to_gflops;  // softmaxes + fusion
            break;
    }
    out.total = out.encode + out.text + out.knowledge + out.logits;
    return out;
}

}  // namespace adk
