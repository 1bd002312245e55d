#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adk/core.hpp"

namespace adk {

/// Immutable per-class descriptor store: N classes x M description texts and
/// their unit-normalized embedding vectors, plus the softmax temperature used
/// for attention. Construction validates the full shape; once built, a bank
/// is safe to share across threads.
class DescriptorBank {
public:
    DescriptorBank(std::vector<std::string> class_names,
                   std::vector<std::vector<std::string>> descriptions,
                   std::vector<std::vector<FeatureVector>> features,
                   Temperature tau);

    std::size_t num_classes() const noexcept { return class_names_.size(); }
    std::size_t descriptors_per_class() const noexcept { return features_.front().size(); }
    std::size_t dim() const noexcept { return features_.front().front().dim(); }
    Temperature tau() const noexcept { return tau_; }

    const std::vector<std::string>& class_names() const noexcept { return class_names_; }
    const std::vector<std::string>& descriptions(std::size_t class_index) const;
    const std::vector<FeatureVector>& descriptors(std::size_t class_index) const;
    const FeatureVector& descriptor(std::size_t class_index, std::size_t m) const;

    /// FNV-1a digest over class names, texts and feature bytes.
    std::uint64_t checksum() const;

private:
    std::vector<std::string> class_names_;
    std::vector<std::vector<std::string>> descriptions_;
    std::vector<std::vector<FeatureVector>> features_;
    Temperature tau_;
};

/// Inference-ready class vectors: the handcrafted prompt embedding and the
/// compositional (mean-of-descriptors, generally non-unit) vector per class.
class KnowledgeBank {
public:
    KnowledgeBank(std::vector<std::string> class_names,
                  std::vector<FeatureVector> hand,
                  std::vector<FeatureVector> comp,
                  std::uint64_t source_bank_checksum);

    std::size_t num_classes() const noexcept { return class_names_.size(); }
    std::size_t dim() const noexcept { return hand_.front().dim(); }
    const std::vector<std::string>& class_names() const noexcept { return class_names_; }
    const std::vector<FeatureVector>& hand() const noexcept { return hand_; }
    const std::vector<FeatureVector>& comp() const noexcept { return comp_; }
    std::uint64_t source_bank_checksum() const noexcept { return source_checksum_; }

private:
    std::vector<std::string> class_names_;
    std::vector<FeatureVector> hand_;
    std::vector<FeatureVector> comp_;
    std::uint64_t source_checksum_;
};

/// Attention weights for one image: rows are classes, columns descriptors,
/// each row sums to 1.
struct AttentionMap {
    std::vector<std::vector<double>> weights;

    std::size_t num_classes() const noexcept { return weights.size(); }
    std::size_t descriptors_per_class() const noexcept {
        return weights.empty() ? 0 : weights.front().size();
    }
};

/// Per-class mean of descriptor vectors, computed with compensated summation
/// so the result is order-invariant at the 1e-12 level. Output is not
/// re-normalized.
std::vector<FeatureVector> build_compositional(const DescriptorBank& bank);

/// Convenience: compositional vectors + supplied handcrafted vectors packed
/// into a KnowledgeBank aligned with `bank`.
KnowledgeBank build_knowledge(const DescriptorBank& bank, std::vector<FeatureVector> hand);

/// Softmax over cosine(v, descriptor)/tau for one class row.
std::vector<double> attention_weights(const FeatureVector& v, const DescriptorBank& bank,
                                      std::size_t class_index);

struct InstanceKnowledge {
    std::vector<FeatureVector> vectors;  // one per class, convex combination of descriptors
    AttentionMap attention;              // the weights used, for inspection
};

/// Image-conditioned class vectors: attention-weighted sums of each class's
/// descriptors.
InstanceKnowledge build_instance_knowledge(const FeatureVector& v, const DescriptorBank& bank);

/// Keep `m_keep` descriptors per class: the first m_keep when `seed` is
/// absent, otherwise a seeded uniform sample without replacement (order of
/// the surviving descriptors is preserved).
DescriptorBank subset_descriptions(const DescriptorBank& bank, std::size_t m_keep,
                                   std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace adk
