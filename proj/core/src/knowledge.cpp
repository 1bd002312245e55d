#include "adk/knowledge.hpp"

#include <cmath>
#include <unordered_set>

#include "adk/rng.hpp"

namespace adk {

DescriptorBank::DescriptorBank(std::vector<std::string> class_names,
                               std::vector<std::vector<std::string>> descriptions,
                               std::vector<std::vector<FeatureVector>> features,
                               Temperature tau)
    : class_names_(std::move(class_names)),
      descriptions_(std::move(descriptions)),
      features_(std::move(features)),
      tau_(tau) {
    const std::size_t n = class_names_.size();
    if (n == 0) {
        throw SchemaError("descriptor bank has no classes");
    }
    if (descriptions_.size() != n || features_.size() != n) {
        throw SchemaError("descriptor bank arrays disagree on class count");
    }
    std::unordered_set<std::string> seen;
    for (const auto& name : class_names_) {
        if (name.empty()) {
            throw SchemaError("descriptor bank has an empty class name");
        }
        if (!seen.insert(name).second) {
            throw SchemaError("duplicate class name: " + name);
        }
    }
    const std::size_t m = features_.front().size();
    if (m == 0) {
        throw SchemaError("descriptor bank requires M >= 1");
    }
    const std::size_t d = features_.front().front().dim();
    for (std::size_t c = 0; c < n; ++c) {
        if (features_[c].size() != m || descriptions_[c].size() != m) {
            throw SchemaError("ragged descriptor bank: class " + class_names_[c] +
                              " has " + std::to_string(features_[c].size()) +
                              " descriptors, expected " + std::to_string(m));
        }
        for (std::size_t j = 0; j < m; ++j) {
            const FeatureVector& f = features_[c][j];
            if (f.dim() != d) {
                throw DimensionError("descriptor dim mismatch in class " + class_names_[c]);
            }
            if (!f.is_unit()) {
                throw SchemaError("descriptor " + std::to_string(j) + " of class " +
                                  class_names_[c] + " is not unit-normalized");
            }
            if (descriptions_[c][j].empty()) {
                throw SchemaError("empty description text in class " + class_names_[c]);
            }
        }
    }
}

const std::vector<std::string>& DescriptorBank::descriptions(std::size_t class_index) const {
    if (class_index >= num_classes()) {
        throw IndexError("class index " + std::to_string(class_index) + " out of range");
    }
    return descriptions_[class_index];
}

const std::vector<FeatureVector>& DescriptorBank::descriptors(std::size_t class_index) const {
    if (class_index >= num_classes()) {
        throw IndexError("class index " + std::to_string(class_index) + " out of range");
    }
    return features_[class_index];
}

const FeatureVector& DescriptorBank::descriptor(std::size_t class_index, std::size_t m) const {
    const auto& row = descriptors(class_index);
    if (m >= row.size()) {
        throw IndexError("descriptor index " + std::to_string(m) + " out of range");
    }
    return row[m];
}

std::uint64_t DescriptorBank::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t c = 0; c < num_classes(); ++c) {
        h = fnv1a64_append_string(h, class_names_[c]);
        for (std::size_t j = 0; j < descriptors_per_class(); ++j) {
            h = fnv1a64_append_string(h, descriptions_[c][j]);
            h = fnv1a64_append_doubles(h, features_[c][j].span());
        }
    }
    return h;
}

KnowledgeBank::KnowledgeBank(std::vector<std::string> class_names,
                             std::vector<FeatureVector> hand,
                             std::vector<FeatureVector> comp,
                             std::uint64_t source_bank_checksum)
    : class_names_(std::move(class_names)),
      hand_(std::move(hand)),
      comp_(std::move(comp)),
      source_checksum_(source_bank_checksum) {
    const std::size_t n = class_names_.size();
    if (n == 0) {
        throw SchemaError("knowledge bank has no classes");
    }
    if (hand_.size() != n || comp_.size() != n) {
        throw SchemaError("knowledge bank arrays disagree on class count");
    }
    const std::size_t d = hand_.front().dim();
    for (std::size_t c = 0; c < n; ++c) {
        if (hand_[c].dim() != d || comp_[c].dim() != d) {
            throw DimensionError("knowledge bank vectors disagree on dim");
        }
    }
}

std::vector<FeatureVector> build_compositional(const DescriptorBank& bank) {
    const std::size_t m = bank.descriptors_per_class();
    std::vector<FeatureVector> out;
    out.reserve(bank.num_classes());
    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
        KahanAccumulator acc(bank.dim());
        for (std::size_t j = 0; j < m; ++j) {
            acc.add(bank.descriptor(c, j).span());
        }
        out.emplace_back(acc.take_scaled(1.0 / static_cast<double>(m)));
    }
    return out;
}

KnowledgeBank build_knowledge(const DescriptorBank& bank, std::vector<FeatureVector> hand) {
    if (hand.size() != bank.num_classes()) {
        throw SchemaError("hand vector count " + std::to_string(hand.size()) +
                          " != class count " + std::to_string(bank.num_classes()));
    }
    for (const auto& h : hand) {
        if (h.dim() != bank.dim()) {
            throw DimensionError("hand vector dim != bank dim");
        }
    }
    return KnowledgeBank(bank.class_names(), std::move(hand), build_compositional(bank),
                         bank.checksum());
}

std::vector<double> attention_weights(const FeatureVector& v, const DescriptorBank& bank,
                                      std::size_t class_index) {
    if (v.dim() != bank.dim()) {
        throw DimensionError("image dim " + std::to_string(v.dim()) + " != bank dim " +
                             std::to_string(bank.dim()));
    }
    const auto& row = bank.descriptors(class_index);
    std::vector<double> scores(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
        scores[j] = cosine_similarity(v, row[j]);
    }
    return softmax(scores, bank.tau()).probs();
}

InstanceKnowledge build_instance_knowledge(const FeatureVector& v, const DescriptorBank& bank) {
    if (v.dim() != bank.dim()) {
        throw DimensionError("image dim " + std::to_string(v.dim()) + " != bank dim " +
                             std::to_string(bank.dim()));
    }
    InstanceKnowledge out;
    out.vectors.reserve(bank.num_classes());
    out.attention.weights.reserve(bank.num_classes());
    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
        std::vector<double> w = attention_weights(v, bank, c);
        KahanAccumulator acc(bank.dim());
        for (std::size_t j = 0; j < w.size(); ++j) {
            acc.add(bank.descriptor(c, j).span(), w[j]);
        }
        out.vectors.emplace_back(acc.take_scaled(1.0));
        out.attention.weights.push_back(std::move(w));
    }
    return out;
}

DescriptorBank subset_descriptions(const DescriptorBank& bank, std::size_t m_keep,
                                   std::optional<std::uint64_t> seed) {
    const std::size_t m = bank.descriptors_per_class();
    if (m_keep < 1 || m_keep > m) {
        throw IndexError("m_keep " + std::to_string(m_keep) + " outside [1, " +
                         std::to_string(m) + "]");
    }
    std::optional<Rng> rng;
    if (seed) {
        rng.emplace(*seed);
    }
    std::vector<std::vector<std::string>> texts(bank.num_classes());
    std::vector<std::vector<FeatureVector>> feats(bank.num_classes());
    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
        std::vector<std::size_t> keep;
        if (rng) {
            keep = rng->sample_without_replacement(m, m_keep);
        } else {
            keep.resize(m_keep);
            for (std::size_t j = 0; j < m_keep; ++j) {
                keep[j] = j;
            }
        }
        texts[c].reserve(m_keep);
        feats[c].reserve(m_keep);
        for (std::size_t j : keep) {
            texts[c].push_back(bank.descriptions(c)[j]);
            feats[c].push_back(bank.descriptor(c, j));
        }
    }
    return DescriptorBank(bank.class_names(), std::move(texts), std::move(feats), bank.tau());
}

}  // namespace adk
