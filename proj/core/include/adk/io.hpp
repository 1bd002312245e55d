#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adk/knowledge.hpp"

namespace adk {

// --- binary feature cache ("ADKF", version 1) -------------------------------
//
// Little-endian throughout, no padding. Header:
//   magic "ADKF" | u32 version | u32 dtype | u32 dim | u64 record_count | u32 kind
// Records, per kind:
//   Image: u32 name_len, name bytes, u32 label,                payload real[dim]
//   Hand:  u32 name_len, name bytes, u32 class_index,          payload real[dim]
//   Desc:  u32 name_len, name bytes, u32 class_index, u32 desc_index, payload
// Payload reals are f32 or f64 per dtype; the documented byte layout lives in
// docs/formats.md. read/decode return stored payloads bitwise (promoted to
// double for f32); unit normalization happens at ingestion, not here.

inline constexpr std::uint32_t kCacheVersion = 1;
inline constexpr std::uint32_t kUnlabeled = 0xffffffffu;

enum class CacheKind : std::uint32_t { Image = 0, Hand = 1, Desc = 2 };
enum class CacheDtype : std::uint32_t { F32 = 0, F64 = 1 };

struct CacheRecord {
    std::string name;
    std::uint32_t class_index = 0;  // Image: label (kUnlabeled if unknown)
    std::uint32_t desc_index = 0;   // Desc only
    std::vector<double> payload;
};

struct FeatureCache {
    CacheKind kind = CacheKind::Image;
    CacheDtype dtype = CacheDtype::F64;
    std::uint32_t dim = 0;
    std::vector<CacheRecord> records;
};

std::vector<unsigned char> encode_cache(const FeatureCache& cache);
FeatureCache decode_cache(std::span<const unsigned char> bytes);

void write_cache(const FeatureCache& cache, const std::filesystem::path& path);
FeatureCache read_cache(const std::filesystem::path& path);

// --- ingestion (cache -> domain objects) -------------------------------------
//
// Payloads are unit-normalized here; a (near-)zero row raises
// DegenerateVectorError. External producers do not need to normalize.

struct ImageSet {
    std::vector<std::string> names;
    std::vector<FeatureVector> features;
    std::vector<std::uint32_t> labels;  // kUnlabeled where unknown
    bool fully_labeled() const;
};

ImageSet load_images(const FeatureCache& cache);

struct HandSet {
    std::vector<std::string> class_names;   // ordered by class index
    std::vector<FeatureVector> features;
};

/// Hand cache -> class names and vectors; class indices must cover [0, N)
/// exactly once.
HandSet load_hand(const FeatureCache& cache);

/// Desc cache (record names are the description texts) -> bank. Class count
/// and order come from `class_names`; descriptor rows must be rectangular.
DescriptorBank make_descriptor_bank(const FeatureCache& cache,
                                    std::vector<std::string> class_names, Temperature tau);

// --- description manifest (JSON: class name -> [M strings]) -----------------

struct DescriptionManifest {
    std::vector<std::string> class_names;  // lexicographic
    std::vector<std::vector<std::string>> descriptions;

    std::size_t descriptors_per_class() const {
        return descriptions.empty() ? 0 : descriptions.front().size();
    }
};

DescriptionManifest parse_descriptions(const std::string& json_text);
DescriptionManifest load_descriptions(const std::filesystem::path& path);
std::string canonical_descriptions_json(const DescriptionManifest& manifest);

// --- knowledge bank file (JSON, schema "adk-kb" v1) --------------------------

void save_knowledge_bank(const KnowledgeBank& kb, const std::filesystem::path& path);
KnowledgeBank load_knowledge_bank(const std::filesystem::path& path);

// --- synthetic fixtures -------------------------------------------------------

struct SynthesisParams {
    std::size_t num_classes = 0;
    std::size_t descriptors_per_class = 0;
    std::size_t dim = 0;
    std::size_t images_per_class = 0;
    double separation = 1.0;  // pairwise prototype cosine stays <= 1 - separation
    double noise = 0.0;       // scale of the per-coordinate gaussian perturbation
    std::uint64_t seed = 0;
    double tau = 0.01;
};

struct SyntheticDataset {
    DescriptorBank bank;
    std::vector<FeatureVector> hand;
    ImageSet images;
};

/// Deterministic desk-scale dataset: unit class prototypes with bounded
/// pairwise cosine, descriptors/hand vectors/images drawn as renormalized
/// noisy copies of their prototype. Same seed, same bytes.
SyntheticDataset synthesize_dataset(const SynthesisParams& params);

FeatureCache images_to_cache(const ImageSet& images);
FeatureCache hand_to_cache(const std::vector<std::string>& class_names,
                           const std::vector<FeatureVector>& hand);
FeatureCache bank_to_desc_cache(const DescriptorBank& bank);

}  // namespace adk
