#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adk/classifier.hpp"

namespace adk {

enum class Scenario { AllToAll, BaseToNovel, CrossDomain };

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

/// Evaluation split: named class partitions, shots per class and the sampler
/// seed. novel_classes is empty unless the scenario is BaseToNovel; the two
/// partitions must be disjoint.
struct SplitManifest {
    Scenario scenario = Scenario::AllToAll;
    std::vector<std::string> base_classes;
    std::vector<std::string> novel_classes;
    std::size_t shots_per_class = 1;
    std::uint64_t seed = 0;
};

SplitManifest parse_split_manifest(const std::string& json_text);
SplitManifest load_split_manifest(const std::filesystem::path& path);
std::string split_manifest_json(const SplitManifest& manifest);

/// Scenario results. Accuracies live in [0, 1]; the CLI formats percentages.
/// harmonic_mean is present exactly when novel_acc is; per_head_acc holds the
/// ablation view (keys hand/comp/inst/desc/fused) over all evaluated images.
struct EvalReport {
    std::string scenario;
    double base_acc = 0.0;
    std::optional<double> novel_acc;
    std::optional<double> harmonic_mean;
    std::map<std::string, double> per_class_acc;
    std::map<std::string, double> per_head_acc;
    std::size_t n_images = 0;

    std::string to_json() const;
    static EvalReport from_json(const std::string& json_text);
};

/// Fraction of exact matches.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

/// 2ab/(a+b). Inputs must be positive (and on a consistent scale).
double harmonic_mean(double base, double novel);

/// Stratified K-shot subsample: exactly K indices per class, seeded and
/// deterministic, returned in ascending order. MissingClassError when a class
/// has fewer than K samples.
std::vector<std::size_t> kshot_subsample(const std::vector<std::size_t>& labels, std::size_t k,
                                         std::uint64_t seed);

/// Classify every image of each partition against that partition's own
/// candidate classes and aggregate accuracies. `threads` > 1 parallelizes
/// across images; results are assembled in input order so the report is
/// schedule-independent.
EvalReport run_scenario(const SplitManifest& manifest, const std::vector<FeatureVector>& images,
                        const std::vector<std::size_t>& labels, const KnowledgeBank& kb,
                        const DescriptorBank& bank, std::size_t threads = 1);

}  // namespace adk
