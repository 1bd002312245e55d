#include "adk/eval.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "adk/rng.hpp"

namespace adk {

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::AllToAll:
            return "all_to_all";
        case Scenario::BaseToNovel:
            return "base_to_novel";
        case Scenario::CrossDomain:
            return "cross_domain";
    }
    throw InvariantError("unknown scenario enum value");
}

Scenario scenario_from_name(const std::string& name) {
    if (name == "all_to_all") {
        return Scenario::AllToAll;
    }
    if (name == "base_to_novel") {
        return Scenario::BaseToNovel;
    }
    if (name == "cross_domain") {
        return Scenario::CrossDomain;
    }
    throw SchemaError("unknown scenario '" + name + "'");
}

namespace {

void validate_manifest(const SplitManifest& m) {
    if (m.base_classes.empty()) {
        throw SchemaError("split manifest has no base classes");
    }
    if (m.shots_per_class < 1) {
        throw SchemaError("shots_per_class must be >= 1");
    }
    if (m.scenario != Scenario::BaseToNovel && !m.novel_classes.empty()) {
        throw SchemaError("novel_classes only apply to the base_to_novel scenario");
    }
    if (m.scenario == Scenario::BaseToNovel && m.novel_classes.empty()) {
        throw SchemaError("base_to_novel manifest needs novel classes");
    }
    std::set<std::string> base(m.base_classes.begin(), m.base_classes.end());
    if (base.size() != m.base_classes.size()) {
        throw SchemaError("duplicate class in base_classes");
    }
    std::set<std::string> novel(m.novel_classes.begin(), m.novel_classes.end());
    if (novel.size() != m.novel_classes.size()) {
        throw SchemaError("duplicate class in novel_classes");
    }
    for (const auto& name : m.novel_classes) {
        if (base.count(name) != 0) {
            throw SchemaError("class '" + name + "' appears in both base and novel sets");
        }
    }
}

}  // namespace

SplitManifest parse_split_manifest(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("split manifest is not valid JSON: ") + e.what());
    }
    SplitManifest m;
    try {
        if (doc.at("schema") != "adk-split" || doc.at("version") != 1) {
            throw SchemaError("unsupported split manifest schema/version");
        }
        m.scenario = scenario_from_name(doc.at("scenario").get<std::string>());
        m.base_classes = doc.at("base_classes").get<std::vector<std::string>>();
        if (doc.contains("novel_classes")) {
            m.novel_classes = doc.at("novel_classes").get<std::vector<std::string>>();
        }
        m.shots_per_class = doc.at("shots_per_class").get<std::size_t>();
        m.seed = doc.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed split manifest: ") + e.what());
    }
    validate_manifest(m);
    return m;
}

SplitManifest load_split_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_split_manifest(text);
}

std::string split_manifest_json(const SplitManifest& manifest) {
    validate_manifest(manifest);
    nlohmann::json doc;
    doc["schema"] = "adk-split";
    doc["version"] = 1;
    doc["scenario"] = scenario_name(manifest.scenario);
    doc["base_classes"] = manifest.base_classes;
    if (!manifest.novel_classes.empty()) {
        doc["novel_classes"] = manifest.novel_classes;
    }
    doc["shots_per_class"] = manifest.shots_per_class;
    doc["seed"] = manifest.seed;
    return doc.dump(2) + "\n";
}

std::string EvalReport::to_json() const {
    nlohmann::json doc;
    doc["schema"] = "adk-eval-report";
    doc["version"] = 1;
    doc["scenario"] = scenario;
    doc["n_images"] = n_images;
    doc["base_acc"] = base_acc;
    if (novel_acc) {
        doc["novel_acc"] = *novel_acc;
        doc["harmonic_mean"] = *harmonic_mean;
    }
    doc["per_class_acc"] = per_class_acc;
    doc["per_head_acc"] = per_head_acc;
    return doc.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("eval report is not valid JSON: ") + e.what());
    }
    EvalReport r;
    try {
        if (doc.at("schema") != "adk-eval-report" || doc.at("version") != 1) {
            throw SchemaError("unsupported eval report schema/version");
        }
        r.scenario = doc.at("scenario").get<std::string>();
        r.n_images = doc.at("n_images").get<std::size_t>();
        r.base_acc = doc.at("base_acc").get<double>();
        if (doc.contains("novel_acc")) {
            r.novel_acc = doc.at("novel_acc").get<double>();
            r.harmonic_mean = doc.at("harmonic_mean").get<double>();
        }
        r.per_class_acc = doc.at("per_class_acc").get<std::map<std::string, double>>();
        r.per_head_acc = doc.at("per_head_acc").get<std::map<std::string, double>>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed eval report: ") + e.what());
    }
    return r;
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.size() != labels.size()) {
        throw SchemaError("accuracy: " + std::to_string(predictions.size()) +
                          " predictions vs " + std::to_string(labels.size()) + " labels");
    }
    if (predictions.empty()) {
        throw EmptyInputError("accuracy: empty input");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        hits += predictions[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double harmonic_mean(double base, double novel) {
    if (!(base > 0.0) || !(novel > 0.0)) {
        throw DomainError("harmonic_mean requires positive inputs");
    }
    return 2.0 * base * novel / (base + novel);
}

std::vector<std::size_t> kshot_subsample(const std::vector<std::size_t>& labels, std::size_t k,
                                         std::uint64_t seed) {
    if (labels.empty()) {
        throw EmptyInputError("kshot_subsample: no labels");
    }
    if (k < 1) {
        throw DomainError("kshot_subsample: k must be >= 1");
    }
    std::size_t num_classes = 0;
    for (std::size_t l : labels) {
        num_classes = std::max(num_classes, l + 1);
    }
    std::vector<std::vector<std::size_t>> per_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        per_class[labels[i]].push_back(i);
    }
    Rng rng(seed);
    std::vector<std::size_t> out;
    out.reserve(num_classes * k);
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (per_class[c].size() < k) {
            throw MissingClassError("class " + std::to_string(c) + " has " +
                                    std::to_string(per_class[c].size()) + " samples, need " +
                                    std::to_string(k));
        }
        for (std::size_t pos : rng.sample_without_replacement(per_class[c].size(), k)) {
            out.push_back(per_class[c][pos]);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

struct ImageOutcome {
    std::size_t fused = 0;  // global class indices
    std::size_t hand = 0;
    std::size_t comp = 0;
    std::size_t inst = 0;
    std::size_t desc = 0;
};

std::size_t argmax_prob(const ProbabilityVector& p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[best]) {
            best = i;
        }
    }
    return best;
}

// Deterministic ordered parallel map: results land at their input index
// regardless of scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (std::size_t i = t; i < n; i += threads) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

// Classify the given images against one candidate partition.
void evaluate_partition(const std::vector<FeatureVector>& images,
                        const std::vector<std::size_t>& image_indices,
                        const std::vector<std::size_t>& candidate_classes,
                        const KnowledgeBank& kb, const DescriptorBank& bank, std::size_t threads,
                        std::vector<ImageOutcome>& outcomes) {
    auto [sub_kb, sub_bank] = restrict_classes(kb, bank, candidate_classes);
    outcomes.assign(image_indices.size(), ImageOutcome{});
    parallel_for(image_indices.size(), threads, [&](std::size_t i) {
        const PredictionRecord rec = classify(images[image_indices[i]], sub_kb, sub_bank);
        outcomes[i] = ImageOutcome{candidate_classes[rec.predicted],
                                   candidate_classes[argmax_prob(rec.p_hand)],
                                   candidate_classes[argmax_prob(rec.p_comp)],
                                   candidate_classes[argmax_prob(rec.p_inst)],
                                   candidate_classes[argmax_prob(rec.p_desc)]};
    });
}

}  // namespace

EvalReport run_scenario(const SplitManifest& manifest, const std::vector<FeatureVector>& images,
                        const std::vector<std::size_t>& labels, const KnowledgeBank& kb,
                        const DescriptorBank& bank, std::size_t threads) {
    validate_manifest(manifest);
    if (images.size() != labels.size()) {
        throw SchemaError("run_scenario: image/label count mismatch");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= kb.num_classes()) {
            throw SchemaError("image " + std::to_string(i) + " has label " +
                              std::to_string(labels[i]) + " outside the knowledge bank's " +
                              std::to_string(kb.num_classes()) + " classes");
        }
    }

    // map manifest class names to global indices
    std::map<std::string, std::size_t> name_to_index;
    for (std::size_t c = 0; c < kb.num_classes(); ++c) {
        name_to_index[kb.class_names()[c]] = c;
    }
    auto resolve = [&](const std::vector<std::string>& names) {
        std::vector<std::size_t> out;
        out.reserve(names.size());
        for (const auto& name : names) {
            auto it = name_to_index.find(name);
            if (it == name_to_index.end()) {
                throw SchemaError("manifest class '" + name + "' not present in knowledge bank");
            }
            out.push_back(it->second);
        }
        return out;
    };
    const std::vector<std::size_t> base_idx = resolve(manifest.base_classes);
    const std::vector<std::size_t> novel_idx = resolve(manifest.novel_classes);

    auto members_of = [&](const std::vector<std::size_t>& classes) {
        const std::set<std::size_t> cls(classes.begin(), classes.end());
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < images.size(); ++i) {
            if (cls.count(labels[i]) != 0) {
                out.push_back(i);
            }
        }
        return out;
    };

    struct PartitionResult {
        std::vector<std::size_t> image_indices;
        std::vector<ImageOutcome> outcomes;
    };
    std::vector<PartitionResult> parts;

    PartitionResult base_part;
    base_part.image_indices = members_of(base_idx);
    if (base_part.image_indices.empty()) {
        throw SchemaError("no images belong to the base partition");
    }
    evaluate_partition(images, base_part.image_indices, base_idx, kb, bank, threads,
                       base_part.outcomes);

    EvalReport report;
    report.scenario = scenario_name(manifest.scenario);

    auto fused_accuracy = [&](const PartitionResult& part) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < part.image_indices.size(); ++i) {
            hits += part.outcomes[i].fused == labels[part.image_indices[i]] ? 1 : 0;
        }
        return static_cast<double>(hits) / static_cast<double>(part.image_indices.size());
    };

    report.base_acc = fused_accuracy(base_part);
    parts.push_back(std::move(base_part));

    if (manifest.scenario == Scenario::BaseToNovel) {
        PartitionResult novel_part;
        novel_part.image_indices = members_of(novel_idx);
        if (novel_part.image_indices.empty()) {
            throw SchemaError("no images belong to the novel partition");
        }
        evaluate_partition(images, novel_part.image_indices, novel_idx, kb, bank, threads,
                           novel_part.outcomes);
        const double novel = fused_accuracy(novel_part);
        report.novel_acc = novel;
        // continuity extension of 2ab/(a+b) at zero
        const double a = report.base_acc;
        report.harmonic_mean = (a + novel) > 0.0 ? 2.0 * a * novel / (a + novel) : 0.0;
        parts.push_back(std::move(novel_part));
    }

    // per-class and per-head accuracies over everything evaluated
    std::map<std::string, std::pair<std::size_t, std::size_t>> class_counts;  // hits, total
    std::size_t total = 0;
    std::size_t hits_fused = 0, hits_hand = 0, hits_comp = 0, hits_inst = 0, hits_desc = 0;
    for (const auto& part : parts) {
        for (std::size_t i = 0; i < part.image_indices.size(); ++i) {
            const std::size_t label = labels[part.image_indices[i]];
            const ImageOutcome& o = part.outcomes[i];
            auto& cc = class_counts[kb.class_names()[label]];
            cc.second += 1;
            cc.first += o.fused == label ? 1 : 0;
            hits_fused += o.fused == label ? 1 : 0;
            hits_hand += o.hand == label ? 1 : 0;
            hits_comp += o.comp == label ? 1 : 0;
            hits_inst += o.inst == label ? 1 : 0;
            hits_desc += o.desc == label ? 1 : 0;
            ++total;
        }
    }
    report.n_images = total;
    for (const auto& [name, counts] : class_counts) {
        report.per_class_acc[name] =
            static_cast<double>(counts.first) / static_cast<double>(counts.second);
    }
    const double denom = static_cast<double>(total);
    report.per_head_acc["fused"] = static_cast<double>(hits_fused) / denom;
    report.per_head_acc["hand"] = static_cast<double>(hits_hand) / denom;
    report.per_head_acc["comp"] = static_cast<double>(hits_comp) / denom;
    report.per_head_acc["inst"] = static_cast<double>(hits_inst) / denom;
    report.per_head_acc["desc"] = static_cast<double>(hits_desc) / denom;
    return report;
}

}  // namespace adk
