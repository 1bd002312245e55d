// adk — descriptor-knowledge classification pipeline over precomputed
// embedding caches. Subcommands cover fixture synthesis, knowledge-bank
// construction, per-image classification, scenario evaluation, similarity
// diagnostics and the inference cost model.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "adk/classifier.hpp"
#include "adk/diagnostics.hpp"
#include "adk/eval.hpp"
#include "adk/io.hpp"

namespace {

using nlohmann::json;

std::size_t worker_threads() {
    if (const char* env = std::getenv("ADK_THREADS")) {
        const long parsed = std::strtol(env, nullptr, 10);
        if (parsed >= 1) {
            return static_cast<std::size_t>(parsed);
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw adk::IoError("cannot open for writing: " + path.string());
    }
    out << text;
    if (!out) {
        throw adk::IoError("write failed: " + path.string());
    }
}

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * fraction);
    return buf;
}

struct PipelineInputs {
    adk::ImageSet images;
    adk::KnowledgeBank kb;
    adk::DescriptorBank bank;
};

// Shared loading logic for classify/eval: read caches, assemble the bank from
// the knowledge bank's class order, and apply --m-keep (which also rebuilds
// the compositional vectors so both description heads see the same m).
PipelineInputs load_pipeline(const std::string& images_path, const std::string& kb_path,
                             const std::string& desc_path, double tau,
                             std::optional<std::size_t> m_keep) {
    adk::ImageSet images = adk::load_images(adk::read_cache(images_path));
    adk::KnowledgeBank kb = adk::load_knowledge_bank(kb_path);
    adk::DescriptorBank bank = adk::make_descriptor_bank(
        adk::read_cache(desc_path), kb.class_names(), adk::Temperature(tau));
    if (m_keep) {
        bank = adk::subset_descriptions(bank, *m_keep);
        kb = adk::KnowledgeBank(kb.class_names(), kb.hand(), adk::build_compositional(bank),
                                bank.checksum());
    }
    return PipelineInputs{std::move(images), std::move(kb), std::move(bank)};
}

int cmd_synth(const adk::SynthesisParams& params, const std::string& out_dir) {
    const adk::SyntheticDataset data = adk::synthesize_dataset(params);
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);

    adk::write_cache(adk::images_to_cache(data.images), dir / "images.adkf");
    adk::write_cache(adk::hand_to_cache(data.bank.class_names(), data.hand), dir / "hand.adkf");
    adk::write_cache(adk::bank_to_desc_cache(data.bank), dir / "desc.adkf");

    adk::DescriptionManifest manifest;
    manifest.class_names = data.bank.class_names();
    for (std::size_t c = 0; c < data.bank.num_classes(); ++c) {
        manifest.descriptions.push_back(data.bank.descriptions(c));
    }
    write_text_file(dir / "descriptions.json", adk::canonical_descriptions_json(manifest));

    adk::SplitManifest split;
    split.scenario = adk::Scenario::AllToAll;
    split.base_classes = data.bank.class_names();
    split.shots_per_class = params.images_per_class;
    split.seed = params.seed;
    write_text_file(dir / "split_all_to_all.json", adk::split_manifest_json(split));

    std::cout << "synthesized N=" << params.num_classes << " M=" << params.descriptors_per_class
              << " D=" << params.dim << " images=" << data.images.features.size() << " into "
              << dir.string() << "\n";
    return 0;
}

int cmd_build_knowledge(const std::string& desc_path, const std::string& hand_path,
                        const std::string& out_path, double tau,
                        std::optional<std::size_t> m_keep) {
    const adk::HandSet hand = adk::load_hand(adk::read_cache(hand_path));
    adk::DescriptorBank bank = adk::make_descriptor_bank(
        adk::read_cache(desc_path), hand.class_names, adk::Temperature(tau));
    if (m_keep) {
        bank = adk::subset_descriptions(bank, *m_keep);
    }
    const adk::KnowledgeBank kb = adk::build_knowledge(bank, hand.features);
    adk::save_knowledge_bank(kb, out_path);
    std::cout << "knowledge bank: N=" << kb.num_classes() << " M="
              << bank.descriptors_per_class() << " D=" << kb.dim() << " -> " << out_path << "\n";
    return 0;
}

int cmd_classify(const std::string& images_path, const std::string& kb_path,
                 const std::string& desc_path, const std::string& out_path, double tau,
                 std::optional<std::size_t> m_keep, std::size_t top_k) {
    const PipelineInputs in = load_pipeline(images_path, kb_path, desc_path, tau, m_keep);
    const std::size_t k = std::min<std::size_t>(top_k, in.bank.descriptors_per_class());

    std::vector<std::string> lines(in.images.features.size());
    const std::size_t threads =
        std::max<std::size_t>(1, std::min(worker_threads(), lines.size()));
    auto work = [&](std::size_t begin, std::size_t step) {
        for (std::size_t i = begin; i < lines.size(); i += step) {
            const adk::PredictionRecord rec =
                adk::classify(in.images.features[i], in.kb, in.bank);
            const adk::TopDescriptions top =
                adk::top_descriptions(in.images.features[i], in.bank, rec.predicted, k);
            json line;
            line["name"] = in.images.names[i];
            if (in.images.labels[i] == adk::kUnlabeled) {
                line["label"] = nullptr;
            } else {
                line["label"] = in.images.labels[i];
            }
            line["predicted"] = rec.predicted;
            line["predicted_class"] = in.kb.class_names()[rec.predicted];
            line["p_hand"] = rec.p_hand.probs();
            line["p_comp"] = rec.p_comp.probs();
            line["p_inst"] = rec.p_inst.probs();
            line["p_desc"] = rec.p_desc.probs();
            line["fused_score"] = rec.fused_score;
            json top_json = json::array();
            for (const auto& item : top.top) {
                top_json.push_back(
                    {{"text", item.text}, {"index", item.index}, {"weight", item.weight}});
            }
            line["top_descriptions"] = top_json;
            line["other_weight"] = top.other_weight;
            lines[i] = line.dump();
        }
    };
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(work, t, threads);
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    std::string body;
    for (const auto& line : lines) {
        body += line;
        body += '\n';
    }
    write_text_file(out_path, body);
    std::cout << "classified " << lines.size() << " images -> " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& images_path,
             const std::string& kb_path, const std::string& desc_path,
             const std::string& out_path, double tau, std::optional<std::size_t> m_keep) {
    const adk::SplitManifest manifest = adk::load_split_manifest(manifest_path);
    const PipelineInputs in = load_pipeline(images_path, kb_path, desc_path, tau, m_keep);
    if (!in.images.fully_labeled()) {
        throw adk::SchemaError("eval requires labeled images");
    }
    std::vector<std::size_t> labels(in.images.labels.begin(), in.images.labels.end());
    const adk::EvalReport report = adk::run_scenario(manifest, in.images.features, labels, in.kb,
                                                     in.bank, worker_threads());
    write_text_file(out_path, report.to_json());

    std::cout << "scenario " << report.scenario << ": base " << percent(report.base_acc);
    if (report.novel_acc) {
        std::cout << ", novel " << percent(*report.novel_acc) << ", harmonic mean "
                  << percent(*report.harmonic_mean);
    }
    std::cout << " (" << report.n_images << " images)\n";
    for (const auto& [head, acc] : report.per_head_acc) {
        std::cout << "  head " << head << ": " << percent(acc) << "\n";
    }
    return 0;
}

int cmd_diagnose(const std::string& images_path, const std::string& kb_path,
                 const std::string& out_path) {
    const adk::ImageSet images = adk::load_images(adk::read_cache(images_path));
    const adk::KnowledgeBank kb = adk::load_knowledge_bank(kb_path);
    if (!images.fully_labeled()) {
        throw adk::SchemaError("diagnose requires labeled images");
    }
    for (std::uint32_t label : images.labels) {
        if (label >= kb.num_classes()) {
            throw adk::SchemaError("image label " + std::to_string(label) +
                                   " outside the knowledge bank's " +
                                   std::to_string(kb.num_classes()) + " classes");
        }
    }
    std::vector<std::size_t> labels(images.labels.begin(), images.labels.end());
    const std::vector<adk::FeatureVector> prototypes =
        adk::class_prototypes(images.features, labels);
    if (prototypes.size() != kb.num_classes()) {
        throw adk::MissingClassError("images cover " + std::to_string(prototypes.size()) +
                                     " classes, knowledge bank has " +
                                     std::to_string(kb.num_classes()));
    }

    const adk::SimilarityMap map_img = adk::similarity_map(prototypes);
    const adk::SimilarityMap map_hand = adk::similarity_map(kb.hand());
    const adk::SimilarityMap map_comp = adk::similarity_map(kb.comp());
    const double kld_hand = adk::map_kld(map_hand, map_img);
    const double kld_comp = adk::map_kld(map_comp, map_img);

    json doc;
    doc["schema"] = "adk-kld-report";
    doc["version"] = 1;
    doc["n_classes"] = kb.num_classes();
    doc["kld"] = {{"hand_vs_image", kld_hand}, {"comp_vs_image", kld_comp}};
    write_text_file(out_path, doc.dump(2) + "\n");

    std::cout << "kld hand||image = " << kld_hand << "\n";
    std::cout << "kld comp||image = " << kld_comp << "\n";
    return 0;
}

int cmd_cost(std::size_t n, std::size_t m, std::size_t d, const std::string& convention,
             double image_gflops, double text_gflops, bool include_prompt_encoding,
             const std::string& out_path) {
    adk::CostModelParams params;
    params.num_classes = n;
    params.descriptors_per_class = m;
    params.dim = d;
    params.image_encoder_gflops = image_gflops;
    params.text_encoder_gflops_per_prompt = text_gflops;
    params.include_prompt_encoding = include_prompt_encoding;
    if (convention == "MAC") {
        params.convention = adk::CountConvention::Mac;
    } else if (convention == "FLOP2") {
        params.convention = adk::CountConvention::Flop2;
    } else {
        throw adk::DomainError("convention must be MAC or FLOP2, got '" + convention + "'");
    }

    const adk::CostBreakdown clip = adk::inference_cost(params, adk::CostMethod::Clip);
    const adk::CostBreakdown cocoop = adk::inference_cost(params, adk::CostMethod::CoCoOp);
    const adk::CostBreakdown ours = adk::inference_cost(params, adk::CostMethod::Adk);
    const double delta = ours.total - clip.total;

    auto method_json = [](const adk::CostBreakdown& b) {
        return json{{"encode", b.encode},   {"text", b.text},
                    {"knowledge", b.knowledge}, {"logits", b.logits},
                    {"lower_order", b.lower_order}, {"total", b.total}};
    };
    json doc;
    doc["schema"] = "adk-cost-report";
    doc["version"] = 1;
    doc["convention"] = convention;
    doc["params"] = {{"n", n},
                     {"m", m},
                     {"d", d},
                     {"image_encoder_gflops", image_gflops},
                     {"text_encoder_gflops_per_prompt", text_gflops},
                     {"include_prompt_encoding", include_prompt_encoding}};
    doc["methods"] = {
        {"clip", method_json(clip)}, {"cocoop", method_json(cocoop)}, {"adk", method_json(ours)}};
    doc["adk_minus_clip_gflops"] = delta;
    if (!out_path.empty()) {
        write_text_file(out_path, doc.dump(2) + "\n");
    }

    char line[160];
    std::printf("%-8s %14s %14s %14s %14s\n", "method", "encode", "text", "knowledge+logits",
                "total");
    std::snprintf(line, sizeof(line), "%-8s %14.6f %14.6f %14.6f %14.6f", "clip", clip.encode,
                  clip.text, clip.knowledge + clip.logits, clip.total);
    std::cout << line << "\n";
    std::snprintf(line, sizeof(line), "%-8s %14.6f %14.6f %14.6f %14.6f", "cocoop", cocoop.encode,
                  cocoop.text, cocoop.knowledge + cocoop.logits, cocoop.total);
    std::cout << line << "\n";
    std::snprintf(line, sizeof(line), "%-8s %14.6f %14.6f %14.6f %14.6f", "adk", ours.encode,
                  ours.text, ours.knowledge + ours.logits, ours.total);
    std::cout << line << "\n";
    std::printf("adk - clip delta: %.6f GFLOPs\n", delta);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"descriptor-knowledge classification pipeline over embedding caches"};
    app.require_subcommand(1);

    double tau = 0.01;
    std::optional<std::size_t> m_keep;
    std::uint64_t seed = 0;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled fixture");
    adk::SynthesisParams synth_params;
    std::string synth_out;
    synth->add_option("--n", synth_params.num_classes, "number of classes")->required();
    synth->add_option("--m", synth_params.descriptors_per_class, "descriptors per class")
        ->default_val(20);
    synth->add_option("--d", synth_params.dim, "embedding dimension")->required();
    synth->add_option("--images-per-class", synth_params.images_per_class, "images per class")
        ->required();
    synth->add_option("--separation", synth_params.separation,
                      "prototype separation in [0,1]; pairwise cosine stays <= 1-separation");
    synth->add_option("--noise", synth_params.noise, "gaussian perturbation scale");
    synth->add_option("--seed", seed, "random seed");
    synth->add_option("--tau", tau, "softmax temperature recorded in the bank");
    synth->add_option("--out", synth_out, "output directory")->required();

    // build-knowledge
    auto* build = app.add_subcommand("build-knowledge",
                                     "average descriptor features into a knowledge bank");
    std::string desc_path, hand_path, out_path;
    build->add_option("--desc", desc_path, "descriptor cache (.adkf)")->required();
    build->add_option("--hand", hand_path, "handcrafted prompt cache (.adkf)")->required();
    build->add_option("--out", out_path, "knowledge bank output (.json)")->required();
    build->add_option("--tau", tau, "softmax temperature");
    build->add_option("--m-keep", m_keep, "average only the first m descriptors per class");
    build->add_option("--seed", seed, "accepted for interface uniformity");

    // classify
    auto* classify = app.add_subcommand("classify", "per-image predictions as JSON lines");
    std::string images_path, kb_path;
    std::size_t top_k = 4;
    classify->add_option("--images", images_path, "image cache (.adkf)")->required();
    classify->add_option("--kb", kb_path, "knowledge bank (.json)")->required();
    classify->add_option("--desc", desc_path, "descriptor cache (.adkf)")->required();
    classify->add_option("--out", out_path, "output JSONL path")->required();
    classify->add_option("--tau", tau, "softmax temperature");
    classify->add_option("--m-keep", m_keep, "keep only the first m descriptors per class");
    classify->add_option("--top-k", top_k, "listed description count per record");
    classify->add_option("--seed", seed, "accepted for interface uniformity");

    // eval
    auto* eval = app.add_subcommand("eval", "scenario evaluation from a split manifest");
    std::string manifest_path;
    eval->add_option("--manifest", manifest_path, "split manifest (.json)")->required();
    eval->add_option("--images", images_path, "image cache (.adkf)")->required();
    eval->add_option("--kb", kb_path, "knowledge bank (.json)")->required();
    eval->add_option("--desc", desc_path, "descriptor cache (.adkf)")->required();
    eval->add_option("--out", out_path, "eval report output (.json)")->required();
    eval->add_option("--tau", tau, "softmax temperature");
    eval->add_option("--m-keep", m_keep, "keep only the first m descriptors per class");
    eval->add_option("--seed", seed, "accepted for interface uniformity");

    // diagnose
    auto* diagnose =
        app.add_subcommand("diagnose", "text/visual similarity-map divergence report");
    diagnose->add_option("--images", images_path, "labeled image cache (.adkf)")->required();
    diagnose->add_option("--kb", kb_path, "knowledge bank (.json)")->required();
    diagnose->add_option("--out", out_path, "KLD report output (.json)")->required();
    diagnose->add_option("--tau", tau, "accepted for interface uniformity");
    diagnose->add_option("--m-keep", m_keep, "accepted for interface uniformity");
    diagnose->add_option("--seed", seed, "accepted for interface uniformity");

    // cost
    auto* cost = app.add_subcommand("cost", "inference cost model (GFLOPs)");
    std::size_t cost_n = 0, cost_m = 0, cost_d = 0;
    std::string convention = "MAC";
    double image_gflops = 0.0, text_gflops = 0.0;
    bool include_prompt_encoding = false;
    cost->add_option("--n", cost_n, "number of classes")->required();
    cost->add_option("--m", cost_m, "descriptors per class")->required();
    cost->add_option("--d", cost_d, "embedding dimension")->required();
    cost->add_option("--convention", convention, "MAC or FLOP2");
    cost->add_option("--image-gflops", image_gflops, "image encoder cost per image");
    cost->add_option("--text-gflops", text_gflops, "text encoder cost per prompt");
    cost->add_flag("--include-prompt-encoding", include_prompt_encoding,
                   "charge offline prompt encoding to the baseline");
    cost->add_option("--out", out_path, "optional JSON report path");
    cost->add_option("--tau", tau, "accepted for interface uniformity");
    cost->add_option("--m-keep", m_keep, "accepted for interface uniformity");
    cost->add_option("--seed", seed, "accepted for interface uniformity");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            synth_params.seed = seed;
            synth_params.tau = tau;
            return cmd_synth(synth_params, synth_out);
        }
        if (build->parsed()) {
            return cmd_build_knowledge(desc_path, hand_path, out_path, tau, m_keep);
        }
        if (classify->parsed()) {
            return cmd_classify(images_path, kb_path, desc_path, out_path, tau, m_keep, top_k);
        }
        if (eval->parsed()) {
            return cmd_eval(manifest_path, images_path, kb_path, desc_path, out_path, tau,
                            m_keep);
        }
        if (diagnose->parsed()) {
            return cmd_diagnose(images_path, kb_path, out_path);
        }
        if (cost->parsed()) {
            return cmd_cost(cost_n, cost_m, cost_d, convention, image_gflops, text_gflops,
                            include_prompt_encoding, out_path);
        }
        std::cerr << app.help();
        return 2;
    } catch (const adk::InvariantError& e) {
        nlohmann::json err{{"error", e.code()}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 3;
    } catch (const adk::Error& e) {
        nlohmann::json err{{"error", e.code()}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", "internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 3;
    }
}
