// Acceptance suite. Each criterion prints exactly one [PASS]/[FAIL] line;
// the exit code is the number of failed criteria. The CLI binary under test
// is passed with --cli (required by the end-to-end and determinism criteria).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adk/classifier.hpp"
#include "adk/diagnostics.hpp"
#include "adk/eval.hpp"
#include "adk/io.hpp"
#include "adk/rng.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using nlohmann::json;

std::string g_cli;
fs::path g_workdir;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Criterion {
    bool passed = false;
    std::string detail;
};

int run_cli(const std::string& args, const std::string& env_prefix = "") {
    const std::string cmd = env_prefix + g_cli + " " + args + " > " +
                            (g_workdir / "cli_stdout.txt").string() + " 2> " +
                            (g_workdir / "cli_stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_seconds(double s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f s", s);
    return buf;
}

// ---- criterion 1: fusion fidelity against the straight-line oracle ---------

Criterion fusion_fidelity() {
    const auto start = Clock::now();
    std::mt19937_64 meta(101);
    double max_prob_diff = 0.0;
    const std::size_t instances = 1000;
    const double taus[] = {0.01, 0.05, 0.2, 1.0};
    for (std::size_t it = 0; it < instances; ++it) {
        const std::size_t n = 1 + meta() % 10;
        const std::size_t m = 1 + meta() % 20;
        const std::size_t d = 2 + meta() % 31;  // <= 32
        const double tau = taus[meta() % 4];
        const oracle::Problem p = oracle::random_problem(meta(), n, m, d, tau);
        const oracle::Prediction expected = oracle::classify(p);
        const adk::PredictionRecord got =
            adk::classify(testsupport::image_of(p), testsupport::to_kb(p), testsupport::to_bank(p));
        if (got.predicted != expected.predicted) {
            return {false, "predicted mismatch at instance " + std::to_string(it)};
        }
        for (std::size_t c = 0; c < n; ++c) {
            max_prob_diff = std::max({max_prob_diff,
                                      std::abs(got.p_hand[c] - expected.p_hand[c]),
                                      std::abs(got.p_comp[c] - expected.p_comp[c]),
                                      std::abs(got.p_inst[c] - expected.p_inst[c]),
                                      std::abs(got.p_desc[c] - expected.p_desc[c]),
                                      std::abs(got.fused_score[c] - expected.fused[c])});
        }
        if (max_prob_diff > 1e-10) {
            return {false, "probability diff " + std::to_string(max_prob_diff) + " at instance " +
                               std::to_string(it)};
        }
    }
    const double elapsed = seconds_since(start);
    if (elapsed >= 5.0) {
        return {false, "took " + format_seconds(elapsed) + ", budget 5 s"};
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "1000 instances, max probability diff %.2e, predicted exact (%s)",
                  max_prob_diff, format_seconds(elapsed).c_str());
    return {true, detail};
}

// ---- criterion 2: analytic gradient vs central finite differences ----------

Criterion gradient_correctness() {
    const auto start = Clock::now();
    const double step = 1e-5;
    std::mt19937_64 meta(202);
    double worst = 0.0;
    for (std::size_t it = 0; it < 100; ++it) {
        const std::size_t n = 2 + meta() % 4;   // <= 5
        const std::size_t m = 1 + meta() % 8;   // <= 8
        const std::size_t d = 4 + meta() % 13;  // <= 16
        const double tau = 0.05 + 0.001 * static_cast<double>(meta() % 950);
        const oracle::Problem p = oracle::random_problem(meta(), n, m, d, tau);
        const adk::DescriptorBank bank = testsupport::to_bank(p);
        const adk::KnowledgeBank kb = testsupport::to_kb(p);
        const std::size_t label = meta() % n;
        const adk::FeatureVector grad =
            adk::grad_image(testsupport::image_of(p), kb, bank, label);
        for (std::size_t i = 0; i < d; ++i) {
            std::vector<double> plus(p.image), minus(p.image);
            plus[i] += step;
            minus[i] -= step;
            const double lp =
                adk::loss(adk::classify(adk::FeatureVector(plus), kb, bank), label).total;
            const double lm =
                adk::loss(adk::classify(adk::FeatureVector(minus), kb, bank), label).total;
            const double fd = (lp - lm) / (2.0 * step);
            const double denom = std::max({std::abs(grad[i]), std::abs(fd), 1e-4});
            const double rel = std::abs(grad[i] - fd) / denom;
            worst = std::max(worst, rel);
            if (rel >= 1e-4) {
                char msg[200];
                std::snprintf(msg, sizeof(msg),
                              "instance %zu coord %zu: analytic %.9g vs fd %.9g (rel %.3g)", it,
                              i, grad[i], fd, rel);
                return {false, msg};
            }
        }
    }
    const double elapsed = seconds_since(start);
    if (elapsed >= 10.0) {
        return {false, "took " + format_seconds(elapsed) + ", budget 10 s"};
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "100 instances incl. attention chain, worst rel err %.2e (%s)", worst,
                  format_seconds(elapsed).c_str());
    return {true, detail};
}

// ---- criterion 3: comp/inst coincidence in the M=1 and large-tau limits ----

Criterion limit_coincidences() {
    std::mt19937_64 meta(303);
    double worst_m1 = 0.0;
    for (std::size_t it = 0; it < 50; ++it) {
        const std::size_t n = 2 + meta() % 6;
        const std::size_t d = 4 + meta() % 13;
        const oracle::Problem p = oracle::random_problem(meta(), n, 1, d, 0.01);
        const adk::PredictionRecord rec =
            adk::classify(testsupport::image_of(p), testsupport::to_kb(p), testsupport::to_bank(p));
        for (std::size_t c = 0; c < n; ++c) {
            worst_m1 = std::max(worst_m1, std::abs(rec.p_comp[c] - rec.p_inst[c]));
        }
    }
    if (worst_m1 > 1e-5) {
        return {false, "M=1 comp/inst diff " + std::to_string(worst_m1)};
    }

    double worst_tau = 0.0;
    for (std::size_t it = 0; it < 50; ++it) {
        const std::size_t n = 2 + meta() % 6;
        const std::size_t m = 2 + meta() % 10;
        const std::size_t d = 4 + meta() % 13;
        const oracle::Problem p = oracle::random_problem(meta(), n, m, d, 1e6 * (1 + meta() % 10));
        const adk::DescriptorBank bank = testsupport::to_bank(p);
        const auto comp = adk::build_compositional(bank);
        const auto inst = adk::build_instance_knowledge(testsupport::image_of(p), bank);
        for (std::size_t c = 0; c < n; ++c) {
            for (std::size_t i = 0; i < d; ++i) {
                worst_tau = std::max(worst_tau, std::abs(inst.vectors[c][i] - comp[c][i]));
            }
        }
        const adk::PredictionRecord rec =
            adk::classify(testsupport::image_of(p), testsupport::to_kb(p), bank);
        for (std::size_t c = 0; c < n; ++c) {
            worst_tau = std::max(worst_tau, std::abs(rec.p_comp[c] - rec.p_inst[c]));
        }
    }
    if (worst_tau > 1e-5) {
        return {false, "tau>=1e6 comp/inst diff " + std::to_string(worst_tau)};
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "M=1 max diff %.2e; tau>=1e6 max diff %.2e (probs and vectors)", worst_m1,
                  worst_tau);
    return {true, detail};
}

// ---- criterion 4: cost model against reference overhead numbers -------------

Criterion cost_model_check() {
    adk::CostModelParams params;
    params.image_encoder_gflops = 33.946;
    params.text_encoder_gflops_per_prompt = 5.8186;  // (2943.246 - 33.946) / 500
    params.dim = 512;
    params.descriptors_per_class = 20;
    params.convention = adk::CountConvention::Mac;

    params.num_classes = 500;
    const double clip500 = adk::inference_cost(params, adk::CostMethod::Clip).total;
    const double adk500 = adk::inference_cost(params, adk::CostMethod::Adk).total;
    const double cocoop500 = adk::inference_cost(params, adk::CostMethod::CoCoOp).total;
    const double delta500 = adk500 - clip500;
    if (std::abs(delta500 - 0.011) > 0.2 * 0.011) {
        return {false, "N=500 delta " + std::to_string(delta500) + " not within 20% of 0.011"};
    }

    params.num_classes = 10;
    const double delta10 = adk::inference_cost(params, adk::CostMethod::Adk).total -
                           adk::inference_cost(params, adk::CostMethod::Clip).total;
    if (delta10 >= 0.001) {
        return {false, "N=10 delta " + std::to_string(delta10) + " >= 0.001"};
    }

    params.num_classes = 500;
    if (cocoop500 < 50.0 * adk500) {
        return {false, "CoCoOp/ADK total ratio " + std::to_string(cocoop500 / adk500) + " < 50"};
    }
    // overhead-over-baseline ordering for a range of text-encoder costs
    for (double text_cost : {1.0, 2.0, 5.8186, 20.0}) {
        params.text_encoder_gflops_per_prompt = text_cost;
        const double cocoop_extra = adk::inference_cost(params, adk::CostMethod::CoCoOp).total -
                                    adk::inference_cost(params, adk::CostMethod::Clip).total;
        const double adk_extra = adk::inference_cost(params, adk::CostMethod::Adk).total -
                                 adk::inference_cost(params, adk::CostMethod::Clip).total;
        if (cocoop_extra < 50.0 * adk_extra) {
            return {false, "overhead ratio below 50x at text cost " + std::to_string(text_cost)};
        }
    }
    char detail[200];
    std::snprintf(detail, sizeof(detail),
                  "N=500 delta %.6f (target 0.011±20%%), N=10 delta %.6f, CoCoOp/ADK %.1fx",
                  delta500, delta10, cocoop500 / adk500);
    return {true, detail};
}

// ---- criterion 5: harmonic mean reference values ----------------------------

Criterion harmonic_mean_check() {
    auto round1 = [](double x) { return std::round(x * 10.0) / 10.0; };
    const double with_descriptors = adk::harmonic_mean(85.9, 77.8);
    const double baseline = adk::harmonic_mean(85.5, 75.8);
    if (round1(with_descriptors) != 81.6) {
        return {false, "hm(85.9, 77.8) = " + std::to_string(with_descriptors)};
    }
    if (round1(baseline) != 80.4) {
        return {false, "hm(85.5, 75.8) = " + std::to_string(baseline)};
    }
    char detail[120];
    std::snprintf(detail, sizeof(detail), "hm(85.9,77.8)=%.4f->81.6, hm(85.5,75.8)=%.4f->80.4",
                  with_descriptors, baseline);
    return {true, detail};
}

// ---- criterion 6: KLD diagnostic sanity -------------------------------------

Criterion kld_sanity() {
    std::mt19937_64 rng(606);
    for (int it = 0; it < 10; ++it) {
        std::vector<adk::FeatureVector> vs;
        for (int i = 0; i < 6; ++i) {
            vs.emplace_back(oracle::random_unit(rng, 8));
        }
        const adk::SimilarityMap map = adk::similarity_map(vs);
        const double self = adk::map_kld(map, map);
        if (std::abs(self) > 1e-12) {
            return {false, "map_kld(X, X) = " + std::to_string(self)};
        }
    }

    adk::SimilarityMap image;
    image.matrix = {{1.0, 0.9, 0.1, -0.2},
                    {0.9, 1.0, 0.3, 0.0},
                    {0.1, 0.3, 1.0, 0.6},
                    {-0.2, 0.0, 0.6, 1.0}};
    const adk::SimilarityMap comp = image;  // aligned text map
    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    adk::SimilarityMap hand;
    hand.matrix.assign(4, std::vector<double>(4, 0.0));
    for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t b = 0; b < 4; ++b) {
            hand.matrix[a][b] = image.matrix[perm[a]][perm[b]];
        }
    }
    const double kld_hand = adk::map_kld(hand, image);
    const double kld_comp = adk::map_kld(comp, image);
    if (!(kld_hand > kld_comp)) {
        return {false, "expected kld(hand) > kld(comp), got " + std::to_string(kld_hand) +
                           " vs " + std::to_string(kld_comp)};
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "self-KLD 0 within 1e-12; permuted-map ordering %.4f > %.4f", kld_hand,
                  kld_comp);
    return {true, detail};
}

// ---- criterion 7: synthetic end-to-end through the CLI ----------------------

Criterion synthetic_end_to_end() {
    const auto start = Clock::now();
    const fs::path dir = g_workdir / "e2e";
    fs::remove_all(dir);
    if (run_cli("synth --n 8 --m 20 --d 64 --images-per-class 32 --separation 0.9 "
                "--noise 0.1 --seed 7 --out " +
                dir.string()) != 0) {
        return {false, "synth failed: " + slurp(g_workdir / "cli_stderr.txt")};
    }
    if (run_cli("build-knowledge --desc " + (dir / "desc.adkf").string() + " --hand " +
                (dir / "hand.adkf").string() + " --out " + (dir / "kb.json").string()) != 0) {
        return {false, "build-knowledge failed: " + slurp(g_workdir / "cli_stderr.txt")};
    }
    if (run_cli("eval --manifest " + (dir / "split_all_to_all.json").string() + " --images " +
                (dir / "images.adkf").string() + " --kb " + (dir / "kb.json").string() +
                " --desc " + (dir / "desc.adkf").string() + " --out " +
                (dir / "report.json").string()) != 0) {
        return {false, "eval failed: " + slurp(g_workdir / "cli_stderr.txt")};
    }
    const json report = json::parse(slurp(dir / "report.json"));
    const double fused = report["per_head_acc"]["fused"].get<double>();
    if (!(fused >= 0.99)) {
        return {false, "fused accuracy " + std::to_string(fused) + " < 0.99"};
    }
    for (const char* head : {"hand", "comp", "inst", "desc", "fused"}) {
        if (!report["per_head_acc"].contains(head)) {
            return {false, std::string("per-head accuracy missing '") + head + "'"};
        }
    }
    const double elapsed = seconds_since(start);
    if (elapsed >= 30.0) {
        return {false, "pipeline took " + format_seconds(elapsed) + ", budget 30 s"};
    }
    char detail[200];
    std::snprintf(detail, sizeof(detail),
                  "synth+build+eval fused acc %.4f, all per-head accuracies reported (%s)",
                  fused, format_seconds(elapsed).c_str());
    return {true, detail};
}

// ---- criterion 8: cache format fuzzing --------------------------------------

Criterion format_robustness() {
    std::mt19937_64 rng(808);
    const std::size_t iterations = 10000;
    std::size_t format_errors = 0;
    std::size_t roundtrips = 0;

    auto random_cache = [&rng]() {
        adk::FeatureCache cache;
        cache.kind = static_cast<adk::CacheKind>(rng() % 3);
        cache.dtype = static_cast<adk::CacheDtype>(rng() % 2);
        cache.dim = 1 + static_cast<std::uint32_t>(rng() % 12);
        const std::size_t records = 1 + rng() % 8;
        for (std::size_t i = 0; i < records; ++i) {
            adk::CacheRecord rec;
            rec.name = "r" + std::to_string(rng() % 1000);
            rec.class_index = static_cast<std::uint32_t>(rng() % 7);
            rec.desc_index = static_cast<std::uint32_t>(rng() % 7);
            rec.payload.resize(cache.dim);
            for (double& v : rec.payload) {
                v = 4.0 * oracle::uniform01(rng) - 2.0;
            }
            cache.records.push_back(std::move(rec));
        }
        return cache;
    };

    for (std::size_t it = 0; it < iterations; ++it) {
        const adk::FeatureCache cache = random_cache();
        std::vector<unsigned char> bytes = adk::encode_cache(cache);

        if (cache.dtype == adk::CacheDtype::F64) {
            // valid f64 caches roundtrip bitwise
            const auto again = adk::encode_cache(adk::decode_cache(bytes));
            if (again != bytes) {
                return {false, "bitwise roundtrip failed at iteration " + std::to_string(it)};
            }
            ++roundtrips;
        }

        // one structural corruption from the detectable set
        std::vector<unsigned char> bad = bytes;
        switch (rng() % 7) {
            case 0:  // truncate
                bad.resize(rng() % bad.size());
                break;
            case 1:  // magic
                bad[rng() % 4] ^= static_cast<unsigned char>(1 + rng() % 255);
                break;
            case 2:  // version
                bad[4 + rng() % 4] ^= static_cast<unsigned char>(1 + rng() % 255);
                break;
            case 3:  // dtype
                bad[8] = static_cast<unsigned char>(2 + rng() % 250);
                break;
            case 4:  // dim
                bad[12 + rng() % 4] ^= static_cast<unsigned char>(1 + rng() % 255);
                break;
            case 5:  // record count
                bad[16 + rng() % 8] ^= static_cast<unsigned char>(1 + rng() % 255);
                break;
            case 6:  // kind, or first record's name length
                if (rng() % 2 == 0) {
                    bad[24] = static_cast<unsigned char>(3 + rng() % 250);
                } else {
                    bad[28 + rng() % 4] ^= static_cast<unsigned char>(1 + rng() % 255);
                }
                break;
        }
        try {
            (void)adk::decode_cache(bad);
            return {false, "corrupted cache accepted at iteration " + std::to_string(it)};
        } catch (const adk::FormatError&) {
            ++format_errors;
        } catch (const std::exception& e) {
            return {false, std::string("non-FormatError escape at iteration ") +
                               std::to_string(it) + ": " + e.what()};
        }
    }
    char detail[200];
    std::snprintf(detail, sizeof(detail),
                  "%zu corruptions -> FormatError (100%%), %zu bitwise f64 roundtrips, 0 crashes",
                  format_errors, roundtrips);
    return {true, detail};
}

// ---- criterion 9: CLI determinism across reruns and thread counts -----------

Criterion cli_determinism() {
    const fs::path dir = g_workdir / "det";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const std::string synth_args =
        "synth --n 4 --m 5 --d 16 --images-per-class 6 --separation 0.9 --noise 0.1 --seed 3";
    const std::string fixture = (dir / "fix").string();
    if (run_cli(synth_args + " --out " + fixture) != 0 ||
        run_cli(synth_args + " --out " + (dir / "fix2").string(), "ADK_THREADS=4 ") != 0) {
        return {false, "synth failed"};
    }
    for (const char* file :
         {"images.adkf", "hand.adkf", "desc.adkf", "descriptions.json", "split_all_to_all.json"}) {
        if (slurp(dir / "fix" / file) != slurp(dir / "fix2" / file)) {
            return {false, std::string("synth outputs differ: ") + file};
        }
    }

    auto paths = [&](const std::string& tag) {
        return std::vector<std::string>{(dir / ("kb_" + tag + ".json")).string(),
                                        (dir / ("rec_" + tag + ".jsonl")).string(),
                                        (dir / ("report_" + tag + ".json")).string(),
                                        (dir / ("kld_" + tag + ".json")).string(),
                                        (dir / ("cost_" + tag + ".json")).string()};
    };
    const auto a = paths("a");
    const auto b = paths("b");
    const std::string desc = fixture + "/desc.adkf";
    const std::string hand = fixture + "/hand.adkf";
    const std::string images = fixture + "/images.adkf";
    const std::string manifest = fixture + "/split_all_to_all.json";

    for (int round = 0; round < 2; ++round) {
        const auto& p = round == 0 ? a : b;
        const std::string env = round == 0 ? "ADK_THREADS=1 " : "ADK_THREADS=4 ";
        if (run_cli("build-knowledge --desc " + desc + " --hand " + hand + " --out " + p[0],
                    env) != 0 ||
            run_cli("classify --images " + images + " --kb " + p[0] + " --desc " + desc +
                        " --out " + p[1],
                    env) != 0 ||
            run_cli("eval --manifest " + manifest + " --images " + images + " --kb " + p[0] +
                        " --desc " + desc + " --out " + p[2],
                    env) != 0 ||
            run_cli("diagnose --images " + images + " --kb " + p[0] + " --out " + p[3], env) !=
                0 ||
            run_cli("cost --n 500 --m 20 --d 512 --convention MAC --image-gflops 33.946 "
                    "--text-gflops 5.8186 --out " +
                        p[4],
                    env) != 0) {
            return {false, "a command failed: " + slurp(g_workdir / "cli_stderr.txt")};
        }
    }
    const char* names[] = {"build-knowledge", "classify", "eval", "diagnose", "cost"};
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (slurp(a[i]) != slurp(b[i])) {
            return {false, std::string(names[i]) + " output differs between runs"};
        }
    }
    return {true, "5 commands byte-identical across reruns with ADK_THREADS=1 vs 4"};
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--cli" && i + 1 < argc) {
            g_cli = argv[i + 1];
        }
    }
    if (g_cli.empty()) {
        std::cerr << "usage: adk_acceptance --cli <path-to-adk-binary>\n";
        return 64;
    }
    g_workdir = fs::temp_directory_path() / "adk_acceptance";
    fs::create_directories(g_workdir);

    struct Entry {
        const char* name;
        std::function<Criterion()> fn;
    };
    const std::vector<Entry> criteria = {
        {"fusion-formula fidelity vs brute-force oracle", fusion_fidelity},
        {"gradient matches central finite differences", gradient_correctness},
        {"comp/inst coincide in the M=1 and large-tau limits", limit_coincidences},
        {"cost model matches reference overhead deltas", cost_model_check},
        {"harmonic mean matches reference values", harmonic_mean_check},
        {"KLD diagnostic sanity and ordering", kld_sanity},
        {"synthetic end-to-end pipeline via CLI", synthetic_end_to_end},
        {"cache format robustness under fuzzing", format_robustness},
        {"CLI determinism across reruns and thread counts", cli_determinism},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Criterion result;
        try {
            result = criteria[i].fn();
        } catch (const std::exception& e) {
            result = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] criterion %zu: %s — %s\n", result.passed ? "PASS" : "FAIL", i + 1,
                    criteria[i].name, result.detail.c_str());
        std::fflush(stdout);
        failures += result.passed ? 0 : 1;
    }
    std::printf("%zu/%zu acceptance criteria passed\n", criteria.size() - failures,
                criteria.size());
    fs::remove_all(g_workdir);
    return failures;
}
