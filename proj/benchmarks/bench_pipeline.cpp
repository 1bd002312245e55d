#include <benchmark/benchmark.h>

#include "adk/classifier.hpp"
#include "adk/io.hpp"

namespace {

adk::SyntheticDataset make_dataset(std::size_t n, std::size_t m, std::size_t d) {
    adk::SynthesisParams params;
    params.num_classes = n;
    params.descriptors_per_class = m;
    params.dim = d;
    params.images_per_class = 1;
    params.separation = 0.9;
    params.noise = 0.1;
    params.seed = 12;
    return adk::synthesize_dataset(params);
}

void BM_Classify(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const std::size_t m = static_cast<std::size_t>(state.range(1));
    const std::size_t d = static_cast<std::size_t>(state.range(2));
    const adk::SyntheticDataset data = make_dataset(n, m, d);
    const adk::KnowledgeBank kb = adk::build_knowledge(data.bank, data.hand);
    const adk::FeatureVector& v = data.images.features.front();
    for (auto _ : state) {
        benchmark::DoNotOptimize(adk::classify(v, kb, data.bank));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Classify)
    ->Args({10, 20, 512})
    ->Args({100, 20, 512})
    ->Args({500, 20, 512});

void BM_AttentionWeights(benchmark::State& state) {
    const std::size_t m = static_cast<std::size_t>(state.range(0));
    const adk::SyntheticDataset data = make_dataset(4, m, 512);
    const adk::FeatureVector& v = data.images.features.front();
    for (auto _ : state) {
        benchmark::DoNotOptimize(adk::attention_weights(v, data.bank, 0));
    }
}
BENCHMARK(BM_AttentionWeights)->Arg(5)->Arg(20)->Arg(80);

void BM_BuildCompositional(benchmark::State& state) {
    const adk::SyntheticDataset data =
        make_dataset(static_cast<std::size_t>(state.range(0)), 20, 512);
    for (auto _ : state) {
        benchmark::DoNotOptimize(adk::build_compositional(data.bank));
    }
}
BENCHMARK(BM_BuildCompositional)->Arg(10)->Arg(100);

void BM_GradImage(benchmark::State& state) {
    const adk::SyntheticDataset data =
        make_dataset(static_cast<std::size_t>(state.range(0)), 20, 512);
    const adk::KnowledgeBank kb = adk::build_knowledge(data.bank, data.hand);
    const adk::FeatureVector& v = data.images.features.front();
    for (auto _ : state) {
        benchmark::DoNotOptimize(adk::grad_image(v, kb, data.bank, 0));
    }
}
BENCHMARK(BM_GradImage)->Arg(10)->Arg(50);

void BM_CacheDecode(benchmark::State& state) {
    const adk::SyntheticDataset data = make_dataset(8, 4, 256);
    adk::ImageSet images = data.images;
    for (int i = 0; i < 6; ++i) {  // grow to a few thousand records
        const std::size_t n = images.features.size();
        for (std::size_t j = 0; j < n; ++j) {
            images.names.push_back(images.names[j] + "+");
            images.features.push_back(images.features[j]);
            images.labels.push_back(images.labels[j]);
        }
    }
    const std::vector<unsigned char> bytes = adk::encode_cache(adk::images_to_cache(images));
    for (auto _ : state) {
        benchmark::DoNotOptimize(adk::decode_cache(bytes));
    }
    state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * bytes.size()));
}
BENCHMARK(BM_CacheDecode);

}  // namespace

BENCHMARK_MAIN();
