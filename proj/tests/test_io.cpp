#include "adk/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using adk::CacheDtype;
using adk::CacheKind;
using adk::CacheRecord;
using adk::FeatureCache;

namespace {

FeatureCache sample_cache(std::size_t records, std::uint32_t dim, CacheKind kind,
                          CacheDtype dtype, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    FeatureCache cache;
    cache.kind = kind;
    cache.dtype = dtype;
    cache.dim = dim;
    for (std::size_t i = 0; i < records; ++i) {
        CacheRecord rec;
        rec.name = "record_" + std::to_string(i);
        rec.class_index = static_cast<std::uint32_t>(i % 3);
        rec.desc_index = static_cast<std::uint32_t>(i % 5);
        rec.payload.resize(dim);
        for (double& v : rec.payload) {
            v = 2.0 * oracle::uniform01(rng) - 1.0;
        }
        cache.records.push_back(std::move(rec));
    }
    return cache;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("adk_io_test_" + name);
}

}  // namespace

TEST(FeatureCacheFormat, EmptyCacheRoundTrips) {
    FeatureCache cache;
    cache.kind = CacheKind::Hand;
    cache.dtype = CacheDtype::F64;
    cache.dim = 4;
    const auto bytes = adk::encode_cache(cache);
    const FeatureCache back = adk::decode_cache(bytes);
    EXPECT_EQ(back.records.size(), 0u);
    EXPECT_EQ(back.dim, 4u);
    EXPECT_EQ(back.kind, CacheKind::Hand);
}

TEST(FeatureCacheFormat, SingleRecordBitwiseRoundTrip) {
    FeatureCache cache;
    cache.kind = CacheKind::Image;
    cache.dtype = CacheDtype::F64;
    cache.dim = 4;
    cache.records.push_back({"img", 2, 0, {0.1, -0.25, 1e-300, -0.0}});
    const FeatureCache back = adk::decode_cache(adk::encode_cache(cache));
    ASSERT_EQ(back.records.size(), 1u);
    EXPECT_EQ(back.records[0].name, "img");
    EXPECT_EQ(back.records[0].class_index, 2u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(std::memcmp(&back.records[0].payload[i], &cache.records[0].payload[i], 8), 0);
    }
}

TEST(FeatureCacheFormat, F32PayloadsPromoteDeterministically) {
    FeatureCache cache = sample_cache(5, 6, CacheKind::Desc, CacheDtype::F32, 7);
    const FeatureCache back = adk::decode_cache(adk::encode_cache(cache));
    for (std::size_t i = 0; i < cache.records.size(); ++i) {
        for (std::size_t j = 0; j < cache.dim; ++j) {
            EXPECT_DOUBLE_EQ(back.records[i].payload[j],
                             static_cast<double>(static_cast<float>(cache.records[i].payload[j])));
        }
        EXPECT_EQ(back.records[i].desc_index, cache.records[i].desc_index);
    }
}

TEST(FeatureCacheFormat, LargeFuzzRoundTripDigestEqual) {
    FeatureCache cache = sample_cache(10000, 8, CacheKind::Image, CacheDtype::F64, 99);
    const auto bytes = adk::encode_cache(cache);
    const auto again = adk::encode_cache(adk::decode_cache(bytes));
    ASSERT_EQ(bytes.size(), again.size());
    EXPECT_EQ(adk::fnv1a64(bytes), adk::fnv1a64(again));
}

TEST(FeatureCacheFormat, FileRoundTripAndMissingFile) {
    const auto path = temp_file("roundtrip.adkf");
    FeatureCache cache = sample_cache(10, 4, CacheKind::Hand, CacheDtype::F64, 3);
    adk::write_cache(cache, path);
    const FeatureCache back = adk::read_cache(path);
    EXPECT_EQ(back.records.size(), 10u);
    std::filesystem::remove(path);
    EXPECT_THROW(adk::read_cache(path), adk::IoError);
}

TEST(FeatureCacheFormat, StructuredErrorsOnCorruption) {
    FeatureCache cache = sample_cache(3, 4, CacheKind::Image, CacheDtype::F64, 5);
    std::vector<unsigned char> bytes = adk::encode_cache(cache);

    {
        auto bad = bytes;
        bad[0] = 'X';
        try {
            adk::decode_cache(bad);
            FAIL() << "bad magic accepted";
        } catch (const adk::FormatError& e) {
            EXPECT_EQ(e.byte_offset(), 0u);
        }
    }
    {
        auto bad = bytes;
        bad[4] = 9;  // version
        EXPECT_THROW(adk::decode_cache(bad), adk::FormatError);
    }
    {
        auto bad = bytes;
        bad[8] = 7;  // dtype
        EXPECT_THROW(adk::decode_cache(bad), adk::FormatError);
    }
    {
        auto bad = bytes;
        bad[24] = 9;  // kind
        EXPECT_THROW(adk::decode_cache(bad), adk::FormatError);
    }
    for (std::size_t cut : {1ul, 10ul, 27ul, 40ul, bytes.size() - 1}) {
        std::vector<unsigned char> truncated(bytes.begin(), bytes.begin() + cut);
        EXPECT_THROW(adk::decode_cache(truncated), adk::FormatError) << "cut at " << cut;
    }
    {
        auto bad = bytes;
        bad.push_back(0);  // trailing byte
        EXPECT_THROW(adk::decode_cache(bad), adk::FormatError);
    }
    {
        auto bad = bytes;
        bad[28] = 0xff;  // first record's name length, now far too large
        EXPECT_THROW(adk::decode_cache(bad), adk::FormatError);
    }
}

TEST(FeatureCacheFormat, NanPayloadIsDataError) {
    FeatureCache cache = sample_cache(2, 4, CacheKind::Image, CacheDtype::F64, 5);
    auto bytes = adk::encode_cache(cache);
    const double nan = std::nan("");
    // overwrite the last payload value of the last record
    std::memcpy(bytes.data() + bytes.size() - 8, &nan, 8);
    EXPECT_THROW(adk::decode_cache(bytes), adk::DataError);
}

TEST(DescriptionManifest, LoadsSmallFixture) {
    const std::string text = R"({"cat": ["a", "b"], "dog": ["c", "d"]})";
    const adk::DescriptionManifest m = adk::parse_descriptions(text);
    EXPECT_EQ(m.class_names, (std::vector<std::string>{"cat", "dog"}));
    EXPECT_EQ(m.descriptors_per_class(), 2u);
}

TEST(DescriptionManifest, RaggedNamesOffendingClass) {
    const std::string text = R"({"cat": ["a", "b"], "dog": ["c", "d", "e"]})";
    try {
        adk::parse_descriptions(text);
        FAIL() << "ragged manifest accepted";
    } catch (const adk::SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find("dog"), std::string::npos);
    }
}

TEST(DescriptionManifest, DuplicateClassRejected) {
    const std::string text = R"({"cat": ["a"], "cat": ["b"]})";
    EXPECT_THROW(adk::parse_descriptions(text), adk::SchemaError);
    EXPECT_THROW(adk::parse_descriptions("[]"), adk::SchemaError);
    EXPECT_THROW(adk::parse_descriptions("{}"), adk::SchemaError);
    EXPECT_THROW(adk::parse_descriptions(R"({"cat": []})"), adk::SchemaError);
    EXPECT_THROW(adk::parse_descriptions(R"({"cat": ["", "b"]})"), adk::SchemaError);
    EXPECT_THROW(adk::parse_descriptions("not json"), adk::SchemaError);
}

TEST(DescriptionManifest, CanonicalSerializationIsStable) {
    std::mt19937_64 rng(8);
    adk::DescriptionManifest m;
    for (int c = 0; c < 40; ++c) {
        m.class_names.push_back("class_" + std::to_string(c));
        std::vector<std::string> texts;
        for (int j = 0; j < 20; ++j) {
            texts.push_back("text " + std::to_string(rng() % 1000000));
        }
        m.descriptions.push_back(std::move(texts));
    }
    // class_10 < class_9 lexicographically; canonical form sorts, so parse
    // then re-serialize twice and require a fixed point
    const std::string once = adk::canonical_descriptions_json(m);
    const adk::DescriptionManifest parsed = adk::parse_descriptions(once);
    const std::string twice = adk::canonical_descriptions_json(parsed);
    EXPECT_EQ(once, twice);
    EXPECT_TRUE(std::is_sorted(parsed.class_names.begin(), parsed.class_names.end()));
}

TEST(DescriptionManifest, InRepoFixtureLoads) {
    const char* source_dir = std::getenv("ADK_SOURCE_DIR");
    ASSERT_NE(source_dir, nullptr) << "ADK_SOURCE_DIR not set by ctest";
    const auto path = std::filesystem::path(source_dir) / "data" / "descriptions_aircraft.json";
    const adk::DescriptionManifest m = adk::load_descriptions(path);
    EXPECT_EQ(m.class_names.size(), 3u);
    EXPECT_EQ(m.descriptors_per_class(), 5u);
}

TEST(Ingestion, NormalizesAndValidates) {
    FeatureCache cache;
    cache.kind = CacheKind::Image;
    cache.dtype = CacheDtype::F64;
    cache.dim = 2;
    cache.records.push_back({"a", 0, 0, {3.0, 4.0}});
    const adk::ImageSet images = adk::load_images(cache);
    EXPECT_NEAR(images.features[0].norm(), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(images.features[0][0], 0.6);

    cache.records.push_back({"zero", 1, 0, {0.0, 0.0}});
    EXPECT_THROW(adk::load_images(cache), adk::DegenerateVectorError);
}

TEST(Ingestion, HandCacheOrderedByClassIndex) {
    FeatureCache cache;
    cache.kind = CacheKind::Hand;
    cache.dtype = CacheDtype::F64;
    cache.dim = 2;
    cache.records.push_back({"second", 1, 0, {0.0, 2.0}});
    cache.records.push_back({"first", 0, 0, {2.0, 0.0}});
    const adk::HandSet hand = adk::load_hand(cache);
    EXPECT_EQ(hand.class_names, (std::vector<std::string>{"first", "second"}));
    EXPECT_DOUBLE_EQ(hand.features[0][0], 1.0);

    cache.records.push_back({"dup", 1, 0, {1.0, 0.0}});
    EXPECT_THROW(adk::load_hand(cache), adk::SchemaError);
}

TEST(Ingestion, DescriptorCacheToBank) {
    FeatureCache cache;
    cache.kind = CacheKind::Desc;
    cache.dtype = CacheDtype::F64;
    cache.dim = 2;
    cache.records.push_back({"c0 d0", 0, 0, {1.0, 0.0}});
    cache.records.push_back({"c0 d1", 0, 1, {0.0, 1.0}});
    cache.records.push_back({"c1 d0", 1, 0, {0.0, 3.0}});
    cache.records.push_back({"c1 d1", 1, 1, {3.0, 0.0}});
    const adk::DescriptorBank bank =
        adk::make_descriptor_bank(cache, {"x", "y"}, adk::Temperature(0.01));
    EXPECT_EQ(bank.descriptors_per_class(), 2u);
    EXPECT_EQ(bank.descriptions(0)[1], "c0 d1");
    EXPECT_DOUBLE_EQ(bank.descriptor(1, 0)[1], 1.0);  // normalized on ingestion

    cache.records.pop_back();
    EXPECT_THROW(adk::make_descriptor_bank(cache, {"x", "y"}, adk::Temperature(0.01)),
                 adk::SchemaError);
}

TEST(KnowledgeBankFile, JsonRoundTripExact) {
    const oracle::Problem p = oracle::random_problem(80, 4, 3, 8, 0.02);
    const adk::KnowledgeBank kb = testsupport::to_kb(p);
    const auto path = temp_file("kb.json");
    adk::save_knowledge_bank(kb, path);
    const adk::KnowledgeBank back = adk::load_knowledge_bank(path);
    EXPECT_EQ(back.class_names(), kb.class_names());
    EXPECT_EQ(back.source_bank_checksum(), kb.source_bank_checksum());
    for (std::size_t c = 0; c < kb.num_classes(); ++c) {
        for (std::size_t i = 0; i < kb.dim(); ++i) {
            EXPECT_EQ(back.hand()[c][i], kb.hand()[c][i]);  // exact doubles via JSON
            EXPECT_EQ(back.comp()[c][i], kb.comp()[c][i]);
        }
    }
    std::filesystem::remove(path);
}

TEST(Synthesize, ZeroNoiseReproducesPrototypes) {
    adk::SynthesisParams params;
    params.num_classes = 4;
    params.descriptors_per_class = 3;
    params.dim = 8;
    params.images_per_class = 2;
    params.separation = 0.9;
    params.noise = 0.0;
    params.seed = 1;
    const adk::SyntheticDataset data = adk::synthesize_dataset(params);
    // descriptors, hand vectors and images all collapse onto the prototype
    for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_NEAR(adk::cosine_similarity(data.hand[c], data.bank.descriptor(c, 0)), 1.0, 1e-12);
    }
    EXPECT_NEAR(adk::cosine_similarity(data.images.features[0], data.bank.descriptor(0, 1)), 1.0,
                1e-12);

    const adk::KnowledgeBank kb = adk::build_knowledge(data.bank, data.hand);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.images.features.size(); ++i) {
        const auto rec = adk::classify(data.images.features[i], kb, data.bank);
        hits += rec.predicted == data.images.labels[i] ? 1 : 0;
    }
    EXPECT_EQ(hits, data.images.features.size());
}

TEST(Synthesize, FullSeparationGivesOrthonormalPrototypes) {
    adk::SynthesisParams params;
    params.num_classes = 5;
    params.descriptors_per_class = 2;
    params.dim = 5;
    params.images_per_class = 1;
    params.separation = 1.0;
    params.noise = 0.0;
    params.seed = 2;
    const adk::SyntheticDataset data = adk::synthesize_dataset(params);
    for (std::size_t a = 0; a < 5; ++a) {
        for (std::size_t b = 0; b < 5; ++b) {
            const double cos = adk::cosine_similarity(data.hand[a], data.hand[b]);
            EXPECT_NEAR(cos, a == b ? 1.0 : 0.0, 1e-12);
        }
    }
}

TEST(Synthesize, PrototypeCosineMatchesSeparation) {
    adk::SynthesisParams params;
    params.num_classes = 3;
    params.descriptors_per_class = 2;
    params.dim = 8;
    params.images_per_class = 1;
    params.separation = 0.75;
    params.noise = 0.0;
    params.seed = 3;
    const adk::SyntheticDataset data = adk::synthesize_dataset(params);
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a + 1; b < 3; ++b) {
            EXPECT_NEAR(adk::cosine_similarity(data.hand[a], data.hand[b]), 0.25, 1e-12);
        }
    }
}

TEST(Synthesize, SeededBytesAreIdentical) {
    adk::SynthesisParams params;
    params.num_classes = 3;
    params.descriptors_per_class = 4;
    params.dim = 8;
    params.images_per_class = 5;
    params.separation = 0.9;
    params.noise = 0.1;
    params.seed = 7;
    const adk::SyntheticDataset a = adk::synthesize_dataset(params);
    const adk::SyntheticDataset b = adk::synthesize_dataset(params);
    EXPECT_EQ(adk::encode_cache(adk::images_to_cache(a.images)),
              adk::encode_cache(adk::images_to_cache(b.images)));
    EXPECT_EQ(adk::encode_cache(adk::bank_to_desc_cache(a.bank)),
              adk::encode_cache(adk::bank_to_desc_cache(b.bank)));
    EXPECT_EQ(adk::encode_cache(adk::hand_to_cache(a.bank.class_names(), a.hand)),
              adk::encode_cache(adk::hand_to_cache(b.bank.class_names(), b.hand)));

    params.seed = 8;
    const adk::SyntheticDataset c = adk::synthesize_dataset(params);
    EXPECT_NE(adk::encode_cache(adk::images_to_cache(a.images)),
              adk::encode_cache(adk::images_to_cache(c.images)));
}

TEST(Synthesize, InfeasibleParametersRejected) {
    adk::SynthesisParams params;
    params.num_classes = 9;
    params.descriptors_per_class = 2;
    params.dim = 8;  // fewer dimensions than classes
    params.images_per_class = 1;
    params.separation = 1.0;
    params.noise = 0.0;
    EXPECT_THROW(adk::synthesize_dataset(params), adk::DomainError);
    params.dim = 16;
    params.separation = 1.5;
    EXPECT_THROW(adk::synthesize_dataset(params), adk::DomainError);
}
