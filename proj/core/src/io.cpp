#include "adk/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "adk/rng.hpp"

namespace adk {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 24));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
}

void put_f32(std::vector<unsigned char>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void put_f64(std::vector<unsigned char>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

// Bounds-checked little-endian reader tracking the current byte offset for
// FormatError reporting.
class Reader {
public:
    explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return offset_; }
    std::size_t remaining() const noexcept { return bytes_.size() - offset_; }

    void require(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError(std::string("truncated cache: expected ") + what, offset_);
        }
    }

    std::uint32_t u32(const char* what) {
        require(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
        }
        offset_ += 4;
        return v;
    }

    std::uint64_t u64(const char* what) {
        require(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
        }
        offset_ += 8;
        return v;
    }

    std::string str(std::size_t n, const char* what) {
        require(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), n);
        offset_ += n;
        return s;
    }

    void skip(std::size_t n, const char* what) {
        require(n, what);
        offset_ += n;
    }

    double f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return static_cast<double>(v);
    }

    double f64(const char* what) {
        const std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

private:
    std::span<const unsigned char> bytes_;
    std::size_t offset_ = 0;
};

std::size_t index_fields_for(CacheKind kind) {
    return kind == CacheKind::Desc ? 2 : 1;
}

}  // namespace

std::vector<unsigned char> encode_cache(const FeatureCache& cache) {
    if (cache.dim == 0) {
        throw SchemaError("cache dim must be >= 1");
    }
    std::vector<unsigned char> out;
    out.push_back('A');
    out.push_back('D');
    out.push_back('K');
    out.push_back('F');
    put_u32(out, kCacheVersion);
    put_u32(out, static_cast<std::uint32_t>(cache.dtype));
    put_u32(out, cache.dim);
    put_u64(out, cache.records.size());
    put_u32(out, static_cast<std::uint32_t>(cache.kind));
    for (const CacheRecord& rec : cache.records) {
        if (rec.name.empty()) {
            throw SchemaError("cache record has an empty name");
        }
        if (rec.payload.size() != cache.dim) {
            throw SchemaError("cache record '" + rec.name + "' payload size " +
                              std::to_string(rec.payload.size()) + " != dim " +
                              std::to_string(cache.dim));
        }
        put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
        out.insert(out.end(), rec.name.begin(), rec.name.end());
        put_u32(out, rec.class_index);
        if (cache.kind == CacheKind::Desc) {
            put_u32(out, rec.desc_index);
        }
        for (double v : rec.payload) {
            if (cache.dtype == CacheDtype::F32) {
                put_f32(out, static_cast<float>(v));
            } else {
                put_f64(out, v);
            }
        }
    }
    return out;
}

FeatureCache decode_cache(std::span<const unsigned char> bytes) {
    Reader r(bytes);
    const std::string magic = r.str(4, "magic");
    if (magic != "ADKF") {
        throw FormatError("bad magic '" + magic + "'", 0);
    }
    const std::uint32_t version = r.u32("version");
    if (version != kCacheVersion) {
        throw FormatError("unsupported version " + std::to_string(version), 4);
    }
    const std::uint32_t dtype_raw = r.u32("dtype");
    if (dtype_raw > 1) {
        throw FormatError("invalid dtype " + std::to_string(dtype_raw), 8);
    }
    const std::uint32_t dim = r.u32("dim");
    if (dim == 0) {
        throw FormatError("dim must be >= 1", 12);
    }
    const std::uint64_t count = r.u64("record_count");
    const std::uint32_t kind_raw = r.u32("kind");
    if (kind_raw > 2) {
        throw FormatError("invalid kind " + std::to_string(kind_raw), 24);
    }

    FeatureCache cache;
    cache.dtype = static_cast<CacheDtype>(dtype_raw);
    cache.kind = static_cast<CacheKind>(kind_raw);
    cache.dim = dim;

    // Structural pass first: walk the record frames with exact size accounting
    // before decoding any payload, so corruption is always a FormatError.
    const std::size_t value_size = cache.dtype == CacheDtype::F32 ? 4 : 8;
    const std::size_t index_fields = index_fields_for(cache.kind);
    {
        Reader scan(bytes);
        scan.skip(28, "header");
        for (std::uint64_t i = 0; i < count; ++i) {
            const std::uint32_t name_len = scan.u32("record name length");
            if (name_len == 0) {
                throw FormatError("record " + std::to_string(i) + " has an empty name",
                                  scan.offset() - 4);
            }
            scan.skip(name_len, "record name");
            scan.skip(4 * index_fields, "record indices");
            scan.skip(value_size * dim, "record payload");
        }
        if (scan.remaining() != 0) {
            throw FormatError(std::to_string(scan.remaining()) + " trailing bytes after " +
                                  std::to_string(count) + " records",
                              scan.offset());
        }
    }

    cache.records.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        CacheRecord rec;
        const std::uint32_t name_len = r.u32("record name length");
        rec.name = r.str(name_len, "record name");
        rec.class_index = r.u32("class index");
        if (cache.kind == CacheKind::Desc) {
            rec.desc_index = r.u32("descriptor index");
        }
        rec.payload.resize(dim);
        for (std::uint32_t j = 0; j < dim; ++j) {
            const double v = cache.dtype == CacheDtype::F32 ? r.f32("payload") : r.f64("payload");
            if (!std::isfinite(v)) {
                throw DataError("non-finite payload value in record " + std::to_string(i) +
                                " ('" + rec.name + "')");
            }
            rec.payload[j] = v;
        }
        cache.records.push_back(std::move(rec));
    }
    return cache;
}

void write_cache(const FeatureCache& cache, const std::filesystem::path& path) {
    const std::vector<unsigned char> bytes = encode_cache(cache);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

FeatureCache read_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return decode_cache(bytes);
}

bool ImageSet::fully_labeled() const {
    return std::all_of(labels.begin(), labels.end(),
                       [](std::uint32_t l) { return l != kUnlabeled; });
}

ImageSet load_images(const FeatureCache& cache) {
    if (cache.kind != CacheKind::Image) {
        throw SchemaError("expected an image cache");
    }
    ImageSet out;
    out.names.reserve(cache.records.size());
    out.features.reserve(cache.records.size());
    out.labels.reserve(cache.records.size());
    for (const CacheRecord& rec : cache.records) {
        out.names.push_back(rec.name);
        out.features.push_back(normalize(FeatureVector(rec.payload)));
        out.labels.push_back(rec.class_index);
    }
    return out;
}

HandSet load_hand(const FeatureCache& cache) {
    if (cache.kind != CacheKind::Hand) {
        throw SchemaError("expected a hand-prompt cache");
    }
    const std::size_t n = cache.records.size();
    if (n == 0) {
        throw SchemaError("hand cache has no records");
    }
    HandSet out;
    out.class_names.assign(n, "");
    out.features.assign(n, FeatureVector());
    std::vector<bool> seen(n, false);
    for (const CacheRecord& rec : cache.records) {
        if (rec.class_index >= n) {
            throw SchemaError("hand record '" + rec.name + "' has class index " +
                              std::to_string(rec.class_index) + " >= " + std::to_string(n));
        }
        if (seen[rec.class_index]) {
            throw SchemaError("duplicate hand record for class index " +
                              std::to_string(rec.class_index));
        }
        seen[rec.class_index] = true;
        out.class_names[rec.class_index] = rec.name;
        out.features[rec.class_index] = normalize(FeatureVector(rec.payload));
    }
    return out;
}

DescriptorBank make_descriptor_bank(const FeatureCache& cache,
                                    std::vector<std::string> class_names, Temperature tau) {
    if (cache.kind != CacheKind::Desc) {
        throw SchemaError("expected a descriptor cache");
    }
    const std::size_t n = class_names.size();
    if (n == 0) {
        throw SchemaError("descriptor bank needs at least one class name");
    }
    if (cache.records.empty() || cache.records.size() % n != 0) {
        throw SchemaError("descriptor cache has " + std::to_string(cache.records.size()) +
                          " records, not a positive multiple of " + std::to_string(n) +
                          " classes");
    }
    const std::size_t m = cache.records.size() / n;
    std::vector<std::vector<std::string>> texts(n, std::vector<std::string>(m));
    std::vector<std::vector<FeatureVector>> feats(n, std::vector<FeatureVector>(m));
    std::vector<std::vector<bool>> seen(n, std::vector<bool>(m, false));
    for (const CacheRecord& rec : cache.records) {
        if (rec.class_index >= n) {
            throw SchemaError("descriptor record has class index " +
                              std::to_string(rec.class_index) + " >= " + std::to_string(n));
        }
        if (rec.desc_index >= m) {
            throw SchemaError("descriptor record for class " +
                              class_names[rec.class_index] + " has descriptor index " +
                              std::to_string(rec.desc_index) + " >= " + std::to_string(m));
        }
        if (seen[rec.class_index][rec.desc_index]) {
            throw SchemaError("duplicate descriptor (" + std::to_string(rec.class_index) + ", " +
                              std::to_string(rec.desc_index) + ")");
        }
        seen[rec.class_index][rec.desc_index] = true;
        texts[rec.class_index][rec.desc_index] = rec.name;
        feats[rec.class_index][rec.desc_index] = normalize(FeatureVector(rec.payload));
    }
    return DescriptorBank(std::move(class_names), std::move(texts), std::move(feats), tau);
}

DescriptionManifest parse_descriptions(const std::string& json_text) {
    // nlohmann silently keeps the last value for duplicate keys, so collect
    // top-level keys through the parser callback to reject duplicates.
    std::vector<std::string> keys;
    auto callback = [&keys](int depth, nlohmann::json::parse_event_t event,
                            nlohmann::json& parsed) {
        if (event == nlohmann::json::parse_event_t::key && depth == 1) {
            keys.push_back(parsed.get<std::string>());
        }
        return true;
    };
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text, callback);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("description manifest is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        throw SchemaError("description manifest must be a JSON object");
    }
    {
        std::set<std::string> unique(keys.begin(), keys.end());
        if (unique.size() != keys.size()) {
            std::string dups;
            std::set<std::string> seen;
            for (const auto& k : keys) {
                if (!seen.insert(k).second) {
                    dups += (dups.empty() ? "" : ", ") + k;
                }
            }
            throw SchemaError("duplicate class names in description manifest: " + dups);
        }
    }
    if (doc.empty()) {
        throw SchemaError("description manifest has no classes");
    }

    DescriptionManifest manifest;
    for (const auto& [name, value] : doc.items()) {  // std::map order: lexicographic
        if (!value.is_array() || value.empty()) {
            throw SchemaError("class '" + name + "' must map to a non-empty array of strings");
        }
        std::vector<std::string> texts;
        texts.reserve(value.size());
        for (const auto& item : value) {
            if (!item.is_string() || item.get<std::string>().empty()) {
                throw SchemaError("class '" + name + "' contains a non-string or empty entry");
            }
            texts.push_back(item.get<std::string>());
        }
        manifest.class_names.push_back(name);
        manifest.descriptions.push_back(std::move(texts));
    }

    const std::size_t m = manifest.descriptions.front().size();
    std::string offenders;
    for (std::size_t c = 0; c < manifest.class_names.size(); ++c) {
        if (manifest.descriptions[c].size() != m) {
            offenders += (offenders.empty() ? "" : ", ") + manifest.class_names[c] + " (" +
                         std::to_string(manifest.descriptions[c].size()) + ")";
        }
    }
    if (!offenders.empty()) {
        throw SchemaError("ragged description manifest, expected " + std::to_string(m) +
                          " descriptions per class; offending classes: " + offenders);
    }
    return manifest;
}

DescriptionManifest load_descriptions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_descriptions(text);
}

std::string canonical_descriptions_json(const DescriptionManifest& manifest) {
    nlohmann::json doc = nlohmann::json::object();
    for (std::size_t c = 0; c < manifest.class_names.size(); ++c) {
        doc[manifest.class_names[c]] = manifest.descriptions[c];
    }
    return doc.dump(2) + "\n";
}

void save_knowledge_bank(const KnowledgeBank& kb, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["schema"] = "adk-kb";
    doc["version"] = 1;
    doc["dim"] = kb.dim();
    doc["class_names"] = kb.class_names();
    char checksum_hex[17];
    std::snprintf(checksum_hex, sizeof(checksum_hex), "%016llx",
                  static_cast<unsigned long long>(kb.source_bank_checksum()));
    doc["source_bank_checksum"] = checksum_hex;
    auto vectors_to_json = [](const std::vector<FeatureVector>& vs) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& v : vs) {
            arr.push_back(v.values());
        }
        return arr;
    };
    doc["hand"] = vectors_to_json(kb.hand());
    doc["comp"] = vectors_to_json(kb.comp());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << doc.dump(2) << "\n";
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

KnowledgeBank load_knowledge_bank(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("knowledge bank file is not valid JSON: " + std::string(e.what()));
    }
    try {
        if (doc.at("schema") != "adk-kb" || doc.at("version") != 1) {
            throw SchemaError("unsupported knowledge bank schema/version in " + path.string());
        }
        const std::size_t dim = doc.at("dim").get<std::size_t>();
        std::vector<std::string> names = doc.at("class_names").get<std::vector<std::string>>();
        auto vectors_from_json = [dim](const nlohmann::json& arr) {
            std::vector<FeatureVector> out;
            out.reserve(arr.size());
            for (const auto& item : arr) {
                std::vector<double> values = item.get<std::vector<double>>();
                if (values.size() != dim) {
                    throw SchemaError("knowledge bank vector length != dim");
                }
                out.emplace_back(std::move(values));
            }
            return out;
        };
        std::vector<FeatureVector> hand = vectors_from_json(doc.at("hand"));
        std::vector<FeatureVector> comp = vectors_from_json(doc.at("comp"));
        const std::string checksum_hex = doc.at("source_bank_checksum").get<std::string>();
        const std::uint64_t checksum = std::stoull(checksum_hex, nullptr, 16);
        return KnowledgeBank(std::move(names), std::move(hand), std::move(comp), checksum);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("malformed knowledge bank file " + path.string() + ": " + e.what());
    }
}

namespace {

// Unit prototypes with pairwise cosine <= 1 - separation. separation == 1
// gives basis vectors; otherwise, with room for one extra dimension, each
// prototype shares a sqrt(c) component along e_N so the pairwise cosine is
// exactly c = 1 - separation.
std::vector<FeatureVector> make_prototypes(std::size_t n, std::size_t d, double separation) {
    if (n == 0 || d == 0) {
        throw DomainError("synthesize_dataset requires N >= 1 and D >= 1");
    }
    if (!(separation >= 0.0 && separation <= 1.0)) {
        throw DomainError("separation must be in [0, 1]");
    }
    if (d < n) {
        throw DomainError("prototype construction needs D >= N (got D=" + std::to_string(d) +
                          ", N=" + std::to_string(n) + ")");
    }
    const double c = 1.0 - separation;
    std::vector<FeatureVector> out;
    out.reserve(n);
    const bool shared_axis = c > 0.0 && d >= n + 1;
    const double shared = shared_axis ? std::sqrt(c) : 0.0;
    const double own = shared_axis ? std::sqrt(1.0 - c) : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> p(d, 0.0);
        p[i] = own;
        if (shared_axis) {
            p[n] = shared;
        }
        out.emplace_back(std::move(p));
    }
    return out;
}

FeatureVector perturbed(const FeatureVector& proto, double noise, Rng& rng) {
    std::vector<double> x(proto.values());
    if (noise > 0.0) {
        for (double& v : x) {
            v += noise * rng.gaussian();
        }
    }
    return normalize(FeatureVector(std::move(x)));
}

}  // namespace

SyntheticDataset synthesize_dataset(const SynthesisParams& params) {
    if (params.num_classes == 0 || params.descriptors_per_class == 0 || params.dim == 0 ||
        params.images_per_class == 0) {
        throw DomainError("synthesize_dataset parameters must be positive");
    }
    if (!(params.noise >= 0.0) || !std::isfinite(params.noise)) {
        throw DomainError("noise must be a nonnegative real");
    }
    const std::vector<FeatureVector> prototypes =
        make_prototypes(params.num_classes, params.dim, params.separation);

    Rng rng(params.seed);
    std::vector<std::string> class_names;
    class_names.reserve(params.num_classes);
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "class_%03zu", c);
        class_names.emplace_back(buf);
    }

    std::vector<std::vector<std::string>> texts(params.num_classes);
    std::vector<std::vector<FeatureVector>> feats(params.num_classes);
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        texts[c].reserve(params.descriptors_per_class);
        feats[c].reserve(params.descriptors_per_class);
        for (std::size_t m = 0; m < params.descriptors_per_class; ++m) {
            texts[c].push_back("synthetic trait " + std::to_string(m) + " of " + class_names[c]);
            feats[c].push_back(perturbed(prototypes[c], params.noise, rng));
        }
    }

    std::vector<FeatureVector> hand;
    hand.reserve(params.num_classes);
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        hand.push_back(perturbed(prototypes[c], params.noise, rng));
    }

    ImageSet images;
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        for (std::size_t i = 0; i < params.images_per_class; ++i) {
            images.names.push_back(class_names[c] + "/img_" + std::to_string(i));
            images.features.push_back(perturbed(prototypes[c], params.noise, rng));
            images.labels.push_back(static_cast<std::uint32_t>(c));
        }
    }

    return SyntheticDataset{
        DescriptorBank(std::move(class_names), std::move(texts), std::move(feats),
                       Temperature(params.tau)),
        std::move(hand), std::move(images)};
}

FeatureCache images_to_cache(const ImageSet& images) {
    FeatureCache cache;
    cache.kind = CacheKind::Image;
    cache.dtype = CacheDtype::F64;
    cache.dim = images.features.empty() ? 1
                                        : static_cast<std::uint32_t>(images.features.front().dim());
    for (std::size_t i = 0; i < images.features.size(); ++i) {
        cache.records.push_back(
            {images.names[i], images.labels[i], 0, images.features[i].values()});
    }
    return cache;
}

FeatureCache hand_to_cache(const std::vector<std::string>& class_names,
                           const std::vector<FeatureVector>& hand) {
    FeatureCache cache;
    cache.kind = CacheKind::Hand;
    cache.dtype = CacheDtype::F64;
    cache.dim = hand.empty() ? 1 : static_cast<std::uint32_t>(hand.front().dim());
    for (std::size_t c = 0; c < hand.size(); ++c) {
        cache.records.push_back(
            {class_names[c], static_cast<std::uint32_t>(c), 0, hand[c].values()});
    }
    return cache;
}

FeatureCache bank_to_desc_cache(const DescriptorBank& bank) {
    FeatureCache cache;
    cache.kind = CacheKind::Desc;
    cache.dtype = CacheDtype::F64;
    cache.dim = static_cast<std::uint32_t>(bank.dim());
    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
        for (std::size_t m = 0; m < bank.descriptors_per_class(); ++m) {
            cache.records.push_back({bank.descriptions(c)[m], static_cast<std::uint32_t>(c),
                                     static_cast<std::uint32_t>(m),
                                     bank.descriptor(c, m).values()});
        }
    }
    return cache;
}

}  // namespace adk
