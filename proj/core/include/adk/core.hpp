#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adk/errors.hpp"

namespace adk {

/// Dense embedding vector in the shared image-text space.
///
/// All internal arithmetic is double precision; file formats may carry f32,
/// which is promoted on load. Values are validated on construction: at least
/// one coordinate, no NaN or infinity.
class FeatureVector {
public:
    FeatureVector() = default;
    explicit FeatureVector(std::vector<double> values);

    std::size_t dim() const noexcept { return values_.size(); }
    const std::vector<double>& values() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    std::span<const double> span() const noexcept { return values_; }

    /// L2 norm.
    double norm() const noexcept;

    /// True when the L2 norm is within `tol` of 1.
    bool is_unit(double tol = 1e-6) const noexcept;

private:
    std::vector<double> values_;
};

/// Softmax temperature. Similarity scores are divided by tau everywhere;
/// the conventional CLIP-style logit scale of 100 corresponds to tau = 0.01.
class Temperature {
public:
    explicit Temperature(double tau);
    double value() const noexcept { return tau_; }

private:
    double tau_;
};

/// Discrete distribution over classes: entries in [0, 1], summing to 1
/// within 1e-9. Violations raise InvariantError (distributions are produced
/// internally, never parsed from input).
class ProbabilityVector {
public:
    explicit ProbabilityVector(std::vector<double> probs);

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const noexcept { return probs_[i]; }
    const std::vector<double>& probs() const noexcept { return probs_; }

private:
    std::vector<double> probs_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

/// Per-coordinate compensated (Kahan) accumulator. Used wherever a mean or
/// weighted sum promises order-invariance at the 1e-12 level.
class KahanAccumulator {
public:
    explicit KahanAccumulator(std::size_t dim) : sum_(dim, 0.0), carry_(dim, 0.0) {}

    void add(std::span<const double> x, double scale = 1.0);
    const std::vector<double>& sum() const noexcept { return sum_; }
    std::vector<double> take_scaled(double scale) const;

private:
    std::vector<double> sum_;
    std::vector<double> carry_;
};

/// Cosine similarity (a.b)/(|a||b|), clamped to [-1, 1]. Computed on the fly;
/// inputs need not be unit vectors.
double cosine_similarity(const FeatureVector& a, const FeatureVector& b);

/// Temperature-scaled softmax with max-subtraction for overflow safety.
ProbabilityVector softmax(std::span<const double> scores, Temperature tau);

/// Scale to unit L2 norm. DegenerateVectorError when the norm is <= 1e-12.
FeatureVector normalize(const FeatureVector& a);

/// FNV-1a 64-bit, the digest used for bank checksums. Deterministic across
/// platforms (unlike std::hash).
std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64_append_string(std::uint64_t h, const std::string& s);
std::uint64_t fnv1a64_append_doubles(std::uint64_t h, std::span<const double> values);

}  // namespace adk
