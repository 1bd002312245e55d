#include "adk/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace adk {

FeatureVector::FeatureVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) {
        throw DimensionError("FeatureVector requires dim >= 1");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw DataError("FeatureVector contains a non-finite value");
        }
    }
}

double FeatureVector::norm() const noexcept {
    return l2_norm(values_);
}

bool FeatureVector::is_unit(double tol) const noexcept {
    return std::abs(norm() - 1.0) <= tol;
}

Temperature::Temperature(double tau) : tau_(tau) {
    if (!std::isfinite(tau) || tau <= 0.0) {
        throw DomainError("temperature must be finite and > 0");
    }
}

ProbabilityVector::ProbabilityVector(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
        throw EmptyInputError("probability vector must be non-empty");
    }
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw InvariantError("probability entry outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw InvariantError("probabilities sum to " + std::to_string(sum) + ", expected 1");
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double l2_norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

void KahanAccumulator::add(std::span<const double> x, double scale) {
    for (std::size_t i = 0; i < sum_.size(); ++i) {
        const double term = x[i] * scale - carry_[i];
        const double next = sum_[i] + term;
        carry_[i] = (next - sum_[i]) - term;
        sum_[i] = next;
    }
}

std::vector<double> KahanAccumulator::take_scaled(double scale) const {
    std::vector<double> out(sum_.size());
    for (std::size_t i = 0; i < sum_.size(); ++i) {
        out[i] = sum_[i] * scale;
    }
    return out;
}

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
    if (a.dim() != b.dim()) {
        throw DimensionError("cosine_similarity: dim " + std::to_string(a.dim()) +
                             " vs " + std::to_string(b.dim()));
    }
    const double na = a.norm();
    const double nb = b.norm();
    if (na <= 1e-12 || nb <= 1e-12) {
        throw DegenerateVectorError("cosine_similarity: zero-norm input");
    }
    const double c = dot(a.span(), b.span()) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

ProbabilityVector softmax(std::span<const double> scores, Temperature tau) {
    if (scores.empty()) {
        throw EmptyInputError("softmax: empty score vector");
    }
    const double inv_tau = 1.0 / tau.value();
    double max_scaled = scores[0] * inv_tau;
    for (double s : scores) {
        if (!std::isfinite(s)) {
            throw DataError("softmax: non-finite score");
        }
        max_scaled = std::max(max_scaled, s * inv_tau);
    }
    std::vector<double> exps(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        exps[i] = std::exp(scores[i] * inv_tau - max_scaled);
        sum += exps[i];
    }
    for (double& e : exps) {
        e /= sum;
    }
    return ProbabilityVector(std::move(exps));
}

FeatureVector normalize(const FeatureVector& a) {
    const double n = a.norm();
    if (n <= 1e-12) {
        throw DegenerateVectorError("normalize: norm " + std::to_string(n) + " <= 1e-12");
    }
    std::vector<double> out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) {
        out[i] = a[i] / n;
    }
    return FeatureVector(std::move(out));
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64_append_string(std::uint64_t h, const std::string& s) {
    const std::uint64_t len = s.size();
    unsigned char len_bytes[8];
    std::memcpy(len_bytes, &len, 8);
    h = fnv1a64(std::span<const unsigned char>(len_bytes, 8), h);
    return fnv1a64(std::span<const unsigned char>(
                       reinterpret_cast<const unsigned char*>(s.data()), s.size()),
                   h);
}

std::uint64_t fnv1a64_append_doubles(std::uint64_t h, std::span<const double> values) {
    for (double v : values) {
        unsigned char bytes[8];
        std::memcpy(bytes, &v, 8);
        h = fnv1a64(std::span<const unsigned char>(bytes, 8), h);
    }
    return h;
}

}  // namespace adk
