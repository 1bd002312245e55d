#include "adk/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace adk {

namespace {

void check_aligned(const KnowledgeBank& kb, const DescriptorBank& bank) {
    if (kb.num_classes() != bank.num_classes()) {
        throw SchemaError("knowledge bank has " + std::to_string(kb.num_classes()) +
                          " classes, descriptor bank has " + std::to_string(bank.num_classes()));
    }
    if (kb.dim() != bank.dim()) {
        throw SchemaError("knowledge bank dim " + std::to_string(kb.dim()) +
                          " != descriptor bank dim " + std::to_string(bank.dim()));
    }
    for (std::size_t c = 0; c < kb.num_classes(); ++c) {
        if (kb.class_names()[c] != bank.class_names()[c]) {
            throw SchemaError("class " + std::to_string(c) + " named '" + kb.class_names()[c] +
                              "' in knowledge bank but '" + bank.class_names()[c] +
                              "' in descriptor bank");
        }
    }
}

double head_loss(double p, bool& clamped) {
    if (p <= 0.0) {
        clamped = true;
        p = 1e-300;
    }
    return -std::log(p);
}

}  // namespace

ProbabilityVector head_probabilities(const FeatureVector& v,
                                     const std::vector<FeatureVector>& class_vectors,
                                     Temperature tau) {
    if (class_vectors.empty()) {
        throw EmptyInputError("head_probabilities: no class vectors");
    }
    std::vector<double> scores(class_vectors.size());
    for (std::size_t n = 0; n < class_vectors.size(); ++n) {
        scores[n] = cosine_similarity(v, class_vectors[n]);
    }
    return softmax(scores, tau);
}

PredictionRecord fuse_heads(ProbabilityVector hand, ProbabilityVector comp,
                            ProbabilityVector inst) {
    const std::size_t n = hand.size();
    if (comp.size() != n || inst.size() != n) {
        throw SchemaError("head distributions disagree on class count");
    }
    std::vector<double> desc(n);
    std::vector<double> fused(n);
    for (std::size_t i = 0; i < n; ++i) {
        desc[i] = 0.5 * (comp[i] + inst[i]);
        fused[i] = hand[i] + desc[i];
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (fused[i] > fused[best]) {
            best = i;
        }
    }
    PredictionRecord rec{std::move(hand), std::move(comp), std::move(inst),
                         ProbabilityVector(std::move(desc)), std::move(fused), best};
    return rec;
}

PredictionRecord classify(const FeatureVector& v, const KnowledgeBank& kb,
                          const DescriptorBank& bank) {
    check_aligned(kb, bank);
    if (v.dim() != kb.dim()) {
        throw DimensionError("image dim " + std::to_string(v.dim()) + " != bank dim " +
                             std::to_string(kb.dim()));
    }
    ProbabilityVector p_hand = head_probabilities(v, kb.hand(), bank.tau());
    ProbabilityVector p_comp = head_probabilities(v, kb.comp(), bank.tau());
    InstanceKnowledge inst = build_instance_knowledge(v, bank);
    ProbabilityVector p_inst = head_probabilities(v, inst.vectors, bank.tau());
    return fuse_heads(std::move(p_hand), std::move(p_comp), std::move(p_inst));
}

LossBreakdown loss(const PredictionRecord& record, std::size_t label) {
    if (label >= record.p_hand.size()) {
        throw IndexError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(record.p_hand.size()) + " classes");
    }
    LossBreakdown out;
    out.hand = head_loss(record.p_hand[label], out.clamped);
    out.comp = head_loss(record.p_comp[label], out.clamped);
    out.inst = head_loss(record.p_inst[label], out.clamped);
    out.total = out.hand + out.comp + out.inst;
    return out;
}

FeatureVector grad_image(const FeatureVector& v, const KnowledgeBank& kb,
                         const DescriptorBank& bank, std::size_t label) {
    check_aligned(kb, bank);
    if (v.dim() != kb.dim()) {
        throw DimensionError("image dim != bank dim");
    }
    const std::size_t num_classes = kb.num_classes();
    if (label >= num_classes) {
        throw IndexError("label " + std::to_string(label) + " out of range");
    }
    const std::size_t dim = v.dim();
    const double tau = bank.tau().value();
    const double v_norm = v.norm();
    if (v_norm <= 1e-12) {
        throw DegenerateVectorError("grad_image: zero-norm image vector");
    }
    std::vector<double> unit_v(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        unit_v[i] = v[i] / v_norm;
    }

    std::vector<double> grad(dim, 0.0);

    // For a head with fixed class vectors, d cos(v, c_n)/dv = (c_hat_n - s_n u)/|v|
    // and dL/dv = sum_n (p_n - [n==label]) / tau * d cos/dv.
    auto add_fixed_head = [&](const std::vector<FeatureVector>& class_vectors) {
        std::vector<double> scores(num_classes);
        std::vector<std::vector<double>> unit_cls(num_classes);
        for (std::size_t n = 0; n < num_classes; ++n) {
            const double cn = class_vectors[n].norm();
            if (cn <= 1e-12) {
                throw DegenerateVectorError("grad_image: zero-norm class vector");
            }
            unit_cls[n].resize(dim);
            for (std::size_t i = 0; i < dim; ++i) {
                unit_cls[n][i] = class_vectors[n][i] / cn;
            }
            scores[n] = std::clamp(dot(unit_v, unit_cls[n]), -1.0, 1.0);
        }
        const ProbabilityVector p = softmax(scores, bank.tau());
        for (std::size_t n = 0; n < num_classes; ++n) {
            const double coef = (p[n] - (n == label ? 1.0 : 0.0)) / tau / v_norm;
            for (std::size_t i = 0; i < dim; ++i) {
                grad[i] += coef * (unit_cls[n][i] - scores[n] * unit_v[i]);
            }
        }
    };

    add_fixed_head(kb.hand());
    add_fixed_head(kb.comp());

    // Instance head: z_n = cos(v, t_n(v)) / tau where t_n = sum_m W_nm d_nm and
    // W depends on v through the attention softmax. Two pieces per class:
    //   direct:  (t_hat_n - s_n u)/|v|
    //   chain:   sum_m b_m grad_v W_nm  with  b_m = (a_m - s_n <t_hat_n, d_m>)/|t_n|
    // where grad_v W_nm = W_nm/tau (grad a_m - sum_m' W_nm' grad a_m') and
    // grad a_m = (d_m - a_m u)/|v| for unit descriptors.
    const std::size_t m_count = bank.descriptors_per_class();
    std::vector<double> inst_scores(num_classes);
    std::vector<std::vector<double>> weights(num_classes);
    std::vector<std::vector<double>> t_hat(num_classes);
    std::vector<double> t_norms(num_classes);
    std::vector<std::vector<double>> cos_desc(num_classes);
    for (std::size_t n = 0; n < num_classes; ++n) {
        const auto& descs = bank.descriptors(n);
        std::vector<double> a(m_count);
        for (std::size_t m = 0; m < m_count; ++m) {
            a[m] = std::clamp(dot(unit_v, descs[m].span()), -1.0, 1.0);
        }
        weights[n] = softmax(a, bank.tau()).probs();
        KahanAccumulator acc(dim);
        for (std::size_t m = 0; m < m_count; ++m) {
            acc.add(descs[m].span(), weights[n][m]);
        }
        std::vector<double> t_n = acc.take_scaled(1.0);
        const double tn = l2_norm(t_n);
        if (tn <= 1e-12) {
            throw DegenerateVectorError("grad_image: degenerate instance vector for class " +
                                        bank.class_names()[n]);
        }
        for (double& x : t_n) {
            x /= tn;
        }
        inst_scores[n] = std::clamp(dot(unit_v, t_n), -1.0, 1.0);
        t_hat[n] = std::move(t_n);
        t_norms[n] = tn;
        cos_desc[n] = std::move(a);
    }
    const ProbabilityVector p_inst = softmax(inst_scores, bank.tau());

    std::vector<double> q(dim);
    std::vector<double> chain(dim);
    for (std::size_t n = 0; n < num_classes; ++n) {
        const double coef = (p_inst[n] - (n == label ? 1.0 : 0.0)) / tau;
        const auto& descs = bank.descriptors(n);
        const auto& w = weights[n];
        const double s_n = inst_scores[n];

        // direct part
        for (std::size_t i = 0; i < dim; ++i) {
            grad[i] += coef * (t_hat[n][i] - s_n * unit_v[i]) / v_norm;
        }

        // chain through the attention weights
        std::fill(q.begin(), q.end(), 0.0);
        std::vector<double> c(m_count);
        double c_sum = 0.0;
        for (std::size_t m = 0; m < m_count; ++m) {
            const double b_m =
                (cos_desc[n][m] - s_n * dot(t_hat[n], descs[m].span())) / t_norms[n];
            c[m] = b_m * w[m];
            c_sum += c[m];
            for (std::size_t i = 0; i < dim; ++i) {
                q[i] += w[m] * (descs[m][i] - cos_desc[n][m] * unit_v[i]) / v_norm;
            }
        }
        std::fill(chain.begin(), chain.end(), 0.0);
        for (std::size_t m = 0; m < m_count; ++m) {
            for (std::size_t i = 0; i < dim; ++i) {
                chain[i] += c[m] * (descs[m][i] - cos_desc[n][m] * unit_v[i]) / v_norm;
            }
        }
        for (std::size_t i = 0; i < dim; ++i) {
            grad[i] += coef / tau * (chain[i] - c_sum * q[i]);
        }
    }

    return FeatureVector(std::move(grad));
}

std::pair<KnowledgeBank, DescriptorBank> restrict_classes(
    const KnowledgeBank& kb, const DescriptorBank& bank,
    std::span<const std::size_t> class_subset) {
    check_aligned(kb, bank);
    if (class_subset.empty()) {
        throw SchemaError("class subset is empty");
    }
    std::unordered_set<std::size_t> seen;
    for (std::size_t idx : class_subset) {
        if (idx >= kb.num_classes()) {
            throw SchemaError("class subset index " + std::to_string(idx) + " out of range");
        }
        if (!seen.insert(idx).second) {
            throw SchemaError("class subset contains duplicate index " + std::to_string(idx));
        }
    }
    std::vector<std::string> names;
    std::vector<FeatureVector> hand;
    std::vector<FeatureVector> comp;
    std::vector<std::vector<std::string>> texts;
    std::vector<std::vector<FeatureVector>> feats;
    for (std::size_t idx : class_subset) {
        names.push_back(kb.class_names()[idx]);
        hand.push_back(kb.hand()[idx]);
        comp.push_back(kb.comp()[idx]);
        texts.push_back(bank.descriptions(idx));
        feats.push_back(bank.descriptors(idx));
    }
    DescriptorBank sub_bank(names, std::move(texts), std::move(feats), bank.tau());
    const std::uint64_t checksum = sub_bank.checksum();
    return {KnowledgeBank(std::move(names), std::move(hand), std::move(comp), checksum),
            std::move(sub_bank)};
}

PredictionRecord classify_subset(const FeatureVector& v, const KnowledgeBank& kb,
                                 const DescriptorBank& bank,
                                 std::span<const std::size_t> class_subset) {
    auto [sub_kb, sub_bank] = restrict_classes(kb, bank, class_subset);
    return classify(v, sub_kb, sub_bank);
}

}  // namespace adk
