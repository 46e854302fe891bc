#pragma once

// The knowledge base {phi_aff, phi_neg}, the episode loss derived from its
// satisfiability, and the regularized objective.

#include <vector>

#include "protoltn/errors.hpp"
#include "protoltn/grounding.hpp"
#include "protoltn/logic.hpp"
#include "protoltn/tensor.hpp"

namespace protoltn {

struct KbConfig {
    double alpha = 1e-5;
    double w_neg = 0.0;      // weight of the negative-formula term in the loss
    double p_agg = 1.0;      // loss aggregation exponent
    double p_forall = 2.0;   // universal-quantifier exponent
    double truth_eps = 1e-12;  // clamp floor for predicate truths
};

// "Every query is an instance of its own class": aggregate isOfClass over the
// label-matched (query, prototype) pairs with the product p-mean.
inline Truth phi_aff(const Tensor& qe, const std::vector<Label>& q_labels,
                     const PrototypeSet& protos, double alpha, double p_forall,
                     double eps = 1e-12) {
    return forall_diag_guarded(
        qe, q_labels, protos.prototypes, protos.labels, Guard::equal,
        [&](const Tensor& q, const Tensor&) {
            return is_of_class(q, protos, alpha);
        },
        Aggregator::product_pmean, p_forall, eps);
}

// "No query is an instance of a different class": aggregate the negation of
// isOfClass over all label-mismatched pairs with the generalized mean.
inline Truth phi_neg(const Tensor& qe, const std::vector<Label>& q_labels,
                     const PrototypeSet& protos, double alpha, double p_forall,
                     double eps = 1e-12) {
    return forall_diag_guarded(
        qe, q_labels, protos.prototypes, protos.labels, Guard::not_equal,
        [&](const Tensor& q, const Tensor&) {
            return add_scalar(neg(is_of_class(q, protos, alpha)), 1.0);
        },
        Aggregator::generalized_mean, p_forall, eps);
}

struct KnowledgeBase {
    Truth aff;
    Truth neg;        // undefined when the episode has no mismatched pair
    bool has_neg = false;
    double w_neg = 0.0;
    double p_agg = 1.0;
    double p_forall = 2.0;
};

inline KnowledgeBase build_kb(const Tensor& qe, const std::vector<Label>& q_labels,
                              const PrototypeSet& protos, const KbConfig& cfg) {
    if (cfg.w_neg < 0.0) throw ContractError("build_kb: w_neg must be non-negative");
    if (cfg.p_agg < 1.0) throw ContractError("build_kb: p_agg must be >= 1");
    KnowledgeBase kb;
    kb.w_neg = cfg.w_neg;
    kb.p_agg = cfg.p_agg;
    kb.p_forall = cfg.p_forall;
    kb.aff = phi_aff(qe, q_labels, protos, cfg.alpha, cfg.p_forall, cfg.truth_eps);
    // A single-class episode has no mismatched pair and no negative formula.
    bool any_mismatch = false;
    for (Label ql : q_labels)
        for (Label pl : protos.labels)
            if (ql != pl) any_mismatch = true;
    if (any_mismatch) {
        kb.neg = phi_neg(qe, q_labels, protos, cfg.alpha, cfg.p_forall, cfg.truth_eps);
        kb.has_neg = true;
    }
    return kb;
}

// L = ((-log phi_aff)^(1/p_agg) + (w_n * (1 - phi_neg))^(1/p_agg))^(p_agg).
// At w_n = 0 the negative term drops from the graph entirely and the loss is
// exactly -log phi_aff.  phi_aff is floored at 1e-300 before the log purely
// as an overflow guard; the aggregator's own clamp keeps it far above that
// for any realistic episode.
inline Tensor episode_loss(const KnowledgeBase& kb) {
    Tensor aff_term = neg(protoltn::log(clamp(kb.aff.value, 1e-300, 1.0)));
    if (kb.w_neg == 0.0) return aff_term;
    if (!kb.has_neg)
        throw ContractError("episode_loss: w_neg > 0 but the episode has no mismatched pair");
    Tensor neg_term = scale(fuzzy_not(kb.neg).value, kb.w_neg);
    Tensor blended = add(pow_scalar(aff_term, 1.0 / kb.p_agg),
                         pow_scalar(neg_term, 1.0 / kb.p_agg));
    return pow_scalar(blended, kb.p_agg);
}

// loss + lambda * sum of squared parameter norms, over the parameters that
// opt into weight decay.  The minimization form of best satisfiability.
inline Tensor best_sat_objective(const Tensor& loss, const std::vector<Parameter>& params,
                                 double lambda) {
    if (lambda < 0.0) throw ContractError("best_sat_objective: lambda must be non-negative");
    if (loss.size() != 1) throw ContractError("best_sat_objective: loss must be scalar");
    Tensor objective = loss;
    if (lambda == 0.0) return objective;
    for (const Parameter& p : params) {
        if (!p.weight_decay) continue;
        objective = add(objective, scale(sum(mul(p.value, p.value)), lambda));
    }
    return objective;
}

}  // namespace protoltn
