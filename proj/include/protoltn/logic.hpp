#pragma once

// Differentiable fuzzy-logic operators over truth values in [0,1]:
// standard negation, two universal-quantifier aggregators, and guarded
// diagonal quantification over (query, prototype) pairs.

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "protoltn/errors.hpp"
#include "protoltn/tensor.hpp"

namespace protoltn {

using Label = std::int64_t;

// A formula's degree of truth: scalar tensor, in [0,1] whenever the
// constituent predicates are.
struct Truth {
    Tensor value;
    double item() const { return value.item(); }
};

inline Truth fuzzy_not(const Truth& t) {
    if (t.value.size() != 1) throw ContractError("fuzzy_not: truth value must be scalar");
    return {add_scalar(neg(t.value), 1.0)};
}

enum class Aggregator { product_pmean, generalized_mean };

namespace detail {

// All-equal inputs hit closed-form fast paths below so that the algebraic
// identities A_pM(t,...,t) = t and A_pPR(t,...,t) = t^(n/p) hold bitwise,
// not merely to rounding.  The registered gradients are the analytic
// derivatives at the all-equal point, so training behaviour is unchanged.
inline bool all_equal(std::span<const double> v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] != v[0]) return false;
    return true;
}

inline Tensor uniform_grad_scalar(const Tensor& input, double value, double per_input_grad) {
    Tape* tape = OpBuilder::common_tape("aggregate", {&input});
    Tensor out = Tensor::constant({}, {value});
    if (tape == nullptr) return out;
    OpBuilder::mark_output(out, tape);
    Record rec;
    rec.inputs = {OpBuilder::impl(input)};
    rec.output = OpBuilder::impl(out);
    rec.backprop = [in = rec.inputs[0], out_impl = rec.output, per_input_grad] {
        if (!in->requires_grad) return;
        const double g = out_impl->grad[0] * per_input_grad;
        for (auto& gi : in->grad) gi += g;
    };
    OpBuilder::push(tape, std::move(rec));
    return out;
}

}  // namespace detail

// (prod tau_i)^(1/p).  Inputs are clamped to [eps, 1] first and the product
// is evaluated in log-space for stability.
inline Truth aggregate_product_pmean(const Tensor& values, double p_forall, double eps = 1e-12) {
    if (!values.defined() || values.size() == 0)
        throw ContractError("aggregate_product_pmean: empty input");
    if (values.rank() > 1)
        throw DimensionError("aggregate_product_pmean: input must be rank 0 or 1");
    if (p_forall < 1.0) throw ContractError("aggregate_product_pmean: p_forall must be >= 1");
    Tensor clamped = clamp(values, eps, 1.0);
    const std::size_t n = clamped.size();
    if (detail::all_equal(clamped.data())) {
        const double tau = clamped.data()[0];
        const double e = static_cast<double>(n) / p_forall;
        const double fwd = std::pow(tau, e);
        const double grad = tau == 0.0 ? 0.0 : (1.0 / p_forall) * std::pow(tau, e - 1.0);
        return {detail::uniform_grad_scalar(clamped, fwd, grad)};
    }
    return {protoltn::exp(scale(sum(protoltn::log(clamped)), 1.0 / p_forall))};
}

// ((1/n) sum tau_i^p)^(1/p).
inline Truth aggregate_generalized_mean(const Tensor& values, double p_forall) {
    if (!values.defined() || values.size() == 0)
        throw ContractError("aggregate_generalized_mean: empty input");
    if (values.rank() > 1)
        throw DimensionError("aggregate_generalized_mean: input must be rank 0 or 1");
    if (p_forall < 1.0) throw ContractError("aggregate_generalized_mean: p_forall must be >= 1");
    if (detail::all_equal(values.data())) {
        const double tau = values.data()[0];
        const double grad = 1.0 / static_cast<double>(values.size());
        return {detail::uniform_grad_scalar(values, tau, grad)};
    }
    return {pow_scalar(mean(pow_scalar(values, p_forall)), 1.0 / p_forall)};
}

inline Truth aggregate(const Tensor& values, Aggregator agg, double p_forall, double eps = 1e-12) {
    return agg == Aggregator::product_pmean ? aggregate_product_pmean(values, p_forall, eps)
                                            : aggregate_generalized_mean(values, p_forall);
}

// ---------------------------------------------------------------------------
// Guarded diagonal quantification
// ---------------------------------------------------------------------------

enum class Guard { equal, not_equal };

// The (query row, prototype row) pairs surviving a label guard, in row-major
// (query-major) order.  `flat` carries i*num_protos + j for tensor indexing.
struct GuardedPairs {
    Guard guard = Guard::equal;
    std::size_t num_protos = 0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> flat;
};

// Zips each query against each prototype row and keeps the pairs whose labels
// satisfy the guard.  Under `equal`, prototype labels are unique, so exactly
// one pair per query survives; a query labelled with a class that has no
// prototype is an error.
inline GuardedPairs select_guarded_pairs(const std::vector<Label>& query_labels,
                                         const std::vector<Label>& proto_labels, Guard guard) {
    for (std::size_t a = 0; a < proto_labels.size(); ++a)
        for (std::size_t b = a + 1; b < proto_labels.size(); ++b)
            if (proto_labels[a] == proto_labels[b])
                throw ContractError("select_guarded_pairs: duplicate prototype label " +
                                    std::to_string(proto_labels[a]));
    GuardedPairs gp;
    gp.guard = guard;
    gp.num_protos = proto_labels.size();
    for (std::size_t i = 0; i < query_labels.size(); ++i) {
        bool matched = false;
        for (std::size_t j = 0; j < proto_labels.size(); ++j) {
            const bool same = query_labels[i] == proto_labels[j];
            if (same) matched = true;
            if ((guard == Guard::equal) == same) {
                gp.pairs.emplace_back(i, j);
                gp.flat.push_back(i * proto_labels.size() + j);
            }
        }
        if (guard == Guard::equal && !matched)
            throw MissingPrototypeError("no prototype for query label " +
                                        std::to_string(query_labels[i]));
    }
    return gp;
}

// Universal quantifier over guard-selected pairs: evaluates the pairwise
// predicate on the full query x prototype matrix, selects the guarded
// entries, and aggregates.  `predicate` maps (queries [n x d], protos
// [k x d]) to a truth matrix [n x k].
template <typename Pred>
Truth forall_diag_guarded(const Tensor& queries, const std::vector<Label>& query_labels,
                          const Tensor& protos, const std::vector<Label>& proto_labels,
                          Guard guard, Pred&& predicate, Aggregator agg, double p_forall,
                          double eps = 1e-12) {
    if (queries.rank() != 2 || protos.rank() != 2)
        throw DimensionError("forall_diag_guarded: queries and prototypes must be rank 2");
    if (query_labels.size() != queries.shape()[0])
        throw DimensionError("forall_diag_guarded: one label per query row required");
    if (proto_labels.size() != protos.shape()[0])
        throw DimensionError("forall_diag_guarded: one label per prototype row required");
    GuardedPairs gp = select_guarded_pairs(query_labels, proto_labels, guard);
    if (gp.pairs.empty())
        throw ContractError("forall_diag_guarded: guard selected no pairs");
    Tensor truth_matrix = predicate(queries, protos);
    if (truth_matrix.rank() != 2 || truth_matrix.shape()[0] != queries.shape()[0] ||
        truth_matrix.shape()[1] != protos.shape()[0])
        throw DimensionError("forall_diag_guarded: predicate must return a query x prototype matrix");
    Tensor selected = take(truth_matrix, gp.flat);
    return aggregate(selected, agg, p_forall, eps);
}

}  // namespace protoltn
