#pragma once

// Nearest-prototype prediction and the zero-shot / generalized zero-shot
// evaluation metrics (per-class top-1 accuracies and their harmonic mean).

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "protoltn/dataset.hpp"
#include "protoltn/errors.hpp"
#include "protoltn/grounding.hpp"
#include "protoltn/tensor.hpp"

namespace protoltn {

// Label of the prototype with maximal isOfClass truth — equivalently minimal
// squared distance, for any positive alpha.  Ties resolve to the smallest
// label (prototype labels are ascending, strict comparison keeps the first).
inline std::vector<Label> predict(const Tensor& qe, const PrototypeSet& protos, double alpha) {
    if (alpha <= 0.0) throw ContractError("predict: alpha must be positive");
    validate_prototype_set(protos);
    if (qe.rank() != 2 || qe.shape()[1] != protos.prototypes.shape()[1])
        throw DimensionError("predict: query and prototype widths differ");
    const std::size_t n = qe.shape()[0], k = protos.prototypes.shape()[0],
                      m = qe.shape()[1];
    std::vector<Label> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < k; ++j) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < m; ++d) {
                const double diff = qe.data()[i * m + d] - protos.prototypes.data()[j * m + d];
                d2 += diff * diff;
            }
            if (d2 < best) {
                best = d2;
                best_j = j;
            }
        }
        out[i] = protos.labels[best_j];
    }
    return out;
}

// Mean over the classes of `class_set` of that class's top-1 accuracy;
// classes without test instances are left out of the mean.
inline double per_class_top1(const std::vector<Label>& pred, const std::vector<Label>& truth,
                             const std::vector<Label>& class_set) {
    if (pred.size() != truth.size())
        throw ContractError("per_class_top1: prediction/truth length mismatch");
    if (class_set.empty()) throw ContractError("per_class_top1: empty class set");
    std::map<Label, std::pair<std::size_t, std::size_t>> counts;  // label -> (correct, total)
    for (Label c : class_set) counts[c];
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto it = counts.find(truth[i]);
        if (it == counts.end()) continue;  // instance outside the evaluated class set
        it->second.second += 1;
        if (pred[i] == truth[i]) it->second.first += 1;
    }
    double acc_sum = 0.0;
    std::size_t populated = 0;
    for (const auto& [label, cnt] : counts) {
        if (cnt.second == 0) continue;
        acc_sum += static_cast<double>(cnt.first) / static_cast<double>(cnt.second);
        ++populated;
    }
    if (populated == 0) throw ContractError("per_class_top1: no class has test instances");
    return acc_sum / static_cast<double>(populated);
}

inline double harmonic_mean(double u, double s) {
    if (u + s == 0.0) return 0.0;
    return 2.0 * u * s / (u + s);
}

struct GzslReport {
    double t1 = 0.0;  // unseen instances, unseen prototypes only
    double u = 0.0;   // unseen instances, all prototypes
    double s = 0.0;   // seen test instances, all prototypes
    double h = 0.0;   // harmonic mean of u and s
    // Per-class accuracy under the full-prototype search, keyed by original
    // label (unseen classes from the U pass, seen classes from the S pass).
    std::map<Label, double> per_class;
};

// Full evaluation protocol: prototypes come from the trained encoder applied
// to the class attributes; queries are the raw test features (the embedding
// is the identity in this regime).
inline GzslReport gzsl_evaluate(const SplitDataset& ds, const SemanticEncoder& encoder,
                                double alpha) {
    if (ds.test_unseen_idx.empty())
        throw ContractError("gzsl_evaluate: dataset has no unseen test split");
    if (ds.test_seen_idx.empty())
        throw ContractError("gzsl_evaluate: dataset has no seen test split");

    std::vector<Label> all_classes(ds.num_classes());
    for (std::size_t c = 0; c < all_classes.size(); ++c) all_classes[c] = static_cast<Label>(c);
    PrototypeSet all_protos =
        get_prototypes_zsl(ds.class_attributes, all_classes, encoder, /*with_grad=*/false);

    std::vector<std::size_t> unseen_rows(ds.unseen_classes.begin(), ds.unseen_classes.end());
    Tensor unseen_attrs = gather_rows(ds.class_attributes, unseen_rows);
    PrototypeSet unseen_protos =
        get_prototypes_zsl(unseen_attrs, ds.unseen_classes, encoder, /*with_grad=*/false);

    auto slice = [&](const std::vector<std::size_t>& idx) {
        return gather_rows(ds.features, idx);
    };
    auto labels_of = [&](const std::vector<std::size_t>& idx) {
        std::vector<Label> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(ds.instance_labels[i]);
        return out;
    };

    const Tensor unseen_q = slice(ds.test_unseen_idx);
    const Tensor seen_q = slice(ds.test_seen_idx);
    const std::vector<Label> unseen_truth = labels_of(ds.test_unseen_idx);
    const std::vector<Label> seen_truth = labels_of(ds.test_seen_idx);

    const std::vector<Label> pred_t1 = predict(unseen_q, unseen_protos, alpha);
    const std::vector<Label> pred_u = predict(unseen_q, all_protos, alpha);
    const std::vector<Label> pred_s = predict(seen_q, all_protos, alpha);

    GzslReport report;
    report.t1 = per_class_top1(pred_t1, unseen_truth, ds.unseen_classes);
    report.u = per_class_top1(pred_u, unseen_truth, ds.unseen_classes);
    report.s = per_class_top1(pred_s, seen_truth, ds.seen_classes);
    report.h = harmonic_mean(report.u, report.s);

    // Restricting the search to the true subset cannot hurt unseen accuracy.
    if (report.t1 + 1e-12 < report.u)
        throw ContractError("gzsl_evaluate: T1 < U, nearest-prototype invariant violated");

    auto fill_per_class = [&](const std::vector<Label>& pred, const std::vector<Label>& truth,
                              const std::vector<Label>& classes) {
        for (Label c : classes) {
            std::size_t correct = 0, total = 0;
            for (std::size_t i = 0; i < truth.size(); ++i) {
                if (truth[i] != c) continue;
                ++total;
                if (pred[i] == c) ++correct;
            }
            if (total > 0)
                report.per_class[ds.original_labels[static_cast<std::size_t>(c)]] =
                    static_cast<double>(correct) / static_cast<double>(total);
        }
    };
    fill_per_class(pred_u, unseen_truth, ds.unseen_classes);
    fill_per_class(pred_s, seen_truth, ds.seen_classes);
    return report;
}

}  // namespace protoltn
