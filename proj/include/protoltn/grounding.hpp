#pragma once

// Groundings of logical terms: variables with labels, the embedding function
// f_theta, the attribute-to-prototype encoder g_theta, prototype construction
// for the episodic and zero-shot regimes, and the isOfClass predicate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "protoltn/errors.hpp"
#include "protoltn/init.hpp"
#include "protoltn/logic.hpp"
#include "protoltn/tensor.hpp"

namespace protoltn {

enum class Domain { features, embeddings, labels, attributes };

// A logical variable grounded as rows of a tensor, optionally carrying a
// parallel label per row.
struct VariableGrounding {
    std::string name;
    Domain domain = Domain::features;
    Tensor values;                // [n x d]
    std::vector<Label> labels;    // empty, or one per row

    static VariableGrounding make(std::string name, Domain domain, Tensor values,
                                  std::vector<Label> labels = {}) {
        if (!values.defined() || values.rank() != 2)
            throw ContractError("VariableGrounding: values must be a rank-2 tensor");
        if (!labels.empty() && labels.size() != values.shape()[0])
            throw ContractError("VariableGrounding: labels must align with rows");
        return {std::move(name), domain, std::move(values), std::move(labels)};
    }

    std::size_t rows() const { return values.shape()[0]; }
};

// Class prototypes in embedding space with their (distinct, ascending) labels.
struct PrototypeSet {
    Tensor prototypes;          // [K' x M]
    std::vector<Label> labels;  // strictly increasing
};

inline void validate_prototype_set(const PrototypeSet& ps) {
    if (!ps.prototypes.defined() || ps.prototypes.rank() != 2)
        throw ContractError("PrototypeSet: prototypes must be a rank-2 tensor");
    if (ps.labels.size() != ps.prototypes.shape()[0])
        throw ContractError("PrototypeSet: one label per prototype row required");
    for (std::size_t i = 1; i < ps.labels.size(); ++i)
        if (ps.labels[i] <= ps.labels[i - 1])
            throw ContractError("PrototypeSet: labels must be strictly ascending");
    for (double v : ps.prototypes.data())
        if (!std::isfinite(v)) throw ContractError("PrototypeSet: non-finite prototype entry");
}

// ---------------------------------------------------------------------------
// Label utilities
// ---------------------------------------------------------------------------

inline std::vector<Label> unique_labels(const std::vector<Label>& labels) {
    if (labels.empty()) throw ContractError("unique_labels: empty input");
    std::vector<Label> out(labels);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// L[i][j] = 1 iff supportLabels[j] == protoLabels[i].  Every column sums to
// exactly one (each support item belongs to exactly one prototype class).
inline Tensor build_label_matrix(const std::vector<Label>& support_labels,
                                 const std::vector<Label>& proto_labels) {
    if (support_labels.empty() || proto_labels.empty())
        throw ContractError("build_label_matrix: empty label sequence");
    std::vector<double> data(proto_labels.size() * support_labels.size(), 0.0);
    for (std::size_t j = 0; j < support_labels.size(); ++j) {
        bool found = false;
        for (std::size_t i = 0; i < proto_labels.size(); ++i) {
            if (support_labels[j] == proto_labels[i]) {
                data[i * support_labels.size() + j] = 1.0;
                found = true;
            }
        }
        if (!found)
            throw MissingPrototypeError("support label " + std::to_string(support_labels[j]) +
                                        " has no prototype class");
    }
    return Tensor::constant({proto_labels.size(), support_labels.size()}, std::move(data));
}

// ---------------------------------------------------------------------------
// Embedding function f_theta
// ---------------------------------------------------------------------------

// In the zero-shot regime the backbone features are the embedding space, so
// f_theta is the identity; in the episodic regime it is a dense layer
// initialized at the identity so training starts from the raw feature metric.
class EmbeddingNet {
public:
    static EmbeddingNet identity() { return EmbeddingNet(); }

    static EmbeddingNet linear(Tape& tape, std::size_t dim) {
        EmbeddingNet net;
        net.identity_ = false;
        std::vector<double> eye(dim * dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i) eye[i * dim + i] = 1.0;
        net.weight_ = {"f.w", tape.leaf({dim, dim}, std::move(eye)), true};
        net.bias_ = {"f.b", tape.leaf({dim}, std::vector<double>(dim, 0.0)), false};
        return net;
    }

    bool is_identity() const { return identity_; }

    Tensor forward(const Tensor& x) const {
        if (identity_) return x;
        if (x.rank() != 2 || x.shape()[1] != weight_.value.shape()[0])
            throw DimensionError("EmbeddingNet: input width does not match weights");
        return add(matmul(x, weight_.value), bias_.value);
    }

    std::vector<Parameter> parameters() const {
        if (identity_) return {};
        return {weight_, bias_};
    }

private:
    bool identity_ = true;
    Parameter weight_;
    Parameter bias_;
};

// Row-wise application of f_theta to a features grounding.
inline VariableGrounding get_embedding(const VariableGrounding& q, const EmbeddingNet& f) {
    if (q.domain != Domain::features)
        throw ContractError("get_embedding: expected a features grounding, got another domain");
    return VariableGrounding{q.name + "_e", Domain::embeddings, f.forward(q.values), q.labels};
}

// ---------------------------------------------------------------------------
// Semantic encoder g_theta
// ---------------------------------------------------------------------------

// Two fully connected layers with a rectifier after each, mapping class
// attribute vectors into the embedding space.  Weights start from a
// truncated normal draw; biases start at zero and carry no weight decay.
class SemanticEncoder {
public:
    SemanticEncoder(Tape& tape, std::size_t attr_dim, std::size_t hidden_dim,
                    std::size_t out_dim, double init_stddev, std::uint64_t seed)
        : attr_dim_(attr_dim), hidden_dim_(hidden_dim), out_dim_(out_dim) {
        if (attr_dim == 0 || hidden_dim == 0 || out_dim == 0)
            throw ContractError("SemanticEncoder: all dimensions must be positive");
        std::mt19937_64 rng(seed);
        w1_ = {"g.w1", tape.leaf({attr_dim, hidden_dim},
                                 truncated_normal(attr_dim * hidden_dim, init_stddev, rng)),
               true};
        b1_ = {"g.b1", tape.leaf({hidden_dim}, std::vector<double>(hidden_dim, 0.0)), false};
        w2_ = {"g.w2", tape.leaf({hidden_dim, out_dim},
                                 truncated_normal(hidden_dim * out_dim, init_stddev, rng)),
               true};
        b2_ = {"g.b2", tape.leaf({out_dim}, std::vector<double>(out_dim, 0.0)), false};
    }

    std::size_t attr_dim() const { return attr_dim_; }
    std::size_t hidden_dim() const { return hidden_dim_; }
    std::size_t out_dim() const { return out_dim_; }

    Tensor forward(const Tensor& attrs) const {
        check_input(attrs);
        Tensor h = relu(add(matmul(attrs, w1_.value), b1_.value));
        return relu(add(matmul(h, w2_.value), b2_.value));
    }

    // Same computation on detached parameter copies: records nothing, for
    // evaluation outside the training tape.
    Tensor forward_nograd(const Tensor& attrs) const {
        check_input(attrs);
        Tensor h = relu(add(matmul(detach(attrs), detach(w1_.value)), detach(b1_.value)));
        return relu(add(matmul(h, detach(w2_.value)), detach(b2_.value)));
    }

    std::vector<Parameter> parameters() const { return {w1_, b1_, w2_, b2_}; }

private:
    void check_input(const Tensor& attrs) const {
        if (attrs.rank() != 2 || attrs.shape()[1] != attr_dim_)
            throw DimensionError("SemanticEncoder: expected [n x " + std::to_string(attr_dim_) +
                                 "] attributes");
    }

    std::size_t attr_dim_, hidden_dim_, out_dim_;
    Parameter w1_, b1_, w2_, b2_;
};

// ---------------------------------------------------------------------------
// Prototype construction
// ---------------------------------------------------------------------------

// Episodic prototypes: per unique support class, the mean of that class's
// support embeddings.  Equivalent to Diag(L*1)^-1 * L * f_theta(x) but
// accumulated in sorted order per class so the result is bit-identical under
// any permutation of the support rows.  Supports may be unbalanced.
inline PrototypeSet get_prototypes_fsl(const VariableGrounding& support, const EmbeddingNet& f) {
    if (support.domain != Domain::features)
        throw ContractError("get_prototypes_fsl: expected a features grounding");
    if (support.labels.empty())
        throw ContractError("get_prototypes_fsl: support grounding carries no labels");
    Tensor embedded = f.forward(support.values);
    std::vector<Label> classes = unique_labels(support.labels);
    std::vector<std::vector<std::size_t>> groups(classes.size());
    for (std::size_t row = 0; row < support.labels.size(); ++row) {
        const auto it = std::lower_bound(classes.begin(), classes.end(), support.labels[row]);
        groups[static_cast<std::size_t>(it - classes.begin())].push_back(row);
    }
    return PrototypeSet{group_mean_rows(embedded, groups), std::move(classes)};
}

// Zero-shot prototypes: the image of each class attribute vector under
// g_theta, ordered by ascending class label.
inline PrototypeSet get_prototypes_zsl(const Tensor& attributes,
                                       const std::vector<Label>& class_labels,
                                       const SemanticEncoder& g, bool with_grad = true) {
    if (attributes.rank() != 2)
        throw DimensionError("get_prototypes_zsl: attributes must be rank 2");
    if (class_labels.size() != attributes.shape()[0])
        throw ContractError("get_prototypes_zsl: one label per attribute row required");
    std::set<Label> distinct(class_labels.begin(), class_labels.end());
    if (distinct.size() != class_labels.size())
        throw ContractError("get_prototypes_zsl: duplicate class labels");

    std::vector<std::size_t> order(class_labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return class_labels[a] < class_labels[b]; });

    std::vector<Label> sorted_labels(order.size());
    const std::size_t a_dim = attributes.shape()[1];
    std::vector<double> sorted_attrs(order.size() * a_dim);
    for (std::size_t i = 0; i < order.size(); ++i) {
        sorted_labels[i] = class_labels[order[i]];
        for (std::size_t j = 0; j < a_dim; ++j)
            sorted_attrs[i * a_dim + j] = attributes.data()[order[i] * a_dim + j];
    }
    Tensor att = Tensor::constant({order.size(), a_dim}, std::move(sorted_attrs));
    Tensor protos = with_grad ? g.forward(att) : g.forward_nograd(att);
    return PrototypeSet{protos, std::move(sorted_labels)};
}

// ---------------------------------------------------------------------------
// The isOfClass predicate
// ---------------------------------------------------------------------------

// Truth matrix [n x K']: entry (i,j) = exp(-alpha * d^2(qe_i, proto_j)),
// which is 1 exactly when the query sits on the prototype and decays with
// squared Euclidean distance.
inline Tensor is_of_class(const Tensor& qe, const PrototypeSet& protos, double alpha) {
    if (alpha <= 0.0) throw ContractError("is_of_class: alpha must be positive");
    if (qe.rank() != 2 || qe.shape()[1] != protos.prototypes.shape()[1])
        throw DimensionError("is_of_class: query and prototype widths differ");
    return protoltn::exp(scale(pairwise_sqdist(qe, protos.prototypes), -alpha));
}

// Learnable alternative predicate: a small MLP with sigmoid output applied to
// the concatenation of query and prototype.  Off by default; the exponential
// predicate above is used everywhere unless explicitly configured.
class RelationMlp {
public:
    RelationMlp(Tape& tape, std::size_t emb_dim, std::size_t hidden_dim, double init_stddev,
                std::uint64_t seed)
        : emb_dim_(emb_dim) {
        if (emb_dim == 0 || hidden_dim == 0)
            throw ContractError("RelationMlp: dimensions must be positive");
        std::mt19937_64 rng(seed);
        const std::size_t in_dim = 2 * emb_dim;
        w1_ = {"r.w1", tape.leaf({in_dim, hidden_dim},
                                 truncated_normal(in_dim * hidden_dim, init_stddev, rng)),
               true};
        b1_ = {"r.b1", tape.leaf({hidden_dim}, std::vector<double>(hidden_dim, 0.0)), false};
        w2_ = {"r.w2", tape.leaf({hidden_dim, 1}, truncated_normal(hidden_dim, init_stddev, rng)),
               true};
        b2_ = {"r.b2", tape.leaf({1}, std::vector<double>(1, 0.0)), false};
    }

    std::size_t emb_dim() const { return emb_dim_; }

    // pairs: [P x 2M] -> [P x 1] in (0,1).
    Tensor forward(const Tensor& pairs) const {
        if (pairs.rank() != 2 || pairs.shape()[1] != 2 * emb_dim_)
            throw DimensionError("RelationMlp: expected concatenated pairs of width 2M");
        Tensor h = relu(add(matmul(pairs, w1_.value), b1_.value));
        return sigmoid(add(matmul(h, w2_.value), b2_.value));
    }

    std::vector<Parameter> parameters() const { return {w1_, b1_, w2_, b2_}; }

private:
    std::size_t emb_dim_;
    Parameter w1_, b1_, w2_, b2_;
};

inline Tensor is_of_class_parametric(const Tensor& qe, const PrototypeSet& protos,
                                     const RelationMlp& mlp) {
    if (qe.rank() != 2 || qe.shape()[1] != protos.prototypes.shape()[1])
        throw DimensionError("is_of_class_parametric: query and prototype widths differ");
    if (qe.shape()[1] != mlp.emb_dim())
        throw DimensionError("is_of_class_parametric: embedding width does not match the MLP");
    const std::size_t n = qe.shape()[0], k = protos.prototypes.shape()[0];
    std::vector<std::size_t> qi(n * k), pj(n * k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            qi[i * k + j] = i;
            pj[i * k + j] = j;
        }
    Tensor pairs = hconcat(gather_rows(qe, qi), gather_rows(protos.prototypes, pj));
    return reshape(mlp.forward(pairs), {n, k});
}

}  // namespace protoltn
