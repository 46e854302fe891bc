#pragma once

// The standing finite-difference suite: every differentiable op plus the
// composite episode loss in all three flavours (fixed prototypes, prototypes
// from the attribute encoder, prototypes from support means).  Used by the
// `gradcheck` command and by the acceptance gate.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "protoltn/gradcheck.hpp"
#include "protoltn/grounding.hpp"
#include "protoltn/kb.hpp"
#include "protoltn/logic.hpp"
#include "protoltn/tensor.hpp"

namespace protoltn {

struct GradCheckEntry {
    std::string name;
    double err = 0.0;
};

namespace detail {

inline std::vector<double> rand_vec(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> out(n);
    for (auto& v : out) v = dist(rng);
    return out;
}

inline Tensor rand_tensor(Shape s, std::mt19937_64& rng, double lo, double hi) {
    std::size_t n = detail::numel(s);
    return Tensor::constant(std::move(s), rand_vec(n, rng, lo, hi));
}

// Loss of one episode against a fixed prototype matrix, as a function of the
// query embeddings.
struct FixedProtoEpisode {
    Tensor protos;
    std::vector<Label> proto_labels;
    std::vector<Label> q_labels;
    KbConfig cfg;

    Tensor operator()(const Tensor& qe) const {
        PrototypeSet ps{protos, proto_labels};
        return episode_loss(build_kb(qe, q_labels, ps, cfg));
    }
};

// Loss of a zero-shot episode as a function of one encoder parameter; the
// other three stay constant.  All attribute/weight/bias values are strictly
// positive so the rectifier preactivations sit well away from the kink.
struct EncoderEpisode {
    Tensor attrs;                    // [C x A]
    Tensor w1, b1, w2, b2;           // constants except the varied slot
    int varied;                      // 0..3 -> w1,b1,w2,b2
    std::vector<Label> proto_labels;
    Tensor qe;                       // [n x M]
    std::vector<Label> q_labels;
    KbConfig cfg;

    Tensor operator()(const Tensor& x) const {
        const Tensor& p_w1 = varied == 0 ? x : w1;
        const Tensor& p_b1 = varied == 1 ? x : b1;
        const Tensor& p_w2 = varied == 2 ? x : w2;
        const Tensor& p_b2 = varied == 3 ? x : b2;
        Tensor h = relu(add(matmul(attrs, p_w1), p_b1));
        Tensor protos = relu(add(matmul(h, p_w2), p_b2));
        PrototypeSet ps{protos, proto_labels};
        return episode_loss(build_kb(qe, q_labels, ps, cfg));
    }

    const Tensor& varied_value() const {
        return varied == 0 ? w1 : varied == 1 ? b1 : varied == 2 ? w2 : b2;
    }
};

// Loss of a few-shot episode as a function of the (linear) embedding weights;
// prototypes are per-class means of the embedded support.
struct SupportEpisode {
    Tensor support;                            // [S x M]
    std::vector<std::vector<std::size_t>> groups;  // class -> support rows
    std::vector<Label> proto_labels;
    Tensor query;                              // [n x M]
    std::vector<Label> q_labels;
    KbConfig cfg;

    Tensor operator()(const Tensor& w) const {
        Tensor protos = group_mean_rows(matmul(support, w), groups);
        PrototypeSet ps{protos, proto_labels};
        return episode_loss(build_kb(matmul(query, w), q_labels, ps, cfg));
    }
};

}  // namespace detail

// Elementary-op checks; every entry's err should sit far below 1e-4.
inline std::vector<GradCheckEntry> gradcheck_ops(double eps, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<GradCheckEntry> out;
    auto check = [&](const std::string& name, auto&& f, const Tensor& x) {
        out.push_back({name, grad_check(f, x, eps)});
    };
    using detail::rand_tensor;

    const Tensor a34 = rand_tensor({3, 4}, rng, -1.0, 1.0);
    const Tensor c34 = rand_tensor({3, 4}, rng, -1.0, 1.0);
    const Tensor w45 = rand_tensor({4, 5}, rng, -1.0, 1.0);
    const Tensor bias4 = rand_tensor({4}, rng, -1.0, 1.0);

    check("add.lhs", [&](const Tensor& x) { return sum(mul(add(x, c34), c34)); }, a34);
    check("add.bias", [&](const Tensor& x) { return sum(mul(add(a34, x), c34)); }, bias4);
    check("sub.rhs", [&](const Tensor& x) { return sum(mul(sub(c34, x), c34)); }, a34);
    check("mul.lhs", [&](const Tensor& x) { return sum(mul(x, c34)); }, a34);
    check("exp", [](const Tensor& x) { return sum(protoltn::exp(x)); },
          rand_tensor({6}, rng, -1.0, 1.0));
    check("log", [](const Tensor& x) { return sum(protoltn::log(x)); },
          rand_tensor({6}, rng, 0.5, 2.0));
    check("relu", [](const Tensor& x) { return sum(relu(x)); }, rand_tensor({6}, rng, 0.2, 1.5));
    check("sigmoid", [](const Tensor& x) { return sum(sigmoid(x)); },
          rand_tensor({6}, rng, -2.0, 2.0));
    check("scale", [](const Tensor& x) { return sum(scale(x, -1.7)); },
          rand_tensor({5}, rng, -1.0, 1.0));
    check("add_scalar", [](const Tensor& x) { return sum(mul(add_scalar(x, 0.3), x)); },
          rand_tensor({5}, rng, -1.0, 1.0));
    check("pow.frac", [](const Tensor& x) { return sum(pow_scalar(x, 2.5)); },
          rand_tensor({5}, rng, 0.3, 2.0));
    check("pow.int", [](const Tensor& x) { return sum(pow_scalar(x, 3.0)); },
          rand_tensor({5}, rng, -2.0, 2.0));
    check("clamp", [](const Tensor& x) { return sum(mul(clamp(x, -0.5, 0.5), x)); },
          rand_tensor({6}, rng, -0.4, 0.4));
    check("matmul.lhs", [&](const Tensor& x) { return sum(mul(matmul(x, w45), matmul(x, w45))); },
          a34);
    check("matmul.rhs", [&](const Tensor& x) { return sum(mul(matmul(a34, x), matmul(a34, x))); },
          w45);
    {
        const Tensor p24 = rand_tensor({2, 4}, rng, -1.0, 1.0);
        check("sqdist.q", [&](const Tensor& x) { return sum(pairwise_sqdist(x, p24)); }, a34);
        check("sqdist.p", [&](const Tensor& x) { return sum(pairwise_sqdist(a34, x)); }, p24);
    }
    check("mean", [](const Tensor& x) { return mean(mul(x, x)); }, rand_tensor({7}, rng, -1.0, 1.0));
    check("sum.axis", [&](const Tensor& x) { return sum(mul(sum(x, 0), sum(x, 0))); }, a34);
    check("mean.axis", [&](const Tensor& x) { return sum(mul(mean(x, 1), mean(x, 1))); }, a34);
    check("gather", [&](const Tensor& x) { return sum(mul(gather_rows(x, {0, 2, 0}), gather_rows(x, {0, 2, 0}))); },
          a34);
    check("take", [](const Tensor& x) { return sum(mul(take(x, {1, 3, 1}), take(x, {1, 3, 1}))); },
          rand_tensor({6}, rng, -1.0, 1.0));
    check("reshape", [](const Tensor& x) { return sum(mul(reshape(x, {2, 3}), reshape(x, {2, 3}))); },
          rand_tensor({6}, rng, -1.0, 1.0));
    {
        const Tensor b32 = rand_tensor({3, 2}, rng, -1.0, 1.0);
        const Tensor c36 = rand_tensor({3, 6}, rng, -1.0, 1.0);
        check("hconcat.lhs", [&](const Tensor& x) { return sum(mul(hconcat(x, b32), c36)); }, a34);
        check("hconcat.rhs", [&](const Tensor& x) { return sum(mul(hconcat(a34, x), c36)); }, b32);
    }
    {
        std::vector<std::vector<std::size_t>> groups = {{0, 2}, {1}};
        const Tensor c24 = rand_tensor({2, 4}, rng, -1.0, 1.0);
        check("group-mean",
              [&](const Tensor& x) { return sum(mul(group_mean_rows(x, groups), c24)); }, a34);
    }
    check("agg.product-pmean",
          [](const Tensor& x) { return aggregate_product_pmean(x, 2.0).value; },
          rand_tensor({6}, rng, 0.1, 0.9));
    check("agg.generalized-mean",
          [](const Tensor& x) { return aggregate_generalized_mean(x, 3.0).value; },
          rand_tensor({6}, rng, 0.1, 0.9));
    // All-equal inputs route through the closed-form fast paths; the fast
    // gradients must agree with finite differences of the general formula.
    check("agg.product-pmean.equal",
          [](const Tensor& x) { return aggregate_product_pmean(x, 2.0).value; },
          Tensor::full({4}, 0.6));
    check("agg.generalized-mean.equal",
          [](const Tensor& x) { return aggregate_generalized_mean(x, 2.0).value; },
          Tensor::full({4}, 0.35));
    check("fuzzy-not", [](const Tensor& x) { return fuzzy_not(Truth{sum(x)}).value; },
          rand_tensor({3}, rng, 0.1, 0.3));
    return out;
}

// Composite episode-loss checks on `episodes` random small episodes
// (<= 8 classes, <= 32 queries, embedding width <= 16), cycling through the
// three prototype flavours and the loss hyperparameters.
inline std::vector<GradCheckEntry> gradcheck_episodes(double eps, std::uint64_t seed,
                                                      std::size_t episodes = 20) {
    std::mt19937_64 rng(seed + 1);
    std::vector<GradCheckEntry> out;
    const double alphas[] = {0.3, 1.0, 1e-4};
    const double p_foralls[] = {1.0, 2.0, 4.0};
    const double w_negs[] = {0.0, 0.7};
    const double p_aggs[] = {1.0, 2.0};

    for (std::size_t k = 0; k < episodes; ++k) {
        std::uniform_int_distribution<std::size_t> classes_d(2, 8), dim_d(2, 16);
        const std::size_t c = classes_d(rng);
        const std::size_t m = dim_d(rng);
        std::uniform_int_distribution<std::size_t> queries_d(c, 32);
        const std::size_t n = queries_d(rng);

        KbConfig cfg;
        cfg.alpha = alphas[k % 3];
        cfg.p_forall = p_foralls[k % 3];
        cfg.w_neg = w_negs[k % 2];
        cfg.p_agg = p_aggs[(k / 2) % 2];

        std::vector<Label> proto_labels(c);
        for (std::size_t i = 0; i < c; ++i) proto_labels[i] = static_cast<Label>(i);
        std::vector<Label> q_labels(n);
        std::uniform_int_distribution<std::size_t> label_d(0, c - 1);
        for (std::size_t i = 0; i < c; ++i) q_labels[i] = static_cast<Label>(i);  // cover all
        for (std::size_t i = c; i < n; ++i) q_labels[i] = static_cast<Label>(label_d(rng));

        switch (k % 3) {
            case 0: {
                detail::FixedProtoEpisode ep{detail::rand_tensor({c, m}, rng, -0.5, 0.5),
                                             proto_labels, q_labels, cfg};
                Tensor qe = detail::rand_tensor({n, m}, rng, -0.5, 0.5);
                out.push_back({"episode.fixed." + std::to_string(k), grad_check(ep, qe, eps)});
                break;
            }
            case 1: {
                const std::size_t a_dim = 3, hidden = 5;
                detail::EncoderEpisode ep;
                ep.attrs = detail::rand_tensor({c, a_dim}, rng, 0.1, 1.0);
                ep.w1 = detail::rand_tensor({a_dim, hidden}, rng, 0.02, 0.3);
                ep.b1 = Tensor::full({hidden}, 0.05);
                ep.w2 = detail::rand_tensor({hidden, m}, rng, 0.02, 0.3);
                ep.b2 = Tensor::full({m}, 0.05);
                ep.proto_labels = proto_labels;
                ep.qe = detail::rand_tensor({n, m}, rng, 0.0, 0.5);
                ep.q_labels = q_labels;
                ep.cfg = cfg;
                for (int varied = 0; varied < 4; ++varied) {
                    ep.varied = varied;
                    const char* slot[] = {"w1", "b1", "w2", "b2"};
                    out.push_back({"episode.encoder." + std::to_string(k) + "." + slot[varied],
                                   grad_check(ep, ep.varied_value(), eps)});
                }
                break;
            }
            default: {
                const std::size_t shots = 2;
                detail::SupportEpisode ep;
                ep.support = detail::rand_tensor({c * shots, m}, rng, -0.5, 0.5);
                ep.groups.resize(c);
                for (std::size_t i = 0; i < c * shots; ++i) ep.groups[i / shots].push_back(i);
                ep.proto_labels = proto_labels;
                ep.query = detail::rand_tensor({n, m}, rng, -0.5, 0.5);
                ep.q_labels = q_labels;
                ep.cfg = cfg;
                Tensor w = detail::rand_tensor({m, m}, rng, -0.5, 0.5);
                out.push_back({"episode.support." + std::to_string(k), grad_check(ep, w, eps)});
                break;
            }
        }
    }
    return out;
}

// Everything, plus an optional deliberately-broken entry proving the harness
// can fail: the faulty function evaluates a different expression for the
// perturbed constants than for the recorded graph.
inline std::vector<GradCheckEntry> run_gradcheck_suite(double eps, std::uint64_t seed,
                                                       std::size_t episodes = 20,
                                                       bool inject_fault = false) {
    std::vector<GradCheckEntry> out = gradcheck_ops(eps, seed);
    auto eps_entries = gradcheck_episodes(eps, seed, episodes);
    out.insert(out.end(), eps_entries.begin(), eps_entries.end());
    if (inject_fault) {
        auto broken = [](const Tensor& x) {
            if (x.requires_grad()) return sum(mul(x, x));
            return scale(sum(mul(x, x)), 1.5);
        };
        out.push_back({"injected-fault",
                       grad_check(broken, Tensor::constant({3}, {0.4, -0.2, 0.9}), eps)});
    }
    return out;
}

inline double worst_error(const std::vector<GradCheckEntry>& entries, std::string* name = nullptr) {
    double worst = 0.0;
    for (const auto& e : entries)
        if (e.err >= worst) {
            worst = e.err;
            if (name) *name = e.name;
        }
    return worst;
}

}  // namespace protoltn
