#pragma once

// Episode sampling and the two training loops: batched zero-shot training of
// the attribute encoder, and episodic few-shot training of the embedding
// function.  Both are fully deterministic for a fixed seed within one build.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "protoltn/dataset.hpp"
#include "protoltn/errors.hpp"
#include "protoltn/grounding.hpp"
#include "protoltn/kb.hpp"
#include "protoltn/optim.hpp"
#include "protoltn/tensor.hpp"
#include "protoltn/util.hpp"

namespace protoltn {

enum class TrainMode { fsl, gzsl };

struct TrainConfig {
    double learning_rate = 1e-4;
    double alpha = 1e-5;
    double lambda = 1e-3;
    double p_agg = 1.0;
    double p_forall = 2.0;
    double w_neg = 0.0;
    int epochs = 30;
    int batch_size = 64;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::gzsl;
    std::size_t hidden_width = 1600;
    double init_stddev = 0.05;
    double truth_eps = 1e-12;

    void validate() const {
        if (epochs < 1) throw ContractError("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw ContractError("TrainConfig: batch_size must be >= 1");
        // A zero rate is allowed (degenerate but well-defined: no updates).
        if (!(learning_rate >= 0.0))
            throw ContractError("TrainConfig: learning_rate must be >= 0");
        if (alpha <= 0.0) throw ContractError("TrainConfig: alpha must be positive");
        if (lambda < 0.0) throw ContractError("TrainConfig: lambda must be non-negative");
    }

    KbConfig kb() const { return {alpha, w_neg, p_agg, p_forall, truth_eps}; }
};

struct EpisodeConfig {
    int n_way = 2;
    int k_shot = 1;
    int n_query = 5;

    void validate() const {
        if (n_way < 2) throw ContractError("EpisodeConfig: n_way must be >= 2");
        if (k_shot < 1) throw ContractError("EpisodeConfig: k_shot must be >= 1");
        if (n_query < 1) throw ContractError("EpisodeConfig: n_query must be >= 1");
    }
};

struct TrainLogRow {
    int epoch = 0;
    double loss = 0.0;
    double phi_aff = 0.0;
    double phi_neg = 0.0;
};

inline void write_training_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,loss,phi_aff,phi_neg\n";
    for (const auto& r : rows)
        out << r.epoch << "," << format_double(r.loss) << "," << format_double(r.phi_aff) << ","
            << format_double(r.phi_neg) << "\n";
}

// ---------------------------------------------------------------------------
// Episode sampling
// ---------------------------------------------------------------------------

struct Episode {
    VariableGrounding support;
    VariableGrounding query;
};

// Draws an N-way episode: nWay classes without replacement, then per class
// kShot support rows plus up to nQuery disjoint query rows.
inline Episode sample_episode(const Tensor& features, const std::vector<Label>& labels,
                              const EpisodeConfig& ep, std::mt19937_64& rng) {
    ep.validate();
    if (features.rank() != 2 || labels.size() != features.shape()[0])
        throw ContractError("sample_episode: features and labels misaligned");
    std::vector<Label> classes = unique_labels(labels);
    if (classes.size() < static_cast<std::size_t>(ep.n_way))
        throw SamplingError("requested " + std::to_string(ep.n_way) + "-way episode but only " +
                            std::to_string(classes.size()) + " classes are available");
    std::shuffle(classes.begin(), classes.end(), rng);
    classes.resize(static_cast<std::size_t>(ep.n_way));
    std::sort(classes.begin(), classes.end());

    std::vector<std::size_t> support_rows, query_rows;
    std::vector<Label> support_labels, query_labels;
    for (Label c : classes) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) rows.push_back(i);
        if (rows.size() < static_cast<std::size_t>(ep.k_shot) + 1)
            throw SamplingError("class " + std::to_string(c) + " has " +
                                std::to_string(rows.size()) + " examples; need k_shot+1 = " +
                                std::to_string(ep.k_shot + 1));
        std::shuffle(rows.begin(), rows.end(), rng);
        for (int k = 0; k < ep.k_shot; ++k) {
            support_rows.push_back(rows[static_cast<std::size_t>(k)]);
            support_labels.push_back(c);
        }
        const std::size_t q_count =
            std::min(rows.size() - static_cast<std::size_t>(ep.k_shot),
                     static_cast<std::size_t>(ep.n_query));
        for (std::size_t q = 0; q < q_count; ++q) {
            query_rows.push_back(rows[static_cast<std::size_t>(ep.k_shot) + q]);
            query_labels.push_back(c);
        }
    }
    Episode out;
    out.support = VariableGrounding::make("s", Domain::features, gather_rows(features, support_rows),
                                          std::move(support_labels));
    out.query = VariableGrounding::make("q", Domain::features, gather_rows(features, query_rows),
                                        std::move(query_labels));
    return out;
}

// ---------------------------------------------------------------------------
// Zero-shot training (batched, prototypes over all seen classes every step)
// ---------------------------------------------------------------------------

struct GzslTrainResult {
    std::unique_ptr<Tape> tape;   // owns the parameter leaves
    SemanticEncoder encoder;
    std::vector<TrainLogRow> log;
};

inline GzslTrainResult train_gzsl(const SplitDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (ds.train_idx.empty()) throw ContractError("train_gzsl: empty training split");
    if (ds.seen_classes.empty()) throw ContractError("train_gzsl: no seen classes");

    auto tape = std::make_unique<Tape>();
    SemanticEncoder encoder(*tape, ds.attr_dim(), cfg.hidden_width, ds.feat_dim(),
                            cfg.init_stddev, cfg.seed);
    Adam adam(encoder.parameters());
    std::mt19937_64 data_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    // The seen-class attribute slice is fixed across the run.
    std::vector<std::size_t> seen_rows(ds.seen_classes.begin(), ds.seen_classes.end());
    const Tensor seen_attrs = gather_rows(ds.class_attributes, seen_rows);

    const KbConfig kbc = cfg.kb();
    std::vector<std::size_t> order(ds.train_idx);
    std::vector<TrainLogRow> log;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), data_rng);
        double loss_sum = 0.0, aff_sum = 0.0, neg_sum = 0.0;
        std::size_t steps = 0, neg_steps = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
            Tensor q = gather_rows(ds.features, batch);
            std::vector<Label> q_labels;
            q_labels.reserve(batch.size());
            for (std::size_t i : batch) q_labels.push_back(ds.instance_labels[i]);

            PrototypeSet protos =
                get_prototypes_zsl(seen_attrs, ds.seen_classes, encoder, /*with_grad=*/true);
            KnowledgeBase kb = build_kb(q, q_labels, protos, kbc);
            Tensor loss = episode_loss(kb);
            Tensor objective = best_sat_objective(loss, encoder.parameters(), cfg.lambda);

            tape->backward(objective);
            adam.step(cfg.learning_rate);
            tape->clear();

            loss_sum += loss.item();
            aff_sum += kb.aff.item();
            if (kb.has_neg) {
                neg_sum += kb.neg.item();
                ++neg_steps;
            }
            ++steps;
        }
        TrainLogRow row;
        row.epoch = epoch;
        row.loss = loss_sum / static_cast<double>(steps);
        row.phi_aff = aff_sum / static_cast<double>(steps);
        row.phi_neg = neg_steps ? neg_sum / static_cast<double>(neg_steps)
                                : std::numeric_limits<double>::quiet_NaN();
        log.push_back(row);
    }
    return {std::move(tape), std::move(encoder), std::move(log)};
}

// ---------------------------------------------------------------------------
// Few-shot training (one sampled episode per epoch)
// ---------------------------------------------------------------------------

struct FslTrainResult {
    std::unique_ptr<Tape> tape;
    EmbeddingNet net;
    std::vector<TrainLogRow> log;
};

// Trains the embedding function on episodes drawn from (features, labels);
// `epochs` counts episodes here (one episode per epoch).
inline FslTrainResult train_fsl(const Tensor& features, const std::vector<Label>& labels,
                                const EpisodeConfig& ep, const TrainConfig& cfg) {
    cfg.validate();
    ep.validate();
    auto tape = std::make_unique<Tape>();
    EmbeddingNet net = EmbeddingNet::linear(*tape, features.shape()[1]);
    Adam adam(net.parameters());
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    const KbConfig kbc = cfg.kb();
    std::vector<TrainLogRow> log;
    for (int episode = 1; episode <= cfg.epochs; ++episode) {
        Episode e = sample_episode(features, labels, ep, rng);
        PrototypeSet protos = get_prototypes_fsl(e.support, net);
        VariableGrounding qe = get_embedding(e.query, net);
        KnowledgeBase kb = build_kb(qe.values, qe.labels, protos, kbc);
        Tensor loss = episode_loss(kb);
        Tensor objective = best_sat_objective(loss, net.parameters(), cfg.lambda);

        tape->backward(objective);
        adam.step(cfg.learning_rate);
        tape->clear();

        TrainLogRow row;
        row.epoch = episode;
        row.loss = loss.item();
        row.phi_aff = kb.aff.item();
        row.phi_neg = kb.has_neg ? kb.neg.item() : std::numeric_limits<double>::quiet_NaN();
        log.push_back(row);
    }
    return {std::move(tape), std::move(net), std::move(log)};
}

}  // namespace protoltn
