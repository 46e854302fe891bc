#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "protoltn/dataset.hpp"
#include "protoltn/metrics.hpp"
#include "protoltn/trainer.hpp"

#include "reported_metrics.hpp"

using namespace protoltn;

namespace {

PrototypeSet protos_2d() {
    PrototypeSet p;
    p.prototypes = Tensor::constant({3, 2}, {0.0, 0.0, 10.0, 0.0, 0.0, 10.0});
    p.labels = {2, 5, 9};
    return p;
}

}  // namespace

TEST_CASE("predict picks the nearest prototype's label") {
    PrototypeSet protos = protos_2d();
    Tensor qe = Tensor::constant({4, 2}, {1.0, 1.0, 9.0, 0.5, -1.0, 11.0, 10.0, 10.0});
    std::vector<Label> got = predict(qe, protos, 1e-5);
    // the last query is equidistant from prototypes 5 and 9 -> smallest label
    REQUIRE(got == std::vector<Label>{2, 5, 9, 5});
}

TEST_CASE("prediction ties resolve to the smallest label") {
    PrototypeSet protos;
    protos.prototypes = Tensor::constant({3, 1}, {4.0, 4.0, 4.0});  // identical rows
    protos.labels = {3, 7, 12};
    Tensor qe = Tensor::constant({2, 1}, {0.0, 100.0});
    REQUIRE(predict(qe, protos, 0.5) == std::vector<Label>{3, 3});
}

TEST_CASE("predictions do not depend on the similarity sharpness") {
    std::mt19937_64 rng(314);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 2 + static_cast<std::size_t>(rng() % 5);
        const std::size_t d = 1 + static_cast<std::size_t>(rng() % 6);
        std::vector<double> pv(k * d), qv(3 * d);
        for (auto& v : pv) v = u(rng);
        for (auto& v : qv) v = u(rng);
        PrototypeSet protos;
        protos.prototypes = Tensor::constant({k, d}, pv);
        for (std::size_t j = 0; j < k; ++j) protos.labels.push_back(static_cast<Label>(j));
        Tensor qe = Tensor::constant({3, d}, qv);
        auto a = predict(qe, protos, 1e-5);
        auto b = predict(qe, protos, 1e-4);
        auto c = predict(qe, protos, 37.0);
        REQUIRE(a == b);
        REQUIRE(a == c);
    }
}

TEST_CASE("predict validates its inputs") {
    PrototypeSet protos = protos_2d();
    Tensor qe = Tensor::constant({1, 2}, {0.0, 0.0});
    REQUIRE_THROWS_AS(predict(qe, protos, 0.0), ContractError);
    REQUIRE_THROWS_AS(predict(qe, protos, -1.0), ContractError);
    Tensor wrong = Tensor::constant({1, 3}, {0.0, 0.0, 0.0});
    REQUIRE_THROWS_AS(predict(wrong, protos, 1.0), DimensionError);
}

TEST_CASE("per-class accuracy averages classes, not instances") {
    // class 1: 2/2 correct, class 2: 1/3 correct -> mean (1 + 1/3)/2
    std::vector<Label> truth = {1, 1, 2, 2, 2};
    std::vector<Label> pred = {1, 1, 2, 9, 9};
    double acc = per_class_top1(pred, truth, {1, 2});
    REQUIRE(acc == (1.0 + 1.0 / 3.0) / 2.0);
    // restricting the class set drops the other class from the mean
    REQUIRE(per_class_top1(pred, truth, {2}) == 1.0 / 3.0);
    // a listed class with no test instances is skipped, not counted as zero
    REQUIRE(per_class_top1(pred, truth, {1, 4}) == 1.0);
}

TEST_CASE("per-class accuracy failure modes") {
    REQUIRE_THROWS_AS(per_class_top1({1}, {1, 2}, {1}), ContractError);
    REQUIRE_THROWS_AS(per_class_top1({1}, {1}, {}), ContractError);
    REQUIRE_THROWS_AS(per_class_top1({1, 2}, {1, 2}, {5}), ContractError);
}

TEST_CASE("harmonic mean oracle values") {
    REQUIRE(harmonic_mean(0.305, 0.864) == 0.4508468776732249);
    REQUIRE(harmonic_mean(0.0, 0.0) == 0.0);
    REQUIRE(harmonic_mean(0.0, 0.9) == 0.0);
    REQUIRE(harmonic_mean(0.5, 0.5) == 0.5);
    REQUIRE(harmonic_mean(0.2, 0.8) == harmonic_mean(0.8, 0.2));
}

TEST_CASE("reported benchmark tables are internally consistent") {
    for (const auto& row : protoltn_tests::reported_gzsl_rows()) {
        const double h = 100.0 * harmonic_mean(row.u / 100.0, row.s / 100.0);
        const double rounded = std::round(h * 10.0) / 10.0;
        INFO(row.dataset << " / " << row.method);
        REQUIRE(std::abs(rounded - row.h) <= 0.1 + 1e-9);
    }
}

TEST_CASE("noise-free training reaches perfect unseen accuracy") {
    SplitDataset ds = generate_synthetic(5, 2, 3, 4, 6, 0.0, 11);
    TrainConfig cfg;
    cfg.alpha = 0.5;
    cfg.learning_rate = 1e-2;
    cfg.lambda = 1e-5;
    cfg.hidden_width = 32;
    cfg.epochs = 60;
    cfg.batch_size = 8;
    cfg.seed = 4;
    GzslTrainResult r = train_gzsl(ds, cfg);
    GzslReport rep = gzsl_evaluate(ds, r.encoder, cfg.alpha);

    REQUIRE(rep.t1 == 1.0);
    REQUIRE(rep.s == 1.0);
    REQUIRE(rep.t1 + 1e-12 >= rep.u);
    REQUIRE(rep.h == harmonic_mean(rep.u, rep.s));
    REQUIRE(rep.per_class.size() == 7);
    for (const auto& [label, acc] : rep.per_class) {
        REQUIRE(acc >= 0.0);
        REQUIRE(acc <= 1.0);
    }
    // every seen class is perfectly classified in the full-prototype search
    for (Label c : ds.seen_classes) REQUIRE(rep.per_class.at(c) == 1.0);
}

TEST_CASE("evaluation is invariant to the order of dataset rows") {
    SplitDataset ds = generate_synthetic(4, 2, 3, 4, 5, 0.05, 77);
    TrainConfig cfg;
    cfg.alpha = 0.5;
    cfg.learning_rate = 1e-2;
    cfg.hidden_width = 16;
    cfg.epochs = 10;
    cfg.seed = 9;
    GzslTrainResult r = train_gzsl(ds, cfg);
    GzslReport before = gzsl_evaluate(ds, r.encoder, cfg.alpha);

    const std::size_t n = ds.num_instances();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(123);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> inverse(n);
    for (std::size_t i = 0; i < n; ++i) inverse[perm[i]] = i;

    SplitDataset shuffled;
    shuffled.features = gather_rows(ds.features, perm);
    for (std::size_t i = 0; i < n; ++i) {
        shuffled.instance_labels.push_back(ds.instance_labels[perm[i]]);
        shuffled.instance_ids.push_back(ds.instance_ids[perm[i]]);
    }
    shuffled.class_attributes = ds.class_attributes;
    shuffled.original_labels = ds.original_labels;
    shuffled.seen_classes = ds.seen_classes;
    shuffled.unseen_classes = ds.unseen_classes;
    auto remap = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::size_t> out;
        for (std::size_t i : idx) out.push_back(inverse[i]);
        std::sort(out.begin(), out.end());
        return out;
    };
    shuffled.train_idx = remap(ds.train_idx);
    shuffled.test_seen_idx = remap(ds.test_seen_idx);
    shuffled.test_unseen_idx = remap(ds.test_unseen_idx);
    REQUIRE(validate_splits(shuffled).empty());

    GzslReport after = gzsl_evaluate(shuffled, r.encoder, cfg.alpha);
    REQUIRE(before.t1 == after.t1);
    REQUIRE(before.u == after.u);
    REQUIRE(before.s == after.s);
    REQUIRE(before.h == after.h);
    REQUIRE(before.per_class == after.per_class);
}

TEST_CASE("evaluation requires both test splits") {
    SplitDataset ds = generate_synthetic(3, 1, 2, 3, 5, 0.1, 8);
    Tape tape;
    SemanticEncoder enc(tape, ds.attr_dim(), 8, ds.feat_dim(), 0.05, 1);

    SplitDataset no_unseen = ds;
    no_unseen.test_unseen_idx.clear();
    REQUIRE_THROWS_AS(gzsl_evaluate(no_unseen, enc, 0.5), ContractError);

    SplitDataset no_seen = ds;
    no_seen.test_seen_idx.clear();
    REQUIRE_THROWS_AS(gzsl_evaluate(no_seen, enc, 0.5), ContractError);
}
