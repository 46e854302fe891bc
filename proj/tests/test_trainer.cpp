#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "protoltn/dataset.hpp"
#include "protoltn/trainer.hpp"

using namespace protoltn;

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.validate();
    cfg.epochs = 0;
    REQUIRE_THROWS_AS(cfg.validate(), ContractError);
    cfg = {};
    cfg.alpha = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), ContractError);
    cfg = {};
    cfg.learning_rate = -1e-3;
    REQUIRE_THROWS_AS(cfg.validate(), ContractError);
    cfg = {};
    cfg.learning_rate = 0.0;  // degenerate but allowed
    cfg.validate();
    cfg = {};
    cfg.lambda = -1.0;
    REQUIRE_THROWS_AS(cfg.validate(), ContractError);

    EpisodeConfig ep;
    ep.validate();
    ep.n_way = 1;
    REQUIRE_THROWS_AS(ep.validate(), ContractError);
    ep = {};
    ep.k_shot = 0;
    REQUIRE_THROWS_AS(ep.validate(), ContractError);
}

TEST_CASE("adam first step has magnitude close to the learning rate") {
    Tape tape;
    Tensor x = tape.leaf({}, {5.0});
    Adam adam({Parameter{"x", x, true}});
    tape.backward(scale(x, 123.0));  // constant gradient 123
    adam.step(0.01);
    // first bias-corrected step is lr * g/(|g| + eps')
    REQUIRE(std::abs((5.0 - x.item()) - 0.01) < 1e-6);
    REQUIRE(adam.step_count() == 1);
}

TEST_CASE("adam with zero learning rate or zero gradient leaves parameters unchanged") {
    Tape tape;
    Tensor x = tape.leaf({2}, {1.0, 2.0});
    Adam adam({Parameter{"x", x, true}});
    adam.step(0.1);  // no backward yet: empty gradient = zero
    REQUIRE(x.at(0) == 1.0);
    REQUIRE(x.at(1) == 2.0);

    tape.backward(sum(mul(x, x)));
    adam.step(0.0);
    REQUIRE(x.at(0) == 1.0);
    REQUIRE(x.at(1) == 2.0);
}

TEST_CASE("adam minimizes a quadratic") {
    Tape tape;
    Tensor x = tape.leaf({}, {0.0});
    Adam adam({Parameter{"x", x, true}});
    for (int i = 0; i < 400; ++i) {
        Tensor d = add_scalar(x, -3.0);
        tape.backward(mul(d, d));
        adam.step(0.05);
        tape.clear();
    }
    REQUIRE(std::abs(x.item() - 3.0) < 1e-3);
}

TEST_CASE("adam never moves a parameter that carries no gradient") {
    // Frozen (constant) parameters ride along with zero gradient forever.
    Tensor frozen = Tensor::constant({2}, {4.0, -4.0});
    Adam adam({Parameter{"frozen", frozen, false}});
    for (int i = 0; i < 10; ++i) adam.step(0.5);
    REQUIRE(frozen.at(0) == 4.0);
    REQUIRE(frozen.at(1) == -4.0);
}

TEST_CASE("episode sampling respects counts, coverage, and disjointness") {
    const std::size_t per_class = 6, classes = 4, dim = 2;
    std::vector<double> vals;
    std::vector<Label> labels;
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            // unique values identify the source row
            vals.push_back(static_cast<double>(c * per_class + i));
            vals.push_back(0.0);
            labels.push_back(static_cast<Label>(c * 10));
        }
    Tensor features = Tensor::constant({classes * per_class, dim}, std::move(vals));

    std::mt19937_64 rng(99);
    EpisodeConfig ep{3, 2, 2};
    Episode e = sample_episode(features, labels, ep, rng);

    REQUIRE(e.support.rows() == 3 * 2);
    REQUIRE(e.query.rows() == 3 * 2);
    REQUIRE(unique_labels(e.support.labels).size() == 3);
    REQUIRE(unique_labels(e.support.labels) == unique_labels(e.query.labels));

    std::set<double> support_ids, query_ids;
    for (std::size_t i = 0; i < e.support.rows(); ++i)
        support_ids.insert(e.support.values.at(i, 0));
    for (std::size_t i = 0; i < e.query.rows(); ++i) query_ids.insert(e.query.values.at(i, 0));
    REQUIRE(support_ids.size() == e.support.rows());
    for (double q : query_ids) REQUIRE(support_ids.count(q) == 0);

    // labels ascend class-by-class
    for (std::size_t i = 1; i < e.support.labels.size(); ++i)
        REQUIRE(e.support.labels[i] >= e.support.labels[i - 1]);
}

TEST_CASE("episode sampling failure modes") {
    Tensor features = Tensor::constant({4, 1}, {0, 1, 2, 3});
    std::vector<Label> labels = {0, 0, 1, 1};
    std::mt19937_64 rng(1);
    REQUIRE_THROWS_AS(sample_episode(features, labels, EpisodeConfig{3, 1, 1}, rng),
                      SamplingError);
    REQUIRE_THROWS_AS(sample_episode(features, labels, EpisodeConfig{2, 2, 1}, rng),
                      SamplingError);  // needs k_shot+1 = 3 rows per class
    REQUIRE_THROWS_AS(sample_episode(features, {0, 0, 1}, EpisodeConfig{2, 1, 1}, rng),
                      ContractError);
}

TEST_CASE("episode sampling is deterministic in the rng state") {
    SplitDataset ds = generate_synthetic(4, 1, 3, 4, 8, 0.1, 21);
    const std::vector<Label>& labels = ds.instance_labels;
    std::mt19937_64 r1(7), r2(7);
    Episode a = sample_episode(ds.features, labels, EpisodeConfig{2, 2, 3}, r1);
    Episode b = sample_episode(ds.features, labels, EpisodeConfig{2, 2, 3}, r2);
    REQUIRE(a.support.labels == b.support.labels);
    for (std::size_t i = 0; i < a.support.values.size(); ++i)
        REQUIRE(a.support.values.at(i) == b.support.values.at(i));
}

TEST_CASE("training log round-trips through CSV") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "protoltn_log_test.csv";
    std::vector<TrainLogRow> rows = {{1, 0.5, 0.25, 0.75}, {2, 1.0 / 3.0, 0.1, 0.9}};
    write_training_log(path.string(), rows);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "epoch,loss,phi_aff,phi_neg");
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "1,0.5,0.25,0.75");
    std::getline(in, line);
    std::istringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');
    REQUIRE(tok == "2");
    std::getline(ss, tok, ',');
    REQUIRE(std::stod(tok) == 1.0 / 3.0);  // exact round-trip
    fs::remove(path);
}

TEST_CASE("gzsl training reduces the loss and is bit-deterministic") {
    SplitDataset ds = generate_synthetic(4, 2, 3, 5, 12, 0.01, 42);
    TrainConfig cfg;
    cfg.alpha = 0.5;
    cfg.learning_rate = 1e-2;
    cfg.lambda = 1e-5;
    cfg.hidden_width = 16;
    cfg.epochs = 8;
    cfg.seed = 3;
    GzslTrainResult a = train_gzsl(ds, cfg);
    REQUIRE(a.log.size() == 8);
    REQUIRE(a.log.back().loss < a.log.front().loss);
    for (const auto& row : a.log) {
        REQUIRE(row.phi_aff >= 0.0);
        REQUIRE(row.phi_aff <= 1.0);
        REQUIRE(row.phi_neg >= 0.0);
        REQUIRE(row.phi_neg <= 1.0);
    }

    GzslTrainResult b = train_gzsl(ds, cfg);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        REQUIRE(a.log[i].loss == b.log[i].loss);
        REQUIRE(a.log[i].phi_aff == b.log[i].phi_aff);
        REQUIRE(a.log[i].phi_neg == b.log[i].phi_neg);
    }
    auto pa = a.encoder.parameters(), pb = b.encoder.parameters();
    for (std::size_t p = 0; p < pa.size(); ++p)
        for (std::size_t i = 0; i < pa[p].value.size(); ++i)
            REQUIRE(pa[p].value.at(i) == pb[p].value.at(i));
}

TEST_CASE("gzsl training with zero learning rate keeps the initial weights") {
    SplitDataset ds = generate_synthetic(3, 1, 3, 4, 6, 0.05, 5);
    TrainConfig cfg;
    cfg.alpha = 0.1;
    cfg.learning_rate = 0.0;
    cfg.hidden_width = 8;
    cfg.epochs = 2;
    cfg.seed = 17;
    GzslTrainResult r = train_gzsl(ds, cfg);

    Tape fresh_tape;
    SemanticEncoder fresh(fresh_tape, ds.attr_dim(), 8, ds.feat_dim(), cfg.init_stddev, 17);
    auto trained = r.encoder.parameters();
    auto init = fresh.parameters();
    for (std::size_t p = 0; p < trained.size(); ++p)
        for (std::size_t i = 0; i < trained[p].value.size(); ++i)
            REQUIRE(trained[p].value.at(i) == init[p].value.at(i));
}

TEST_CASE("fsl training learns episodes and logs one row per episode") {
    SplitDataset ds = generate_synthetic(5, 1, 3, 4, 10, 0.5, 33);
    const std::vector<Label>& labels = ds.instance_labels;
    TrainConfig cfg;
    cfg.alpha = 0.5;
    cfg.learning_rate = 1e-2;
    cfg.lambda = 0.0;
    cfg.epochs = 40;
    cfg.seed = 2;
    cfg.mode = TrainMode::fsl;
    EpisodeConfig ep{3, 2, 4};
    FslTrainResult r = train_fsl(ds.features, labels, ep, cfg);
    REQUIRE(r.log.size() == 40);

    double early = 0.0, late = 0.0;
    for (int i = 0; i < 5; ++i) {
        early += r.log[static_cast<std::size_t>(i)].loss;
        late += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].loss;
    }
    REQUIRE(late < early);

    FslTrainResult r2 = train_fsl(ds.features, labels, ep, cfg);
    for (std::size_t i = 0; i < r.log.size(); ++i) REQUIRE(r.log[i].loss == r2.log[i].loss);
}
