// protoltn: train / eval / gradcheck / synth / export-prototypes.
//
// Exit codes: 0 success, 1 check failure (gradient tolerance exceeded),
// 2 usage or input error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "protoltn/protoltn.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Input/usage problems that should exit 2 with a plain message.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataPaths {
    std::string features, attributes, splits;
};

// `--data` accepts either a directory holding the three standard files or a
// JSON manifest {"features": ..., "attributes": ..., "splits": ...} with
// paths resolved relative to the manifest.
DataPaths resolve_data(const std::string& data) {
    if (data.empty()) throw UsageError("no dataset given; pass --data");
    fs::path p(data);
    if (fs::is_directory(p))
        return {(p / "features.csv").string(), (p / "attributes.csv").string(),
                (p / "splits.json").string()};
    if (!fs::exists(p)) throw UsageError("dataset path does not exist: " + data);

    std::ifstream in(p);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("cannot parse dataset manifest " + data + ": " + e.what());
    }
    if (!manifest.is_object()) throw UsageError("dataset manifest must be a JSON object: " + data);
    for (const auto& [key, _] : manifest.items())
        if (key != "features" && key != "attributes" && key != "splits")
            throw UsageError("unknown key \"" + key + "\" in dataset manifest " + data);
    for (const char* key : {"features", "attributes", "splits"})
        if (!manifest.contains(key) || !manifest[key].is_string())
            throw UsageError("dataset manifest " + data + " needs string key \"" + key + "\"");
    fs::path base = p.parent_path();
    auto rel = [&](const std::string& s) {
        fs::path q(s);
        return (q.is_absolute() ? q : base / q).string();
    };
    return {rel(manifest["features"].get<std::string>()),
            rel(manifest["attributes"].get<std::string>()),
            rel(manifest["splits"].get<std::string>())};
}

protoltn::SplitDataset load_data(const std::string& data) {
    DataPaths dp = resolve_data(data);
    for (const std::string* path : {&dp.features, &dp.attributes, &dp.splits})
        if (!fs::exists(*path)) throw UsageError("missing dataset file: " + *path);
    return protoltn::load_csv_dataset(dp.features, dp.attributes, dp.splits);
}

std::optional<std::int64_t> env_seed() {
    const char* s = std::getenv("PROTO_LTN_SEED");
    if (!s) return std::nullopt;
    std::int64_t v = 0;
    if (!protoltn::try_parse_int64(s, v))
        throw UsageError(std::string("PROTO_LTN_SEED is not an integer: ") + s);
    return v;
}

// Everything `train` consumes, before merging.
struct TrainSettings {
    std::string mode = "gzsl";
    std::string preset;
    std::string data;
    long long epochs = 30;
    long long batch_size = 64;
    double learning_rate = 1e-4;
    double alpha = 1e-5;
    double lambda = 1e-3;
    double w_neg = 0.0;
    double p_agg = 1.0;
    double p_forall = 2.0;
    long long seed = 0;
    long long hidden = 1600;
    double init_stddev = 0.05;
    long long n_way = 2;
    long long k_shot = 1;
    long long n_query = 5;
};

struct PresetValues {
    double learning_rate, alpha, lambda;
};

PresetValues preset_values(const std::string& name) {
    if (name == "awa2") return {1e-4, 1e-5, 1e-3};
    if (name == "cub") return {1e-4, 1e-4, 1e-3};
    if (name == "apy") return {1e-3, 1e-5, 1e-5};
    if (name == "sun") return {1e-3, 1e-5, 1e-5};
    throw UsageError("unknown preset: " + name);
}

nlohmann::json read_config_file(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("config file does not exist: " + path);
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("cannot parse config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError("config must be a JSON object: " + path);
    return j;
}

// Precedence, lowest to highest: built-in defaults, preset, config file,
// command-line flags.  A seed comes from the flag, the file, the
// PROTO_LTN_SEED environment variable, or 0, in that order.
TrainSettings merge_train_settings(const CLI::App* cmd, const TrainSettings& flags,
                                   const std::string& config_path) {
    nlohmann::json file = nlohmann::json::object();
    if (!config_path.empty()) file = read_config_file(config_path);

    static const std::set<std::string> known = {
        "mode",     "preset", "data",  "epochs",   "batch_size", "learning_rate",
        "alpha",    "lambda", "w_neg", "p_agg",    "p_forall",   "seed",
        "hidden",   "init_stddev",     "n_way",    "k_shot",     "n_query"};
    for (const auto& [key, _] : file.items())
        if (!known.count(key)) throw UsageError("unknown config key \"" + key + "\"");

    TrainSettings eff;  // defaults

    std::string preset =
        cmd->count("--preset") ? flags.preset
                               : (file.contains("preset") ? file["preset"].get<std::string>() : "");
    if (!preset.empty()) {
        PresetValues pv = preset_values(preset);
        eff.learning_rate = pv.learning_rate;
        eff.alpha = pv.alpha;
        eff.lambda = pv.lambda;
        eff.preset = preset;
    }

    auto file_str = [&](const char* key, std::string& slot) {
        if (file.contains(key)) {
            if (!file[key].is_string()) throw UsageError(std::string("config key \"") + key + "\" must be a string");
            slot = file[key].get<std::string>();
        }
    };
    auto file_int = [&](const char* key, long long& slot) {
        if (file.contains(key)) {
            if (!file[key].is_number_integer())
                throw UsageError(std::string("config key \"") + key + "\" must be an integer");
            slot = file[key].get<long long>();
        }
    };
    auto file_num = [&](const char* key, double& slot) {
        if (file.contains(key)) {
            if (!file[key].is_number())
                throw UsageError(std::string("config key \"") + key + "\" must be a number");
            slot = file[key].get<double>();
        }
    };
    file_str("mode", eff.mode);
    file_str("data", eff.data);
    file_int("epochs", eff.epochs);
    file_int("batch_size", eff.batch_size);
    file_num("learning_rate", eff.learning_rate);
    file_num("alpha", eff.alpha);
    file_num("lambda", eff.lambda);
    file_num("w_neg", eff.w_neg);
    file_num("p_agg", eff.p_agg);
    file_num("p_forall", eff.p_forall);
    file_int("hidden", eff.hidden);
    file_num("init_stddev", eff.init_stddev);
    file_int("n_way", eff.n_way);
    file_int("k_shot", eff.k_shot);
    file_int("n_query", eff.n_query);

    bool seed_resolved = false;
    if (file.contains("seed")) {
        file_int("seed", eff.seed);
        seed_resolved = true;
    }

    auto flag = [&](const char* name, auto member) {
        if (cmd->count(name)) eff.*member = flags.*member;
    };
    flag("--mode", &TrainSettings::mode);
    flag("--data", &TrainSettings::data);
    flag("--epochs", &TrainSettings::epochs);
    flag("--batch-size", &TrainSettings::batch_size);
    flag("--lr", &TrainSettings::learning_rate);
    flag("--alpha", &TrainSettings::alpha);
    flag("--lambda", &TrainSettings::lambda);
    flag("--w-neg", &TrainSettings::w_neg);
    flag("--p-agg", &TrainSettings::p_agg);
    flag("--p-forall", &TrainSettings::p_forall);
    flag("--hidden", &TrainSettings::hidden);
    flag("--init-stddev", &TrainSettings::init_stddev);
    flag("--n-way", &TrainSettings::n_way);
    flag("--k-shot", &TrainSettings::k_shot);
    flag("--n-query", &TrainSettings::n_query);
    if (cmd->count("--seed")) {
        eff.seed = flags.seed;
        seed_resolved = true;
    }
    if (!seed_resolved)
        if (auto v = env_seed()) eff.seed = *v;

    if (eff.mode != "fsl" && eff.mode != "gzsl")
        throw UsageError("mode must be fsl or gzsl, got \"" + eff.mode + "\"");
    if (eff.epochs < 1) throw UsageError("epochs must be >= 1");
    if (eff.batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (eff.hidden < 1) throw UsageError("hidden must be >= 1");
    if (eff.seed < 0) throw UsageError("seed must be non-negative");
    return eff;
}

protoltn::TrainConfig to_train_config(const TrainSettings& s) {
    protoltn::TrainConfig cfg;
    cfg.learning_rate = s.learning_rate;
    cfg.alpha = s.alpha;
    cfg.lambda = s.lambda;
    cfg.p_agg = s.p_agg;
    cfg.p_forall = s.p_forall;
    cfg.w_neg = s.w_neg;
    cfg.epochs = static_cast<int>(s.epochs);
    cfg.batch_size = static_cast<int>(s.batch_size);
    cfg.seed = static_cast<std::uint64_t>(s.seed);
    cfg.mode = s.mode == "fsl" ? protoltn::TrainMode::fsl : protoltn::TrainMode::gzsl;
    cfg.hidden_width = static_cast<std::size_t>(s.hidden);
    cfg.init_stddev = s.init_stddev;
    return cfg;
}

// The resolved config round-trips: feeding it back via --config (plus the
// same --out) reproduces the run exactly.
void write_resolved_config(const TrainSettings& s, const std::string& path) {
    ordered_json j;
    j["mode"] = s.mode;
    if (!s.preset.empty()) j["preset"] = s.preset;
    j["data"] = fs::absolute(fs::path(s.data)).lexically_normal().string();
    j["epochs"] = s.epochs;
    j["batch_size"] = s.batch_size;
    j["learning_rate"] = s.learning_rate;
    j["alpha"] = s.alpha;
    j["lambda"] = s.lambda;
    j["w_neg"] = s.w_neg;
    j["p_agg"] = s.p_agg;
    j["p_forall"] = s.p_forall;
    j["seed"] = s.seed;
    j["hidden"] = s.hidden;
    j["init_stddev"] = s.init_stddev;
    if (s.mode == "fsl") {
        j["n_way"] = s.n_way;
        j["k_shot"] = s.k_shot;
        j["n_query"] = s.n_query;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw protoltn::IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

int run_train(const CLI::App* cmd, const TrainSettings& flags, const std::string& config_path,
              const std::string& out_dir) {
    TrainSettings s = merge_train_settings(cmd, flags, config_path);
    protoltn::SplitDataset ds = load_data(s.data);
    fs::create_directories(out_dir);
    protoltn::TrainConfig cfg = to_train_config(s);

    std::vector<protoltn::TrainLogRow> log;
    std::vector<protoltn::Parameter> params;
    if (cfg.mode == protoltn::TrainMode::gzsl) {
        protoltn::GzslTrainResult r = protoltn::train_gzsl(ds, cfg);
        log = std::move(r.log);
        params = r.encoder.parameters();
        protoltn::save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), params);
    } else {
        protoltn::EpisodeConfig ep{static_cast<int>(s.n_way), static_cast<int>(s.k_shot),
                                   static_cast<int>(s.n_query)};
        protoltn::Tensor feats = protoltn::gather_rows(ds.features, ds.train_idx);
        std::vector<protoltn::Label> labels;
        labels.reserve(ds.train_idx.size());
        for (std::size_t i : ds.train_idx) labels.push_back(ds.instance_labels[i]);
        protoltn::FslTrainResult r = protoltn::train_fsl(feats, labels, ep, cfg);
        log = std::move(r.log);
        params = r.net.parameters();
        protoltn::save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), params);
    }
    protoltn::write_training_log((fs::path(out_dir) / "train_log.csv").string(), log);
    write_resolved_config(s, (fs::path(out_dir) / "config.json").string());

    const protoltn::TrainLogRow& last = log.back();
    std::cout << "trained " << s.mode << " for " << log.size() << " epochs; final loss "
              << protoltn::format_double(last.loss) << ", phi_aff "
              << protoltn::format_double(last.phi_aff) << "\n"
              << "artifacts in " << out_dir << ": checkpoint.bin, train_log.csv, config.json\n";
    return 0;
}

// Rebuilds the attribute encoder purely from checkpoint shapes.
protoltn::SemanticEncoder encoder_from_checkpoint(
    protoltn::Tape& tape, const std::vector<std::pair<std::string, protoltn::Tensor>>& loaded,
    const protoltn::SplitDataset& ds) {
    const protoltn::Tensor* w1 = nullptr;
    const protoltn::Tensor* w2 = nullptr;
    for (const auto& [name, t] : loaded) {
        if (name == "g.w1") w1 = &t;
        if (name == "g.w2") w2 = &t;
    }
    if (!w1 || !w2)
        throw UsageError("checkpoint does not contain an attribute encoder (g.w1/g.w2)");
    if (w1->rank() != 2 || w2->rank() != 2)
        throw UsageError("checkpoint encoder weights have unexpected ranks");
    const std::size_t attr_dim = w1->shape()[0];
    const std::size_t hidden = w1->shape()[1];
    const std::size_t out_dim = w2->shape()[1];
    if (attr_dim != ds.attr_dim())
        throw protoltn::DimensionError("checkpoint attribute width " + std::to_string(attr_dim) +
                                       " does not match dataset " + std::to_string(ds.attr_dim()));
    if (out_dim != ds.feat_dim())
        throw protoltn::DimensionError("checkpoint output width " + std::to_string(out_dim) +
                                       " does not match dataset " + std::to_string(ds.feat_dim()));
    protoltn::SemanticEncoder encoder(tape, attr_dim, hidden, out_dim, 0.05, 0);
    std::vector<protoltn::Parameter> params = encoder.parameters();
    protoltn::apply_checkpoint(params, loaded);
    return encoder;
}

int run_eval(const std::string& data, const std::string& checkpoint, const std::string& out_dir,
             double alpha) {
    if (!fs::exists(checkpoint)) throw UsageError("missing checkpoint: " + checkpoint);
    protoltn::SplitDataset ds = load_data(data);
    auto loaded = protoltn::load_checkpoint(checkpoint);
    protoltn::Tape tape;
    protoltn::SemanticEncoder encoder = encoder_from_checkpoint(tape, loaded, ds);
    protoltn::GzslReport report = protoltn::gzsl_evaluate(ds, encoder, alpha);

    ordered_json j;
    j["t1"] = report.t1;
    j["u"] = report.u;
    j["s"] = report.s;
    j["h"] = report.h;
    ordered_json per_class = ordered_json::object();
    for (const auto& [label, acc] : report.per_class) per_class[std::to_string(label)] = acc;
    j["per_class"] = per_class;

    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "metrics.json").string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw protoltn::IoError("cannot write " + path);
    out << j.dump(2) << "\n";

    std::cout << "T1=" << protoltn::format_double(report.t1)
              << " U=" << protoltn::format_double(report.u)
              << " S=" << protoltn::format_double(report.s)
              << " H=" << protoltn::format_double(report.h) << "\n"
              << "wrote " << path << "\n";
    return 0;
}

int run_gradcheck(double eps, std::int64_t seed, long long episodes, double tol, bool inject_fault,
                  bool verbose) {
    auto entries = protoltn::run_gradcheck_suite(eps, static_cast<std::uint64_t>(seed),
                                                 static_cast<std::size_t>(episodes), inject_fault);
    if (verbose)
        for (const auto& e : entries)
            std::cout << e.name << " " << protoltn::format_double(e.err) << "\n";
    std::string worst_name;
    double worst = protoltn::worst_error(entries, &worst_name);
    std::cout << "checks=" << entries.size() << " eps=" << protoltn::format_double(eps)
              << " worst=" << worst_name << " err=" << protoltn::format_double(worst) << "\n";
    if (worst >= tol) {
        std::cerr << "gradcheck failed: " << worst_name << " error "
                  << protoltn::format_double(worst) << " >= tolerance "
                  << protoltn::format_double(tol) << "\n";
        return 1;
    }
    return 0;
}

int run_synth(long long seen, long long unseen, long long attr_dim, long long feat_dim,
              long long per_class, double noise, std::int64_t seed, const std::string& out_dir) {
    protoltn::SplitDataset ds = protoltn::generate_synthetic(
        static_cast<std::size_t>(seen), static_cast<std::size_t>(unseen),
        static_cast<std::size_t>(attr_dim), static_cast<std::size_t>(feat_dim),
        static_cast<std::size_t>(per_class), noise, static_cast<std::uint64_t>(seed));
    fs::create_directories(out_dir);
    protoltn::save_dataset(ds, out_dir);
    std::cout << "wrote synthetic dataset to " << out_dir << " (" << ds.num_instances()
              << " instances, " << ds.num_classes() << " classes)\n";
    return 0;
}

int run_export_prototypes(const std::string& data, const std::string& checkpoint,
                          const std::string& out_dir) {
    if (!fs::exists(checkpoint)) throw UsageError("missing checkpoint: " + checkpoint);
    protoltn::SplitDataset ds = load_data(data);
    auto loaded = protoltn::load_checkpoint(checkpoint);
    protoltn::Tape tape;
    protoltn::SemanticEncoder encoder = encoder_from_checkpoint(tape, loaded, ds);

    std::vector<protoltn::Label> all_classes(ds.num_classes());
    for (std::size_t c = 0; c < all_classes.size(); ++c)
        all_classes[c] = static_cast<protoltn::Label>(c);
    protoltn::PrototypeSet protos =
        protoltn::get_prototypes_zsl(ds.class_attributes, all_classes, encoder,
                                     /*with_grad=*/false);

    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "prototypes.csv").string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw protoltn::IoError("cannot write " + path);
    const std::size_t m = protos.prototypes.shape()[1];
    out << "label";
    for (std::size_t j = 0; j < m; ++j) out << ",p" << j;
    out << "\n";
    for (std::size_t c = 0; c < all_classes.size(); ++c) {
        out << ds.original_labels[c];
        for (std::size_t j = 0; j < m; ++j)
            out << "," << protoltn::format_double(protos.prototypes.at(c, j));
        out << "\n";
    }
    std::cout << "wrote " << path << " (" << all_classes.size() << " rows, " << m
              << " columns)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prototype-grounded fuzzy-logic training and evaluation"};
    app.require_subcommand(1);

    // train ------------------------------------------------------------
    TrainSettings ts;
    std::string train_config, train_out;
    CLI::App* train = app.add_subcommand("train", "Train an embedding (fsl) or attribute encoder (gzsl)");
    train->add_option("--mode", ts.mode, "fsl or gzsl")->check(CLI::IsMember({"fsl", "gzsl"}));
    train->add_option("--preset", ts.preset, "hyperparameter preset")
        ->check(CLI::IsMember({"awa2", "cub", "apy", "sun"}));
    train->add_option("--data", ts.data, "dataset directory or JSON manifest");
    train->add_option("--config", train_config, "JSON config file (flags override)");
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--epochs", ts.epochs, "training epochs");
    train->add_option("--batch-size", ts.batch_size, "queries per step (gzsl)");
    train->add_option("--lr", ts.learning_rate, "Adam learning rate");
    train->add_option("--alpha", ts.alpha, "distance sharpness in exp(-alpha*d^2)");
    train->add_option("--lambda", ts.lambda, "L2 penalty weight");
    train->add_option("--w-neg", ts.w_neg, "weight of the negative-pair formula");
    train->add_option("--p-agg", ts.p_agg, "formula-level aggregation exponent");
    train->add_option("--p-forall", ts.p_forall, "quantifier aggregation exponent");
    train->add_option("--seed", ts.seed, "RNG seed (fallback: PROTO_LTN_SEED, then 0)");
    train->add_option("--hidden", ts.hidden, "encoder hidden width (gzsl)");
    train->add_option("--init-stddev", ts.init_stddev, "weight init stddev");
    train->add_option("--n-way", ts.n_way, "episode classes (fsl)");
    train->add_option("--k-shot", ts.k_shot, "support examples per class (fsl)");
    train->add_option("--n-query", ts.n_query, "query examples per class (fsl)");

    // eval -------------------------------------------------------------
    std::string eval_data, eval_ckpt, eval_out;
    double eval_alpha = 1e-5;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test splits");
    eval->add_option("--data", eval_data, "dataset directory or JSON manifest")->required();
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--out", eval_out, "output directory")->required();
    eval->add_option("--alpha", eval_alpha, "distance sharpness (does not change rankings)");

    // gradcheck --------------------------------------------------------
    double gc_eps = 1e-5, gc_tol = 1e-4;
    std::int64_t gc_seed = 0;
    long long gc_episodes = 20;
    bool gc_fault = false, gc_verbose = false;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of all gradients");
    gradcheck->add_option("--eps", gc_eps, "central-difference step");
    gradcheck->add_option("--tol", gc_tol, "max relative error allowed");
    gradcheck->add_option("--seed", gc_seed, "RNG seed (fallback: PROTO_LTN_SEED, then 0)");
    gradcheck->add_option("--episodes", gc_episodes, "number of random episodes");
    gradcheck->add_flag("--inject-fault", gc_fault,
                        "add a deliberately wrong check (negative control)");
    gradcheck->add_flag("--verbose", gc_verbose, "print every check");

    // synth ------------------------------------------------------------
    long long sy_seen = 10, sy_unseen = 5, sy_attr = 16, sy_feat = 32, sy_per = 50;
    double sy_noise = 0.01;
    std::int64_t sy_seed = 0;
    std::string sy_out;
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--seen", sy_seen, "seen classes");
    synth->add_option("--unseen", sy_unseen, "unseen classes");
    synth->add_option("--attr-dim", sy_attr, "attribute width");
    synth->add_option("--feat-dim", sy_feat, "feature width");
    synth->add_option("--per-class", sy_per, "instances per class");
    synth->add_option("--noise", sy_noise, "within-class feature stddev");
    synth->add_option("--seed", sy_seed, "RNG seed (fallback: PROTO_LTN_SEED, then 0)");
    synth->add_option("--out", sy_out, "output directory")->required();

    // export-prototypes ------------------------------------------------
    std::string ex_data, ex_ckpt, ex_out;
    CLI::App* exportp = app.add_subcommand("export-prototypes",
                                           "Write every class prototype as CSV");
    exportp->add_option("--data", ex_data, "dataset directory or JSON manifest")->required();
    exportp->add_option("--checkpoint", ex_ckpt, "checkpoint file")->required();
    exportp->add_option("--out", ex_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train)) return run_train(train, ts, train_config, train_out);
        if (app.got_subcommand(eval)) return run_eval(eval_data, eval_ckpt, eval_out, eval_alpha);
        if (app.got_subcommand(gradcheck)) {
            if (!gradcheck->count("--seed"))
                if (auto v = env_seed()) gc_seed = *v;
            return run_gradcheck(gc_eps, gc_seed, gc_episodes, gc_tol, gc_fault, gc_verbose);
        }
        if (app.got_subcommand(synth)) {
            if (!synth->count("--seed"))
                if (auto v = env_seed()) sy_seed = *v;
            return run_synth(sy_seen, sy_unseen, sy_attr, sy_feat, sy_per, sy_noise, sy_seed,
                             sy_out);
        }
        if (app.got_subcommand(exportp)) return run_export_prototypes(ex_data, ex_ckpt, ex_out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const protoltn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;  // unreachable with require_subcommand(1)
}
