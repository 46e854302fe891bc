#pragma once

// Dataset ingestion and synthesis for the zero-shot splits: CSV feature and
// attribute tables, a JSON split manifest, a deterministic synthetic
// generator, and split validation.
//
// Formats:
//   features.csv    header `id,label,f0,...,f{D-1}`, one instance per row
//   attributes.csv  header `label,a0,...,a{A-1}`, one class per row
//   splits.json     {"seen":[labels],"unseen":[labels],"train":[ids],
//                    "test_seen":[ids],"test_unseen":[ids]}
// Numeric text uses shortest round-trip decimal so that write -> read is
// bit-exact.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "protoltn/errors.hpp"
#include "protoltn/logic.hpp"
#include "protoltn/tensor.hpp"
#include "protoltn/util.hpp"

namespace protoltn {

// Features, labels, per-class attributes and the seen/unseen split indices.
// Class labels are dense 0..C-1 in file order of the sorted original
// vocabulary; `original_labels[dense]` recovers the source label.
struct SplitDataset {
    Tensor features;                       // [N x D]
    std::vector<Label> instance_labels;    // dense, one per row
    std::vector<std::int64_t> instance_ids;  // source id column, one per row
    Tensor class_attributes;               // [C x A], row = dense class
    std::vector<Label> original_labels;    // dense -> original
    std::vector<Label> seen_classes;       // dense ids, ascending
    std::vector<Label> unseen_classes;     // dense ids, ascending
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_seen_idx;
    std::vector<std::size_t> test_unseen_idx;

    std::size_t num_instances() const { return instance_labels.size(); }
    std::size_t num_classes() const { return original_labels.size(); }
    std::size_t feat_dim() const { return features.shape()[1]; }
    std::size_t attr_dim() const { return class_attributes.shape()[1]; }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

// Checks every structural invariant and returns the violations found;
// an empty result means the dataset is coherent.
inline std::vector<std::string> validate_splits(const SplitDataset& ds) {
    std::vector<std::string> violations;
    const std::size_t n = ds.num_instances();
    const Label c = static_cast<Label>(ds.num_classes());

    std::set<Label> seen(ds.seen_classes.begin(), ds.seen_classes.end());
    std::set<Label> unseen(ds.unseen_classes.begin(), ds.unseen_classes.end());
    for (Label l : seen)
        if (unseen.count(l)) {
            violations.push_back("seen-unseen-overlap");
            break;
        }
    for (Label l : ds.instance_labels)
        if (l < 0 || l >= c) {
            violations.push_back("missing-attribute");
            break;
        }
    for (Label l : ds.instance_labels)
        if (!seen.count(l) && !unseen.count(l)) {
            violations.push_back("class-unassigned");
            break;
        }

    auto in_range = [&](const std::vector<std::size_t>& idx) {
        for (std::size_t i : idx)
            if (i >= n) return false;
        return true;
    };
    if (!in_range(ds.train_idx) || !in_range(ds.test_seen_idx) || !in_range(ds.test_unseen_idx))
        violations.push_back("index-out-of-range");
    else {
        std::set<std::size_t> all;
        std::size_t total = 0;
        for (const auto* idx : {&ds.train_idx, &ds.test_seen_idx, &ds.test_unseen_idx}) {
            all.insert(idx->begin(), idx->end());
            total += idx->size();
        }
        if (all.size() != total) violations.push_back("duplicate-index");

        auto labels_within = [&](const std::vector<std::size_t>& idx, const std::set<Label>& cls) {
            for (std::size_t i : idx)
                if (!cls.count(ds.instance_labels[i])) return false;
            return true;
        };
        if (!labels_within(ds.train_idx, seen)) violations.push_back("train-leak");
        if (!labels_within(ds.test_seen_idx, seen)) violations.push_back("test-seen-leak");
        if (!labels_within(ds.test_unseen_idx, unseen)) violations.push_back("test-unseen-leak");
    }
    if (ds.test_unseen_idx.empty()) violations.push_back("no-unseen-test");
    return violations;
}

// ---------------------------------------------------------------------------
// CSV / JSON loading
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

inline void expect_header(const std::string& path, const std::string& line,
                          const std::vector<std::string>& fixed, const std::string& prefix,
                          std::size_t count) {
    auto fields = split_csv(line);
    if (fields.size() != fixed.size() + count)
        throw ParseError(path, 1, "expected " + std::to_string(fixed.size() + count) +
                                      " header fields, got " + std::to_string(fields.size()));
    for (std::size_t i = 0; i < fixed.size(); ++i)
        if (trim(fields[i]) != fixed[i])
            throw ParseError(path, 1, "header field " + std::to_string(i) + " must be '" +
                                          fixed[i] + "'");
    for (std::size_t i = 0; i < count; ++i)
        if (trim(fields[fixed.size() + i]) != prefix + std::to_string(i))
            throw ParseError(path, 1, "header field " + std::to_string(fixed.size() + i) +
                                          " must be '" + prefix + std::to_string(i) + "'");
}

}  // namespace detail

inline SplitDataset load_csv_dataset(const std::string& features_path,
                                     const std::string& attributes_path,
                                     const std::string& splits_path) {
    // Attributes define the class vocabulary.
    auto attr_lines = detail::read_lines(attributes_path);
    if (attr_lines.size() < 2) throw ParseError(attributes_path, 1, "no attribute rows");
    auto attr_header = split_csv(attr_lines[0]);
    if (attr_header.size() < 2 || trim(attr_header[0]) != "label")
        throw ParseError(attributes_path, 1, "header must start with 'label,a0,...'");
    const std::size_t a_dim = attr_header.size() - 1;
    detail::expect_header(attributes_path, attr_lines[0], {"label"}, "a", a_dim);

    std::map<Label, std::vector<double>> attr_by_label;  // ordered -> sorted vocabulary
    for (std::size_t ln = 1; ln < attr_lines.size(); ++ln) {
        if (trim(attr_lines[ln]).empty()) continue;
        auto fields = split_csv(attr_lines[ln]);
        if (fields.size() != 1 + a_dim)
            throw ParseError(attributes_path, static_cast<long>(ln + 1),
                             "expected " + std::to_string(1 + a_dim) + " fields, got " +
                                 std::to_string(fields.size()));
        Label label;
        if (!try_parse_int64(trim(fields[0]), label))
            throw ParseError(attributes_path, static_cast<long>(ln + 1), "bad label field");
        if (attr_by_label.count(label))
            throw ParseError(attributes_path, static_cast<long>(ln + 1),
                             "duplicate attribute row for class " + std::to_string(label));
        std::vector<double> row(a_dim);
        for (std::size_t j = 0; j < a_dim; ++j)
            if (!try_parse_double(trim(fields[1 + j]), row[j]))
                throw ParseError(attributes_path, static_cast<long>(ln + 1),
                                 "bad numeric field " + std::to_string(1 + j));
        attr_by_label.emplace(label, std::move(row));
    }
    if (attr_by_label.empty()) throw ParseError(attributes_path, 1, "no attribute rows");

    SplitDataset ds;
    std::map<Label, Label> to_dense;
    {
        std::vector<double> attr_data;
        attr_data.reserve(attr_by_label.size() * a_dim);
        for (const auto& [label, row] : attr_by_label) {
            to_dense.emplace(label, static_cast<Label>(ds.original_labels.size()));
            ds.original_labels.push_back(label);
            attr_data.insert(attr_data.end(), row.begin(), row.end());
        }
        ds.class_attributes = Tensor::constant({attr_by_label.size(), a_dim}, std::move(attr_data));
    }

    // Feature rows.
    auto feat_lines = detail::read_lines(features_path);
    if (feat_lines.size() < 2) throw ParseError(features_path, 1, "no feature rows");
    auto feat_header = split_csv(feat_lines[0]);
    if (feat_header.size() < 3) throw ParseError(features_path, 1, "header must be 'id,label,f0,...'");
    const std::size_t d_dim = feat_header.size() - 2;
    detail::expect_header(features_path, feat_lines[0], {"id", "label"}, "f", d_dim);

    std::vector<double> feat_data;
    std::map<std::int64_t, std::size_t> row_by_id;
    for (std::size_t ln = 1; ln < feat_lines.size(); ++ln) {
        if (trim(feat_lines[ln]).empty()) continue;
        auto fields = split_csv(feat_lines[ln]);
        if (fields.size() != 2 + d_dim)
            throw ParseError(features_path, static_cast<long>(ln + 1),
                             "expected " + std::to_string(2 + d_dim) + " fields, got " +
                                 std::to_string(fields.size()));
        std::int64_t id;
        Label label;
        if (!try_parse_int64(trim(fields[0]), id))
            throw ParseError(features_path, static_cast<long>(ln + 1), "bad id field");
        if (!try_parse_int64(trim(fields[1]), label))
            throw ParseError(features_path, static_cast<long>(ln + 1), "bad label field");
        auto dense_it = to_dense.find(label);
        if (dense_it == to_dense.end())
            throw ParseError(features_path, static_cast<long>(ln + 1),
                             "no attribute row for class " + std::to_string(label));
        if (!row_by_id.emplace(id, ds.instance_ids.size()).second)
            throw ParseError(features_path, static_cast<long>(ln + 1),
                             "duplicate instance id " + std::to_string(id));
        ds.instance_ids.push_back(id);
        ds.instance_labels.push_back(dense_it->second);
        for (std::size_t j = 0; j < d_dim; ++j) {
            double v;
            if (!try_parse_double(trim(fields[2 + j]), v))
                throw ParseError(features_path, static_cast<long>(ln + 1),
                                 "bad numeric field " + std::to_string(2 + j));
            feat_data.push_back(v);
        }
    }
    if (ds.instance_ids.empty()) throw ParseError(features_path, 1, "no feature rows");
    ds.features = Tensor::constant({ds.instance_ids.size(), d_dim}, std::move(feat_data));

    // Split manifest.
    nlohmann::json js;
    {
        std::ifstream in(splits_path, std::ios::binary);
        if (!in) throw IoError("cannot open " + splits_path);
        try {
            js = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(splits_path + ": " + e.what());
        }
    }
    if (!js.is_object()) throw ParseError(splits_path + ": top level must be an object");
    const std::set<std::string> known_keys = {"seen", "unseen", "train", "test_seen",
                                             "test_unseen"};
    for (const auto& [key, _] : js.items())
        if (!known_keys.count(key)) throw ParseError(splits_path + ": unknown key '" + key + "'");
    for (const std::string& key : known_keys)
        if (!js.contains(key) || !js[key].is_array())
            throw ParseError(splits_path + ": missing array '" + key + "'");

    auto class_list = [&](const char* key) {
        std::vector<Label> out;
        for (const auto& v : js[key]) {
            if (!v.is_number_integer())
                throw ParseError(splits_path + ": non-integer entry in '" + std::string(key) + "'");
            Label original = v.get<Label>();
            auto it = to_dense.find(original);
            if (it == to_dense.end())
                throw ParseError(splits_path + ": '" + std::string(key) +
                                 "' names unknown class " + std::to_string(original));
            out.push_back(it->second);
        }
        std::sort(out.begin(), out.end());
        return out;
    };
    ds.seen_classes = class_list("seen");
    ds.unseen_classes = class_list("unseen");
    if (ds.seen_classes.size() + ds.unseen_classes.size() != ds.num_classes())
        throw ParseError(splits_path +
                         ": seen/unseen must partition the attribute classes exactly");

    auto index_list = [&](const char* key) {
        std::vector<std::size_t> out;
        for (const auto& v : js[key]) {
            if (!v.is_number_integer())
                throw ParseError(splits_path + ": non-integer entry in '" + std::string(key) + "'");
            std::int64_t id = v.get<std::int64_t>();
            auto it = row_by_id.find(id);
            if (it == row_by_id.end())
                throw ParseError(splits_path + ": '" + std::string(key) +
                                 "' references unknown instance id " + std::to_string(id));
            out.push_back(it->second);
        }
        return out;
    };
    ds.train_idx = index_list("train");
    ds.test_seen_idx = index_list("test_seen");
    ds.test_unseen_idx = index_list("test_unseen");

    // Everything except an absent unseen test list is fatal here; GZSL entry
    // points re-check that one before evaluation.
    auto violations = validate_splits(ds);
    std::erase(violations, "no-unseen-test");
    if (!violations.empty()) {
        std::string msg = splits_path + ": invalid splits:";
        for (const auto& v : violations) msg += " " + v;
        throw ParseError(msg);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Saving (round-trip counterpart of the loader; also used by the generator)
// ---------------------------------------------------------------------------

inline void save_dataset(const SplitDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir);

    {
        std::ofstream out(dir + "/features.csv", std::ios::binary);
        if (!out) throw IoError("cannot write " + dir + "/features.csv");
        out << "id,label";
        for (std::size_t j = 0; j < ds.feat_dim(); ++j) out << ",f" << j;
        out << "\n";
        for (std::size_t i = 0; i < ds.num_instances(); ++i) {
            out << ds.instance_ids[i] << ","
                << ds.original_labels[static_cast<std::size_t>(ds.instance_labels[i])];
            for (std::size_t j = 0; j < ds.feat_dim(); ++j)
                out << "," << format_double(ds.features.at(i, j));
            out << "\n";
        }
    }
    {
        std::ofstream out(dir + "/attributes.csv", std::ios::binary);
        if (!out) throw IoError("cannot write " + dir + "/attributes.csv");
        out << "label";
        for (std::size_t j = 0; j < ds.attr_dim(); ++j) out << ",a" << j;
        out << "\n";
        for (std::size_t c = 0; c < ds.num_classes(); ++c) {
            out << ds.original_labels[c];
            for (std::size_t j = 0; j < ds.attr_dim(); ++j)
                out << "," << format_double(ds.class_attributes.at(c, j));
            out << "\n";
        }
    }
    {
        nlohmann::json js;
        auto originals = [&](const std::vector<Label>& dense) {
            std::vector<Label> out;
            for (Label d : dense) out.push_back(ds.original_labels[static_cast<std::size_t>(d)]);
            return out;
        };
        auto ids = [&](const std::vector<std::size_t>& rows) {
            std::vector<std::int64_t> out;
            for (std::size_t r : rows) out.push_back(ds.instance_ids[r]);
            return out;
        };
        js["seen"] = originals(ds.seen_classes);
        js["unseen"] = originals(ds.unseen_classes);
        js["train"] = ids(ds.train_idx);
        js["test_seen"] = ids(ds.test_seen_idx);
        js["test_unseen"] = ids(ds.test_unseen_idx);
        std::ofstream out(dir + "/splits.json", std::ios::binary);
        if (!out) throw IoError("cannot write " + dir + "/splits.json");
        out << js.dump(2) << "\n";
    }
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

// Attributes drawn uniform in [0,1]^A; a fixed non-negative linear map W
// (D x A) sends each class attribute to a feature centroid; instances are the
// centroid plus N(0, sigma^2) noise.  All unseen instances go to the unseen
// test split; seen instances split 80/20 into train / seen test.  W >= 0
// keeps centroids in the non-negative orthant, reachable by an encoder whose
// final activation is a rectifier.
inline SplitDataset generate_synthetic(std::size_t num_seen, std::size_t num_unseen,
                                       std::size_t attr_dim, std::size_t feat_dim,
                                       std::size_t per_class, double noise,
                                       std::uint64_t seed) {
    if (num_seen == 0 || num_unseen == 0 || attr_dim == 0 || feat_dim == 0 || per_class == 0)
        throw ContractError("generate_synthetic: all counts must be >= 1");
    if (noise < 0.0) throw ContractError("generate_synthetic: noise must be non-negative");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::size_t num_classes = num_seen + num_unseen;
    SplitDataset ds;

    std::vector<double> attrs(num_classes * attr_dim);
    for (auto& v : attrs) v = uniform(rng);
    ds.class_attributes = Tensor::constant({num_classes, attr_dim}, attrs);

    std::vector<double> w(feat_dim * attr_dim);
    for (auto& v : w) v = uniform(rng);

    const std::size_t n_total = num_classes * per_class;
    std::vector<double> features(n_total * feat_dim);
    std::vector<double> centroid(feat_dim);
    std::size_t row = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t d = 0; d < feat_dim; ++d) {
            double acc = 0.0;
            for (std::size_t a = 0; a < attr_dim; ++a)
                acc += w[d * attr_dim + a] * attrs[c * attr_dim + a];
            centroid[d] = acc;
        }
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            for (std::size_t d = 0; d < feat_dim; ++d) {
                double v = centroid[d];
                if (noise > 0.0) v += noise * gauss(rng);
                features[row * feat_dim + d] = v;
            }
            ds.instance_labels.push_back(static_cast<Label>(c));
            ds.instance_ids.push_back(static_cast<std::int64_t>(row));
        }
    }
    ds.features = Tensor::constant({n_total, feat_dim}, std::move(features));

    for (std::size_t c = 0; c < num_classes; ++c) ds.original_labels.push_back(static_cast<Label>(c));
    for (std::size_t c = 0; c < num_seen; ++c) ds.seen_classes.push_back(static_cast<Label>(c));
    for (std::size_t c = num_seen; c < num_classes; ++c)
        ds.unseen_classes.push_back(static_cast<Label>(c));

    const std::size_t train_per_class = std::max<std::size_t>(1, per_class * 8 / 10);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const std::size_t base = c * per_class;
        if (c < num_seen) {
            for (std::size_t i = 0; i < per_class; ++i)
                (i < train_per_class ? ds.train_idx : ds.test_seen_idx).push_back(base + i);
        } else {
            for (std::size_t i = 0; i < per_class; ++i) ds.test_unseen_idx.push_back(base + i);
        }
    }
    return ds;
}

}  // namespace protoltn
