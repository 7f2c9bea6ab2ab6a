#include "edgescore/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "edgescore/numtext.hpp"
#include "edgescore/rng.hpp"

namespace edgescore::tabular {

std::optional<std::size_t> TabularDataset::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (specs[i].name == name) return i;
    return std::nullopt;
}

std::optional<std::size_t> TabularDataset::target_index() const {
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (specs[i].kind == VarKind::BinaryTarget) return i;
    return std::nullopt;
}

std::vector<int> TabularDataset::labels() const {
    auto t = target_index();
    require(t.has_value(), ErrorCode::MissingColumn, "dataset has no binary target column");
    std::vector<int> out(n_rows());
    for (std::size_t r = 0; r < n_rows(); ++r) {
        double v = at(r, *t);
        require(v == 0.0 || v == 1.0, ErrorCode::InvalidTargetValue,
                "target value " + format_double(v) + " in row " + std::to_string(r + 1));
        out[r] = v == 1.0 ? 1 : 0;
    }
    return out;
}

std::size_t TabularDataset::count_label(int label) const {
    auto ls = labels();
    return static_cast<std::size_t>(std::count(ls.begin(), ls.end(), label));
}

DatasetSummary summarize(const TabularDataset& ds) {
    DatasetSummary s;
    s.n_rows = ds.n_rows();
    s.positives = ds.count_label(1);
    s.feature_cols = ds.n_cols() - (ds.target_index() ? 1 : 0);
    s.prior = s.n_rows == 0 ? 0.0 : static_cast<double>(s.positives) / static_cast<double>(s.n_rows);
    return s;
}

namespace {

// One CSV record, quotes resolved. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    int c = in.get();
    if (c == EOF) return false;
    std::string cell;
    bool quoted = false;
    for (;; c = in.get()) {
        if (quoted) {
            if (c == EOF) break; // unterminated quote: take what we have
            if (c == '"') {
                if (in.peek() == '"') { cell.push_back('"'); in.get(); }
                else quoted = false;
            } else {
                cell.push_back(static_cast<char>(c));
            }
            continue;
        }
        if (c == '"' && cell.empty()) { quoted = true; continue; }
        if (c == ',') { fields.push_back(std::move(cell)); cell.clear(); continue; }
        if (c == '\r') { if (in.peek() == '\n') in.get(); break; }
        if (c == '\n' || c == EOF) break;
        cell.push_back(static_cast<char>(c));
    }
    fields.push_back(std::move(cell));
    return true;
}

bool blank_record(const std::vector<std::string>& fields) {
    return fields.size() == 1 && fields[0].empty();
}

} // namespace

TabularDataset load_csv(const std::string& path, const std::string& target_column,
                        const std::vector<std::string>& drop_columns) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::IoError, "cannot open " + path);

    std::vector<std::string> header;
    if (!read_record(in, header) || blank_record(header))
        raise(ErrorCode::EmptyFile, path);

    std::vector<bool> keep(header.size(), true);
    for (const auto& name : drop_columns) {
        auto it = std::find(header.begin(), header.end(), name);
        require(it != header.end(), ErrorCode::MissingColumn, name);
        keep[static_cast<std::size_t>(it - header.begin())] = false;
    }
    auto target_it = std::find(header.begin(), header.end(), target_column);
    require(target_it != header.end(), ErrorCode::MissingColumn, target_column);
    std::size_t target_raw = static_cast<std::size_t>(target_it - header.begin());
    require(keep[target_raw], ErrorCode::MissingColumn,
            "target column " + target_column + " is in the drop list");

    TabularDataset ds;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!keep[i]) continue;
        VariableSpec spec;
        spec.name = header[i];
        spec.kind = i == target_raw ? VarKind::BinaryTarget : VarKind::Numeric;
        ds.specs.push_back(std::move(spec));
    }

    std::vector<std::string> fields;
    std::size_t data_row = 0;
    while (read_record(in, fields)) {
        if (blank_record(fields)) continue; // tolerate a trailing newline
        ++data_row;
        require(fields.size() == header.size(), ErrorCode::NonNumericCell,
                "row " + std::to_string(data_row) + " has " + std::to_string(fields.size()) +
                    " fields, expected " + std::to_string(header.size()));
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (!keep[i]) continue;
            auto v = parse_double(fields[i]);
            require(v.has_value(), ErrorCode::NonNumericCell,
                    "row " + std::to_string(data_row) + ", column " + header[i] + ": \"" +
                        fields[i] + "\"");
            if (i == target_raw)
                require(*v == 0.0 || *v == 1.0, ErrorCode::InvalidTargetValue,
                        "row " + std::to_string(data_row) + ": \"" + fields[i] + "\"");
            ds.values.push_back(*v);
        }
        ds.provenance.push_back(data_row - 1);
    }
    require(ds.n_rows() > 0, ErrorCode::EmptyFile, path + " has a header but no data rows");
    return ds;
}

bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
    return read_record(in, fields);
}

TabularDataset load_csv_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::IoError, "cannot open " + path);

    std::vector<std::string> header;
    if (!read_record(in, header) || blank_record(header))
        raise(ErrorCode::EmptyFile, path);

    TabularDataset ds;
    for (const auto& name : header) ds.specs.push_back({name, VarKind::Numeric, "BEST12"});

    std::vector<std::string> fields;
    std::size_t data_row = 0;
    while (read_record(in, fields)) {
        if (blank_record(fields)) continue;
        ++data_row;
        require(fields.size() == header.size(), ErrorCode::NonNumericCell,
                "row " + std::to_string(data_row) + " has " + std::to_string(fields.size()) +
                    " fields, expected " + std::to_string(header.size()));
        for (std::size_t i = 0; i < fields.size(); ++i) {
            auto v = parse_double(fields[i]);
            require(v.has_value(), ErrorCode::NonNumericCell,
                    "row " + std::to_string(data_row) + ", column " + header[i] + ": \"" +
                        fields[i] + "\"");
            ds.values.push_back(*v);
        }
        ds.provenance.push_back(data_row - 1);
    }
    require(ds.n_rows() > 0, ErrorCode::EmptyFile, path + " has a header but no data rows");
    return ds;
}

void write_csv(const TabularDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::IoError, "cannot open " + path + " for writing");
    for (std::size_t i = 0; i < ds.specs.size(); ++i) {
        if (i) out << ',';
        out << ds.specs[i].name;
    }
    out << '\n';
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        for (std::size_t c = 0; c < ds.n_cols(); ++c) {
            if (c) out << ',';
            out << format_double(ds.at(r, c));
        }
        out << '\n';
    }
    require(out.good(), ErrorCode::IoError, "write failed for " + path);
}

std::pair<TabularDataset, TabularDataset> stratified_split(const TabularDataset& ds, double ratio,
                                                           std::uint64_t seed) {
    require(ratio > 0.0 && ratio < 1.0, ErrorCode::Precondition, "split ratio must be in (0,1)");
    auto labels = ds.labels();

    std::vector<std::size_t> idx_by_class[2];
    for (std::size_t r = 0; r < labels.size(); ++r)
        idx_by_class[labels[r]].push_back(r);
    for (int cls = 0; cls < 2; ++cls)
        require(idx_by_class[cls].size() >= 2, ErrorCode::ClassTooSmall,
                "class " + std::to_string(cls) + " has " +
                    std::to_string(idx_by_class[cls].size()) + " rows, need at least 2");

    std::vector<bool> in_train(ds.n_rows(), false);
    Rng rng(seed);
    for (int cls = 0; cls < 2; ++cls) {
        auto& idx = idx_by_class[cls];
        rng.shuffle(idx);
        auto want = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
        want = std::clamp<std::size_t>(want, 1, idx.size() - 1); // both splits keep every class
        for (std::size_t i = 0; i < want; ++i) in_train[idx[i]] = true;
    }

    TabularDataset train, test;
    train.specs = test.specs = ds.specs;
    for (std::size_t r = 0; r < ds.n_rows(); ++r)
        (in_train[r] ? train : test).append_row(ds.row(r), ds.provenance[r]);
    return {std::move(train), std::move(test)};
}

TabularDataset oversample_balance(const TabularDataset& ds, std::uint64_t seed) {
    auto labels = ds.labels();
    std::vector<std::size_t> idx_by_class[2];
    for (std::size_t r = 0; r < labels.size(); ++r)
        idx_by_class[labels[r]].push_back(r);
    require(!idx_by_class[0].empty() && !idx_by_class[1].empty(), ErrorCode::SingleClass,
            "both classes must be present");

    TabularDataset out = ds;
    int minority = idx_by_class[1].size() < idx_by_class[0].size() ? 1 : 0;
    std::size_t deficit = idx_by_class[1 - minority].size() - idx_by_class[minority].size();
    if (deficit == 0) return out;

    const auto& pool = idx_by_class[minority];
    Rng rng(seed);
    for (std::size_t i = 0; i < deficit; ++i) {
        std::size_t pick = pool[rng.below(pool.size())];
        out.append_row(ds.row(pick), ds.provenance[pick]);
    }
    return out;
}

Standardizer fit_standardizer(const TabularDataset& ds) {
    require(ds.n_rows() > 0, ErrorCode::Precondition, "cannot standardize an empty dataset");
    Standardizer st;
    st.specs = ds.specs;
    st.mean.assign(ds.n_cols(), 0.0);
    st.stddev.assign(ds.n_cols(), 0.0);
    auto n = static_cast<double>(ds.n_rows());
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
        if (ds.specs[c].kind == VarKind::BinaryTarget) { st.stddev[c] = 1.0; continue; }
        double sum = 0.0;
        for (std::size_t r = 0; r < ds.n_rows(); ++r) sum += ds.at(r, c);
        st.mean[c] = sum / n;
        double ss = 0.0;
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            double d = ds.at(r, c) - st.mean[c];
            ss += d * d;
        }
        st.stddev[c] = std::sqrt(ss / n);
    }
    return st;
}

namespace {

void check_specs(const Standardizer& st, const TabularDataset& ds) {
    require(st.specs == ds.specs, ErrorCode::ColumnMismatch,
            "dataset columns differ from the ones the standardizer was fit on");
}

} // namespace

TabularDataset apply_standardizer(const Standardizer& st, const TabularDataset& ds) {
    check_specs(st, ds);
    TabularDataset out = ds;
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
        if (ds.specs[c].kind == VarKind::BinaryTarget) continue;
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            double& v = out.values[r * ds.n_cols() + c];
            v = st.stddev[c] == 0.0 ? 0.0 : (v - st.mean[c]) / st.stddev[c];
        }
    }
    return out;
}

TabularDataset invert_standardizer(const Standardizer& st, const TabularDataset& ds) {
    check_specs(st, ds);
    TabularDataset out = ds;
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
        if (ds.specs[c].kind == VarKind::BinaryTarget) continue;
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            double& v = out.values[r * ds.n_cols() + c];
            v = v * st.stddev[c] + st.mean[c];
        }
    }
    return out;
}

TabularDataset gen_surrogate(std::size_t n_rows, double positive_prior, std::size_t n_features,
                             std::uint64_t seed, const std::string& target_name) {
    require(positive_prior > 0.0 && positive_prior < 0.5, ErrorCode::Precondition,
            "positive prior must be in (0, 0.5)");
    require(n_features >= 2, ErrorCode::Precondition, "need at least 2 features");
    auto n_pos = static_cast<std::size_t>(
        std::llround(positive_prior * static_cast<double>(n_rows)));
    require(n_pos >= 1 && n_pos < n_rows, ErrorCode::Precondition,
            "positive count rounds to an empty class");

    TabularDataset ds;
    for (std::size_t f = 0; f < n_features; ++f)
        ds.specs.push_back({"v" + std::to_string(f + 1), VarKind::Numeric, "BEST12"});
    ds.specs.push_back({target_name, VarKind::BinaryTarget, "BEST12"});

    // Each mixture component shifts its own feature subset; overlap is fine.
    Rng setup = Rng::derive(seed, 1);
    std::size_t subset_size = std::max<std::size_t>(2, n_features / 3);
    struct Component { std::vector<std::size_t> features; std::vector<double> offsets; };
    std::vector<Component> components(3);
    for (auto& comp : components) {
        std::vector<std::size_t> all(n_features);
        std::iota(all.begin(), all.end(), std::size_t{0});
        setup.shuffle(all);
        comp.features.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(subset_size));
        for (std::size_t i = 0; i < subset_size; ++i)
            comp.offsets.push_back(setup.uniform01() < 0.5 ? -2.0 : 2.0);
    }

    std::vector<std::size_t> order(n_rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng placement = Rng::derive(seed, 2);
    placement.shuffle(order);
    std::vector<bool> is_pos(n_rows, false);
    for (std::size_t i = 0; i < n_pos; ++i) is_pos[order[i]] = true;

    Rng draw = Rng::derive(seed, 3);
    std::vector<double> row(n_features + 1);
    for (std::size_t r = 0; r < n_rows; ++r) {
        for (std::size_t f = 0; f < n_features; ++f) row[f] = draw.normal();
        if (is_pos[r]) {
            const auto& comp = components[draw.below(components.size())];
            for (std::size_t i = 0; i < comp.features.size(); ++i)
                row[comp.features[i]] += comp.offsets[i];
        }
        row[n_features] = is_pos[r] ? 1.0 : 0.0;
        ds.append_row(row, r);
    }
    return ds;
}

TabularDataset features_only(const TabularDataset& ds) {
    TabularDataset out;
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < ds.n_cols(); ++c)
        if (ds.specs[c].kind != VarKind::BinaryTarget) {
            out.specs.push_back(ds.specs[c]);
            cols.push_back(c);
        }
    out.values.reserve(ds.n_rows() * cols.size());
    for (std::size_t r = 0; r < ds.n_rows(); ++r)
        for (std::size_t c : cols) out.values.push_back(ds.at(r, c));
    out.provenance = ds.provenance;
    return out;
}

} // namespace edgescore::tabular
