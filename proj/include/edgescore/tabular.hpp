#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edgescore/errors.hpp"

namespace edgescore::tabular {

enum class VarKind : std::uint8_t {
    Numeric = 0,
    BinaryTarget = 1,
};

struct VariableSpec {
    std::string name;
    VarKind kind = VarKind::Numeric;
    std::string format = "BEST12";

    bool operator==(const VariableSpec&) const = default;
};

// Rows produced by synthesis carry this bit in their provenance tag so that
// evaluation code can assert no generated row leaks into a test split.
inline constexpr std::uint64_t kSyntheticTag = 1ULL << 63;

// Column-typed numeric table; immutable by convention once built (every
// operation returns a new dataset).
class TabularDataset {
public:
    std::vector<VariableSpec> specs;
    std::vector<double> values;          // row-major, n_rows × n_cols
    std::vector<std::uint64_t> provenance; // one tag per row

    std::size_t n_cols() const { return specs.size(); }
    std::size_t n_rows() const { return specs.empty() ? 0 : values.size() / specs.size(); }

    double at(std::size_t row, std::size_t col) const { return values[row * n_cols() + col]; }
    std::span<const double> row(std::size_t r) const {
        return {values.data() + r * n_cols(), n_cols()};
    }

    void append_row(std::span<const double> row, std::uint64_t tag) {
        values.insert(values.end(), row.begin(), row.end());
        provenance.push_back(tag);
    }

    std::optional<std::size_t> column_index(std::string_view name) const;
    std::optional<std::size_t> target_index() const;

    // Target labels as 0/1; requires a binary-target column.
    std::vector<int> labels() const;
    std::size_t count_label(int label) const;
};

struct DatasetSummary {
    std::size_t n_rows = 0;
    std::size_t positives = 0;
    std::size_t feature_cols = 0;
    double prior = 0.0;
};

DatasetSummary summarize(const TabularDataset& ds);

TabularDataset load_csv(const std::string& path, const std::string& target_column,
                        const std::vector<std::string>& drop_columns);

void write_csv(const TabularDataset& ds, const std::string& path);

// One CSV record with quotes resolved; false at end of input. Exposed so
// stream consumers parse the same dialect the loaders do.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields);

// Pure feature CSV: header + numeric rows, no target column.
TabularDataset load_csv_features(const std::string& path);

std::pair<TabularDataset, TabularDataset> stratified_split(const TabularDataset& ds, double ratio,
                                                           std::uint64_t seed);

TabularDataset oversample_balance(const TabularDataset& ds, std::uint64_t seed);

struct Standardizer {
    std::vector<VariableSpec> specs;
    std::vector<double> mean;
    std::vector<double> stddev; // population; 0 marks a constant column
};

Standardizer fit_standardizer(const TabularDataset& ds);
TabularDataset apply_standardizer(const Standardizer& st, const TabularDataset& ds);
TabularDataset invert_standardizer(const Standardizer& st, const TabularDataset& ds);

// Fixed-seed stand-in for the credit-card data: Gaussian majority, a
// 3-component shifted-Gaussian minority, exact positive count.
TabularDataset gen_surrogate(std::size_t n_rows, double positive_prior, std::size_t n_features,
                             std::uint64_t seed, const std::string& target_name = "fraud");

// Feature columns only, original order; drops the binary target.
TabularDataset features_only(const TabularDataset& ds);

} // namespace edgescore::tabular
