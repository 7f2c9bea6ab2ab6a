#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "edgescore/tabular.hpp"

namespace edgescore::gbt {

struct GbtParams {
    std::size_t n_rounds = 100;
    std::size_t max_depth = 4;
    double learning_rate = 0.1;
    double min_child_weight = 1.0;
    std::size_t n_bins = 256;
    double l2_reg = 1.0;
    // Exact split enumeration; quantile binning otherwise. Exact is only
    // sensible on small data.
    bool exact_splits = false;

    bool operator==(const GbtParams&) const = default;
};

struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1; // negative marks a leaf
    std::int32_t right = -1;
    double weight = 0.0;

    bool is_leaf() const { return left < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root
};

struct GbtModel {
    GbtParams params;
    std::size_t n_features = 0;
    double base_score = 0.0; // log-odds of the training prior
    std::vector<Tree> trees;
};

// Logistic-loss boosting over quantile-binned histograms. Deterministic for
// fixed (data, params, seed); split ties resolve to the lowest feature index,
// then the lowest threshold. When deviance_log is given it receives the mean
// logistic deviance before boosting and after every round.
GbtModel train_gbt(const tabular::TabularDataset& ds, const GbtParams& params,
                   std::uint64_t seed, std::vector<double>* deviance_log = nullptr);

// P(y=1) = sigmoid(base_score + sum of tree leaves); always strictly in (0,1).
double score_gbt(const GbtModel& model, std::span<const double> row);

// Scores feature rows in order; equals row-by-row scoring exactly.
std::vector<double> score_gbt_batch(const GbtModel& model, const tabular::TabularDataset& features);

double sigmoid(double x);

} // namespace edgescore::gbt
