#include "edgescore/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edgescore/errors.hpp"

namespace edgescore::gbt {

double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

namespace {

// Candidate thresholds for one feature, ascending. Every threshold lies
// strictly above at least one data value, so `x < t` always splits.
std::vector<double> build_thresholds(std::vector<double> column, const GbtParams& params) {
    std::sort(column.begin(), column.end());
    std::size_t distinct = column.empty() ? 0 : 1;
    for (std::size_t i = 1; i < column.size(); ++i)
        if (column[i] != column[i - 1]) ++distinct;

    std::vector<double> cuts;
    if (params.exact_splits || distinct <= params.n_bins) {
        cuts.reserve(distinct);
        for (std::size_t i = 0; i < column.size(); ++i)
            if (i == 0 || column[i] != column[i - 1]) cuts.push_back(column[i]);
    } else {
        // Quantile cut values over the full (duplicate-keeping) column.
        for (std::size_t k = 0; k < params.n_bins; ++k)
            cuts.push_back(column[k * column.size() / params.n_bins]);
        cuts.push_back(column.back());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    }

    std::vector<double> thresholds;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double mid = cuts[i] + (cuts[i + 1] - cuts[i]) / 2.0;
        if (mid > cuts[i]) thresholds.push_back(mid);
    }
    return thresholds;
}

struct SplitChoice {
    double gain = 0.0;
    std::size_t feature = 0;
    std::size_t threshold_index = 0;
    bool found = false;
};

struct Trainer {
    const GbtParams& params;
    std::size_t n_rows;
    std::size_t n_features;
    std::vector<std::vector<double>> columns;       // [feature][row]
    std::vector<std::vector<double>> thresholds;    // [feature] ascending
    std::vector<std::vector<std::uint32_t>> bins;   // [feature][row]
    std::vector<double> grad, hess;

    // Scratch histograms, reused across nodes.
    std::vector<double> hist_g, hist_h;
    std::vector<std::size_t> hist_n;

    double leaf_value(double g, double h) const {
        return -g / (h + params.l2_reg) * params.learning_rate;
    }

    static double score_term(double g, double h, double lambda) {
        return g * g / (h + lambda);
    }

    SplitChoice best_split(std::span<const std::uint32_t> rows, double g_total, double h_total) {
        SplitChoice best;
        const double parent = score_term(g_total, h_total, params.l2_reg);
        for (std::size_t f = 0; f < n_features; ++f) {
            const auto& t = thresholds[f];
            if (t.empty()) continue;
            const std::size_t n_slots = t.size() + 1;
            std::fill(hist_g.begin(), hist_g.begin() + static_cast<std::ptrdiff_t>(n_slots), 0.0);
            std::fill(hist_h.begin(), hist_h.begin() + static_cast<std::ptrdiff_t>(n_slots), 0.0);
            std::fill(hist_n.begin(), hist_n.begin() + static_cast<std::ptrdiff_t>(n_slots), 0);
            const auto& fbins = bins[f];
            for (std::uint32_t r : rows) {
                const std::uint32_t b = fbins[r];
                hist_g[b] += grad[r];
                hist_h[b] += hess[r];
                hist_n[b] += 1;
            }
            double g_left = 0.0, h_left = 0.0;
            std::size_t n_left = 0;
            for (std::size_t k = 0; k + 1 < n_slots; ++k) {
                g_left += hist_g[k];
                h_left += hist_h[k];
                n_left += hist_n[k];
                if (n_left == 0) continue;
                if (n_left == rows.size()) break;
                const double h_right = h_total - h_left;
                if (h_left < params.min_child_weight || h_right < params.min_child_weight)
                    continue;
                const double gain = (score_term(g_left, h_left, params.l2_reg) +
                                     score_term(g_total - g_left, h_right, params.l2_reg) -
                                     parent) /
                                    2.0;
                if (gain > 0.0 && (!best.found || gain > best.gain))
                    best = {gain, f, k, true};
            }
        }
        return best;
    }

    // Depth-first, left child before right; node indices are therefore a
    // deterministic function of the data alone.
    void build_node(Tree& tree, std::vector<std::uint32_t>& rows, std::size_t depth,
                    std::int32_t node_index) {
        double g = 0.0, h = 0.0;
        for (std::uint32_t r : rows) {
            g += grad[r];
            h += hess[r];
        }
        auto& node = tree.nodes[static_cast<std::size_t>(node_index)];
        if (depth >= params.max_depth || rows.size() < 2) {
            node.weight = leaf_value(g, h);
            return;
        }
        SplitChoice split = best_split(rows, g, h);
        if (!split.found || split.gain <= 0.0) {
            node.weight = leaf_value(g, h);
            return;
        }

        const double threshold = thresholds[split.feature][split.threshold_index];
        std::vector<std::uint32_t> left_rows, right_rows;
        left_rows.reserve(rows.size());
        right_rows.reserve(rows.size());
        for (std::uint32_t r : rows) {
            if (columns[split.feature][r] < threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();

        node.feature = static_cast<std::int32_t>(split.feature);
        node.threshold = threshold;
        const auto left_index = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        // `node` may dangle after emplace_back; re-index below.
        tree.nodes[static_cast<std::size_t>(node_index)].left = left_index;
        build_node(tree, left_rows, depth + 1, left_index);

        const auto right_index = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[static_cast<std::size_t>(node_index)].right = right_index;
        build_node(tree, right_rows, depth + 1, right_index);
    }
};

double tree_output(const Tree& tree, std::span<const double> row) {
    const TreeNode* node = &tree.nodes[0];
    while (!node->is_leaf()) {
        const std::size_t next = row[static_cast<std::size_t>(node->feature)] < node->threshold
                                     ? static_cast<std::size_t>(node->left)
                                     : static_cast<std::size_t>(node->right);
        node = &tree.nodes[next];
    }
    return node->weight;
}

double mean_deviance(std::span<const double> margins, std::span<const int> labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        double p = sigmoid(margins[i]);
        p = std::clamp(p, 1e-15, 1.0 - 1e-15);
        total += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(margins.size());
}

} // namespace

GbtModel train_gbt(const tabular::TabularDataset& ds, const GbtParams& params,
                   std::uint64_t /*seed: reserved, no subsampling yet*/,
                   std::vector<double>* deviance_log) {
    require(params.max_depth >= 1, ErrorCode::Precondition, "max_depth must be at least 1");
    require(params.learning_rate > 0.0 && params.learning_rate <= 1.0, ErrorCode::Precondition,
            "learning_rate must be in (0,1]");
    require(params.n_bins >= 2, ErrorCode::Precondition, "n_bins must be at least 2");

    const auto labels = ds.labels();
    const auto target = ds.target_index();
    require(target.has_value(), ErrorCode::MissingColumn, "training data has no target");
    const auto positives =
        static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    require(positives > 0 && positives < labels.size(), ErrorCode::SingleClass,
            "training data must contain both classes");

    Trainer tr{.params = params,
               .n_rows = ds.n_rows(),
               .n_features = ds.n_cols() - 1,
               .columns = {},
               .thresholds = {},
               .bins = {},
               .grad = {},
               .hess = {},
               .hist_g = {},
               .hist_h = {},
               .hist_n = {}};

    tr.columns.resize(tr.n_features);
    for (std::size_t f = 0, c = 0; c < ds.n_cols(); ++c) {
        if (c == *target) continue;
        tr.columns[f].resize(tr.n_rows);
        for (std::size_t r = 0; r < tr.n_rows; ++r) tr.columns[f][r] = ds.at(r, c);
        ++f;
    }

    std::size_t max_slots = 1;
    tr.thresholds.resize(tr.n_features);
    tr.bins.resize(tr.n_features);
    for (std::size_t f = 0; f < tr.n_features; ++f) {
        tr.thresholds[f] = build_thresholds(tr.columns[f], params);
        const auto& t = tr.thresholds[f];
        max_slots = std::max(max_slots, t.size() + 1);
        tr.bins[f].resize(tr.n_rows);
        for (std::size_t r = 0; r < tr.n_rows; ++r)
            tr.bins[f][r] = static_cast<std::uint32_t>(
                std::upper_bound(t.begin(), t.end(), tr.columns[f][r]) - t.begin());
    }
    tr.hist_g.resize(max_slots);
    tr.hist_h.resize(max_slots);
    tr.hist_n.resize(max_slots);

    GbtModel model;
    model.params = params;
    model.n_features = tr.n_features;
    const double prior = static_cast<double>(positives) / static_cast<double>(labels.size());
    model.base_score = std::log(prior / (1.0 - prior));

    std::vector<double> margins(tr.n_rows, model.base_score);
    if (deviance_log) deviance_log->push_back(mean_deviance(margins, labels));

    tr.grad.resize(tr.n_rows);
    tr.hess.resize(tr.n_rows);
    std::vector<std::uint32_t> all_rows(tr.n_rows);

    for (std::size_t round = 0; round < params.n_rounds; ++round) {
        for (std::size_t r = 0; r < tr.n_rows; ++r) {
            const double p = sigmoid(margins[r]);
            tr.grad[r] = p - static_cast<double>(labels[r]);
            tr.hess[r] = p * (1.0 - p);
        }

        Tree tree;
        tree.nodes.emplace_back();
        all_rows.resize(tr.n_rows); // build_node consumes its row list
        std::iota(all_rows.begin(), all_rows.end(), 0u);
        tr.build_node(tree, all_rows, 0, 0);

        model.trees.push_back(std::move(tree));
        const Tree& t = model.trees.back();
        for (std::size_t r = 0; r < tr.n_rows; ++r) {
            const TreeNode* node = &t.nodes[0];
            while (!node->is_leaf())
                node = &t.nodes[static_cast<std::size_t>(
                    tr.columns[static_cast<std::size_t>(node->feature)][r] < node->threshold
                        ? node->left
                        : node->right)];
            margins[r] += node->weight;
        }

        const double dev = mean_deviance(margins, labels);
        require(std::isfinite(dev), ErrorCode::NonfiniteLoss,
                "training deviance diverged at round " + std::to_string(round));
        if (deviance_log) deviance_log->push_back(dev);
    }
    return model;
}

double score_gbt(const GbtModel& model, std::span<const double> row) {
    require(row.size() == model.n_features, ErrorCode::DimMismatch,
            "row has " + std::to_string(row.size()) + " features, model expects " +
                std::to_string(model.n_features));
    double margin = model.base_score;
    for (const Tree& tree : model.trees) margin += tree_output(tree, row);
    return sigmoid(margin);
}

std::vector<double> score_gbt_batch(const GbtModel& model,
                                    const tabular::TabularDataset& features) {
    require(!features.target_index().has_value(), ErrorCode::DimMismatch,
            "batch scoring expects feature rows without a target column");
    std::vector<double> out;
    out.reserve(features.n_rows());
    for (std::size_t r = 0; r < features.n_rows(); ++r)
        out.push_back(score_gbt(model, features.row(r)));
    return out;
}

} // namespace edgescore::gbt
