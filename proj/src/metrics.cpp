#include "edgescore/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "edgescore/errors.hpp"

namespace edgescore::evalharness {

std::vector<double> default_cutoff_grid() {
    std::vector<double> grid(101);
    for (int i = 0; i <= 100; ++i) grid[static_cast<std::size_t>(i)] = i / 1000.0;
    return grid;
}

namespace {

void check_pairs(std::span<const double> scores, std::span<const int> labels) {
    require(scores.size() == labels.size(), ErrorCode::LengthMismatch,
            std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                " labels");
    for (int l : labels)
        require(l == 0 || l == 1, ErrorCode::Precondition, "labels must be 0 or 1");
}

} // namespace

Confusion confusion_at(std::span<const double> scores, std::span<const int> labels,
                       double cutoff) {
    check_pairs(scores, labels);
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool alert = scores[i] >= cutoff;
        if (labels[i] == 1)
            (alert ? c.tp : c.fn)++;
        else
            (alert ? c.fp : c.tn)++;
    }
    return c;
}

MetricsCurves curves(std::span<const double> scores, std::span<const int> labels,
                     std::span<const double> grid) {
    check_pairs(scores, labels);
    const auto positives =
        static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t negatives = labels.size() - positives;
    require(positives > 0 && negatives > 0, ErrorCode::DegenerateLabels,
            "need both classes to draw curves");

    MetricsCurves out;
    out.at_cutoff.reserve(grid.size());
    for (double cutoff : grid) {
        CutoffMetrics m;
        m.cutoff = cutoff;
        m.counts = confusion_at(scores, labels, cutoff);
        const auto& c = m.counts;
        m.precision = c.tp + c.fp == 0
                          ? 1.0
                          : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
        m.recall = static_cast<double>(c.tp) / static_cast<double>(positives);
        m.f1 = m.precision + m.recall == 0.0
                   ? 0.0
                   : 2.0 * m.precision * m.recall / (m.precision + m.recall);
        m.tpr = m.recall;
        m.fpr = static_cast<double>(c.fp) / static_cast<double>(negatives);
        out.at_cutoff.push_back(m);
    }

    // Sweep scores descending, emitting one point per distinct value; ties
    // collapse into a single diagonal step.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    out.roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            (labels[order[i]] == 1 ? tp : fp)++;
            ++i;
        }
        out.roc.push_back({threshold, static_cast<double>(fp) / static_cast<double>(negatives),
                           static_cast<double>(tp) / static_cast<double>(positives)});
    }

    double auc = 0.0;
    for (std::size_t k = 1; k < out.roc.size(); ++k)
        auc += (out.roc[k].fpr - out.roc[k - 1].fpr) *
               (out.roc[k].tpr + out.roc[k - 1].tpr) / 2.0;
    out.auc = auc;
    return out;
}

} // namespace edgescore::evalharness
