#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace edgescore::evalharness {

// 0.000 through 0.100 in steps of 0.001; scoring cutoffs for rare-event work
// live in the low tail, so the grid covers only the first decile.
std::vector<double> default_cutoff_grid();

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Predicted positive iff score >= cutoff; a tie at the cutoff alerts.
Confusion confusion_at(std::span<const double> scores, std::span<const int> labels,
                       double cutoff);

struct CutoffMetrics {
    double cutoff = 0;
    Confusion counts;
    double precision = 0; // 1 when no alerts fired: no alerts, no false alerts
    double recall = 0;
    double f1 = 0;
    double tpr = 0;
    double fpr = 0;
};

struct RocPoint {
    double threshold = 0;
    double fpr = 0;
    double tpr = 0;
};

struct MetricsCurves {
    std::vector<CutoffMetrics> at_cutoff;
    // Full score range, one point per distinct threshold plus the (0,0)
    // anchor; the basis for the AUC, independent of the cutoff grid.
    std::vector<RocPoint> roc;
    double auc = 0;
};

// Requires at least one positive and one negative label. Trapezoid AUC over
// the tie-grouped ROC equals the pairwise ordering statistic with ties
// counted one half.
MetricsCurves curves(std::span<const double> scores, std::span<const int> labels,
                     std::span<const double> grid);

} // namespace edgescore::evalharness
