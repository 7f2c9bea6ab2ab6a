#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edgescore/capsnet.hpp"
#include "edgescore/gbt.hpp"
#include "edgescore/metrics.hpp"
#include "edgescore/tabular.hpp"

namespace edgescore::evalharness {

enum class DataSource {
    Surrogate,
    KaggleCsv,
};

inline constexpr std::array<const char*, 3> kModelNames = {"baseline", "capsule-augmented",
                                                           "random-augmented"};

struct ExperimentConfig {
    DataSource source = DataSource::Surrogate;

    // kaggle-csv source
    std::string csv_path;
    std::string target = "Class";
    std::vector<std::string> drop = {"Time"};

    // surrogate source
    std::size_t surrogate_rows = 20000;
    double surrogate_prior = 0.005;
    std::size_t surrogate_features = 29;
    std::uint64_t data_seed = 1;

    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    // Synthetic rows added for models 2 and 3; defaults to the training
    // minority count, doubling the rare class.
    std::optional<std::size_t> synth_count;
    double synth_ratio = 0.2;

    gbt::GbtParams gbt;
    capsnet::CapsNetConfig caps; // input_dim is overwritten from the data
};

// Reduced capsule profile sized for single-machine runs: the same
// architecture at smaller widths and 20 epochs. input_dim still comes from
// the data at run time.
capsnet::CapsNetConfig desk_caps_profile();

// Model 3's comparator: per-feature uniform draws over the minority's
// observed min/max, labeled positive, provenance-tagged synthetic.
tabular::TabularDataset uniform_synth(const tabular::TabularDataset& minority, std::size_t count,
                                      std::uint64_t seed);

struct ModelEval {
    std::string name;
    MetricsCurves curves;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::size_t train_positives = 0;
    std::size_t test_positives = 0;
    std::size_t balanced_rows = 0;
    std::size_t synth_rows = 0;
    std::array<ModelEval, 3> models;
};

struct ExperimentReport {
    ExperimentConfig cfg;
    tabular::DatasetSummary data;
    std::vector<SeedResult> seeds;
    std::array<double, 3> mean_auc{};
};

// The three-model protocol per seed: stratified 50/50 split, oversampled
// training half, GBT baseline, capsule-synthesized augmentation, uniform
// random augmentation, all evaluated on the untouched test half. Seeds run
// concurrently; the report order is the configured seed order.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

// report.json plus one curve CSV per metric per model (grid curves averaged
// pointwise across seeds). Byte-stable for identical reports.
void write_report(const ExperimentReport& report, const std::string& dir);

} // namespace edgescore::evalharness
