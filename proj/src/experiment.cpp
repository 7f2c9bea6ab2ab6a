#include "edgescore/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>

#include <json.hpp>

#include "edgescore/errors.hpp"
#include "edgescore/numtext.hpp"
#include "edgescore/rng.hpp"

namespace edgescore::evalharness {
namespace {

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
    return Rng::derive(seed, stream).next_u64();
}

tabular::TabularDataset concat(const tabular::TabularDataset& a,
                               const tabular::TabularDataset& b) {
    require(a.specs == b.specs, ErrorCode::ColumnMismatch,
            "datasets with different schemas cannot be concatenated");
    tabular::TabularDataset out = a;
    for (std::size_t r = 0; r < b.n_rows(); ++r) out.append_row(b.row(r), b.provenance[r]);
    return out;
}

tabular::TabularDataset minority_rows(const tabular::TabularDataset& ds) {
    const auto labels = ds.labels();
    tabular::TabularDataset out;
    out.specs = ds.specs;
    for (std::size_t r = 0; r < ds.n_rows(); ++r)
        if (labels[r] == 1) out.append_row(ds.row(r), ds.provenance[r]);
    return out;
}

void assert_no_synthetic(const tabular::TabularDataset& ds, const char* where) {
    for (const auto tag : ds.provenance)
        require((tag & tabular::kSyntheticTag) == 0, ErrorCode::Precondition,
                std::string("synthetic row leaked into ") + where);
}

void assert_all_synthetic(const tabular::TabularDataset& ds) {
    for (const auto tag : ds.provenance)
        require((tag & tabular::kSyntheticTag) != 0, ErrorCode::Precondition,
                "augmentation rows must carry the synthetic tag");
}

tabular::TabularDataset load_data(const ExperimentConfig& cfg) {
    if (cfg.source == DataSource::KaggleCsv)
        return tabular::load_csv(cfg.csv_path, cfg.target, cfg.drop);
    return tabular::gen_surrogate(cfg.surrogate_rows, cfg.surrogate_prior,
                                  cfg.surrogate_features, cfg.data_seed);
}

SeedResult run_seed(const ExperimentConfig& cfg, const tabular::TabularDataset& data,
                    std::uint64_t seed) {
    auto [train, test] = tabular::stratified_split(data, 0.5, sub_seed(seed, 1));
    assert_no_synthetic(test, "the test split");

    const auto balanced = tabular::oversample_balance(train, sub_seed(seed, 2));
    const auto minority = minority_rows(train);
    const std::size_t synth_count = cfg.synth_count.value_or(minority.n_rows());

    const std::uint64_t gbt_seed = sub_seed(seed, 3);
    const auto model1 = gbt::train_gbt(balanced, cfg.gbt, gbt_seed);

    gbt::GbtModel model2;
    gbt::GbtModel model3;
    if (synth_count == 0) {
        // No augmentation: all three models are the same training run.
        model2 = model1;
        model3 = model1;
    } else {
        capsnet::CapsNetConfig caps = cfg.caps;
        caps.input_dim = data.n_cols() - 1;
        const auto caps_model = capsnet::train_capsnet(caps, balanced, sub_seed(seed, 4));

        capsnet::SynthConfig synth;
        synth.ratio = cfg.synth_ratio;
        synth.count = synth_count;
        synth.target_class = 1;
        synth.seed = sub_seed(seed, 5);
        const auto generated = capsnet::synthesize(caps_model, minority, synth);
        assert_all_synthetic(generated);
        model2 = gbt::train_gbt(concat(balanced, generated), cfg.gbt, gbt_seed);

        const auto random_rows = uniform_synth(minority, synth_count, sub_seed(seed, 6));
        assert_all_synthetic(random_rows);
        model3 = gbt::train_gbt(concat(balanced, random_rows), cfg.gbt, gbt_seed);
    }

    const auto test_features = tabular::features_only(test);
    const auto labels = test.labels();
    const auto grid = default_cutoff_grid();

    SeedResult result;
    result.seed = seed;
    result.train_rows = train.n_rows();
    result.test_rows = test.n_rows();
    result.train_positives = train.count_label(1);
    result.test_positives = test.count_label(1);
    result.balanced_rows = balanced.n_rows();
    result.synth_rows = synth_count;

    const gbt::GbtModel* models[3] = {&model1, &model2, &model3};
    for (std::size_t m = 0; m < 3; ++m) {
        const auto scores = gbt::score_gbt_batch(*models[m], test_features);
        result.models[m] = {kModelNames[m], curves(scores, labels, grid)};
    }
    return result;
}

} // namespace

capsnet::CapsNetConfig desk_caps_profile() {
    capsnet::CapsNetConfig cfg;
    cfg.feat_dim = 48;
    cfg.n_primary = 6;
    cfg.primary_dim = 8;
    cfg.class_dim = 8;
    cfg.decoder_hidden = {32, 64};
    cfg.epochs = 20;
    return cfg;
}

tabular::TabularDataset uniform_synth(const tabular::TabularDataset& minority, std::size_t count,
                                      std::uint64_t seed) {
    require(minority.n_rows() >= 1, ErrorCode::Precondition,
            "need at least one minority row to bound the feature ranges");
    const auto target = minority.target_index();
    require(target.has_value(), ErrorCode::MissingColumn, "minority rows lack a target column");

    const std::size_t n_cols = minority.n_cols();
    std::vector<double> lo(n_cols, std::numeric_limits<double>::infinity());
    std::vector<double> hi(n_cols, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < minority.n_rows(); ++r)
        for (std::size_t c = 0; c < n_cols; ++c) {
            lo[c] = std::min(lo[c], minority.at(r, c));
            hi[c] = std::max(hi[c], minority.at(r, c));
        }

    tabular::TabularDataset out;
    out.specs = minority.specs;
    Rng rng(seed);
    std::vector<double> row(n_cols);
    for (std::size_t k = 0; k < count; ++k) {
        for (std::size_t c = 0; c < n_cols; ++c)
            row[c] = c == *target ? 1.0 : rng.uniform(lo[c], hi[c]);
        out.append_row(row, tabular::kSyntheticTag | k);
    }
    return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    require(!cfg.seeds.empty(), ErrorCode::Precondition, "at least one seed is required");

    ExperimentReport report;
    report.cfg = cfg;

    const auto data = load_data(cfg);
    report.data = tabular::summarize(data);

    std::vector<std::future<SeedResult>> futures;
    futures.reserve(cfg.seeds.size());
    for (const std::uint64_t seed : cfg.seeds)
        futures.push_back(
            std::async(std::launch::async, [&cfg, &data, seed] { return run_seed(cfg, data, seed); }));
    for (auto& f : futures) report.seeds.push_back(f.get());

    for (std::size_t m = 0; m < 3; ++m) {
        double total = 0.0;
        for (const auto& s : report.seeds) total += s.models[m].curves.auc;
        report.mean_auc[m] = total / static_cast<double>(report.seeds.size());
    }
    return report;
}

namespace {

std::string file_stem(std::string name) {
    std::replace(name.begin(), name.end(), '-', '_');
    return name;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::IoError, "cannot open " + path + " for writing");
    out << text;
    out.flush();
    require(out.good(), ErrorCode::IoError, "write to " + path + " failed");
}

// Pointwise mean of a grid metric across seeds for one model.
std::vector<double> mean_metric(const ExperimentReport& report, std::size_t model,
                                double CutoffMetrics::* field) {
    const std::size_t n_points = report.seeds.front().models[model].curves.at_cutoff.size();
    std::vector<double> mean(n_points, 0.0);
    for (const auto& s : report.seeds)
        for (std::size_t i = 0; i < n_points; ++i)
            mean[i] += s.models[model].curves.at_cutoff[i].*field;
    for (auto& v : mean) v /= static_cast<double>(report.seeds.size());
    return mean;
}

nlohmann::ordered_json config_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["source"] = cfg.source == DataSource::Surrogate ? "surrogate" : "kaggle-csv";
    if (cfg.source == DataSource::KaggleCsv) {
        j["csv_path"] = cfg.csv_path;
        j["target"] = cfg.target;
        j["drop"] = cfg.drop;
    } else {
        j["surrogate_rows"] = cfg.surrogate_rows;
        j["surrogate_prior"] = cfg.surrogate_prior;
        j["surrogate_features"] = cfg.surrogate_features;
        j["data_seed"] = cfg.data_seed;
    }
    j["seeds"] = cfg.seeds;
    if (cfg.synth_count)
        j["synth_count"] = *cfg.synth_count;
    else
        j["synth_count"] = nullptr; // per-seed training minority count
    j["synth_ratio"] = cfg.synth_ratio;
    j["gbt"] = {{"n_rounds", cfg.gbt.n_rounds},
                {"max_depth", cfg.gbt.max_depth},
                {"learning_rate", cfg.gbt.learning_rate},
                {"min_child_weight", cfg.gbt.min_child_weight},
                {"n_bins", cfg.gbt.n_bins},
                {"l2_reg", cfg.gbt.l2_reg},
                {"exact_splits", cfg.gbt.exact_splits}};
    j["capsnet"] = {{"feat_dim", cfg.caps.feat_dim},
                    {"n_primary", cfg.caps.n_primary},
                    {"primary_dim", cfg.caps.primary_dim},
                    {"n_class", cfg.caps.n_class},
                    {"class_dim", cfg.caps.class_dim},
                    {"decoder_hidden", cfg.caps.decoder_hidden},
                    {"routing_iters", cfg.caps.routing_iters},
                    {"epochs", cfg.caps.epochs},
                    {"batch_size", cfg.caps.batch_size},
                    {"adam_lr", cfg.caps.adam_lr},
                    {"recon_weight", cfg.caps.recon_weight},
                    {"synth_ratio", cfg.synth_ratio}};
    return j;
}

} // namespace

void write_report(const ExperimentReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::IoError, "cannot create " + dir);

    nlohmann::ordered_json j;
    j["config"] = config_json(report.cfg);
    j["dataset"] = {{"rows", report.data.n_rows},
                    {"positives", report.data.positives},
                    {"prior", report.data.prior},
                    {"feature_cols", report.data.feature_cols}};
    j["models"] = kModelNames;
    auto& per_seed = j["per_seed"] = nlohmann::ordered_json::array();
    for (const auto& s : report.seeds) {
        nlohmann::ordered_json e;
        e["seed"] = s.seed;
        e["train_rows"] = s.train_rows;
        e["test_rows"] = s.test_rows;
        e["train_positives"] = s.train_positives;
        e["test_positives"] = s.test_positives;
        e["balanced_rows"] = s.balanced_rows;
        e["synth_rows"] = s.synth_rows;
        nlohmann::ordered_json auc;
        for (std::size_t m = 0; m < 3; ++m) auc[kModelNames[m]] = s.models[m].curves.auc;
        e["auc"] = std::move(auc);
        per_seed.push_back(std::move(e));
    }
    nlohmann::ordered_json mean;
    for (std::size_t m = 0; m < 3; ++m) mean[kModelNames[m]] = report.mean_auc[m];
    j["mean_auc"] = std::move(mean);
    write_text(dir + "/report.json", j.dump(2) + "\n");

    const auto& grid_points = report.seeds.front().models[0].curves.at_cutoff;
    for (std::size_t m = 0; m < 3; ++m) {
        const std::string stem = dir + "/" + file_stem(kModelNames[m]);
        const auto precision = mean_metric(report, m, &CutoffMetrics::precision);
        const auto recall = mean_metric(report, m, &CutoffMetrics::recall);
        const auto f1 = mean_metric(report, m, &CutoffMetrics::f1);
        const auto tpr = mean_metric(report, m, &CutoffMetrics::tpr);
        const auto fpr = mean_metric(report, m, &CutoffMetrics::fpr);

        std::string pr = "cutoff,precision,recall\n";
        std::string f1_text = "cutoff,f1\n";
        std::string roc = "cutoff,fpr,tpr\n";
        for (std::size_t i = 0; i < grid_points.size(); ++i) {
            const std::string cutoff = format_double(grid_points[i].cutoff);
            pr += cutoff + "," + format_double(precision[i]) + "," + format_double(recall[i]) +
                  "\n";
            f1_text += cutoff + "," + format_double(f1[i]) + "\n";
            roc += cutoff + "," + format_double(fpr[i]) + "," + format_double(tpr[i]) + "\n";
        }
        write_text(stem + "_pr.csv", pr);
        write_text(stem + "_f1.csv", f1_text);
        write_text(stem + "_roc.csv", roc);
    }
}

} // namespace edgescore::evalharness
