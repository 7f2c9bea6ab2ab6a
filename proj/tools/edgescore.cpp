// Command-line surface over the edgescore library. One process per
// invocation; every run echoes its effective configuration to stderr as a
// single JSON line so it can be reproduced exactly.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgescore/astore.hpp"
#include "edgescore/capsnet.hpp"
#include "edgescore/engine.hpp"
#include "edgescore/errors.hpp"
#include "edgescore/experiment.hpp"
#include "edgescore/gbt.hpp"
#include "edgescore/hash.hpp"
#include "edgescore/ledger.hpp"
#include "edgescore/metrics.hpp"
#include "edgescore/model_codec.hpp"
#include "edgescore/numtext.hpp"
#include "edgescore/tabular.hpp"

namespace {

using namespace edgescore;
using nlohmann::ordered_json;

// Exit-code classes, fixed so shell pipelines can branch: 0 success, 2 usage,
// 3 verification or tamper evidence, 4 data problems, 5 training divergence.
int exit_class(ErrorCode code) {
    switch (code) {
        case ErrorCode::Precondition:
            return 2;
        case ErrorCode::BadMagic:
        case ErrorCode::UnsupportedVersion:
        case ErrorCode::Truncated:
        case ErrorCode::SectionOverlap:
        case ErrorCode::KeyMismatch:
        case ErrorCode::InvalidSpec:
        case ErrorCode::PayloadTooLarge:
        case ErrorCode::InvalidChain:
        case ErrorCode::UnanchoredModel:
        case ErrorCode::BadChainFormat:
        case ErrorCode::DescribeFailed:
            return 3;
        case ErrorCode::NonfiniteLoss:
            return 5;
        default:
            return 4;
    }
}

std::string one_line(std::string text) {
    std::replace(text.begin(), text.end(), '\n', ' ');
    std::replace(text.begin(), text.end(), '\r', ' ');
    return text;
}

void echo_config(const ordered_json& cfg) { std::cerr << cfg.dump() << "\n"; }

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::IoError, "cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::IoError, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    require(out.good(), ErrorCode::IoError, "write failed for " + path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::IoError, "cannot open " + path + " for writing");
    out << text;
    require(out.good(), ErrorCode::IoError, "write failed for " + path);
}

astore::AstoreBlob load_blob(const std::string& path) {
    return astore::deserialize(read_bytes(path));
}

const char* kind_text(tabular::VarKind kind) {
    return kind == tabular::VarKind::BinaryTarget ? "binary-target" : "numeric";
}

const char* algorithm_text(astore::Algorithm a) {
    return a == astore::Algorithm::Gbt ? "gbt" : "capsnet";
}

// Contract rules live beside the chain in a JSON sidecar; the chain itself
// only carries the anchor and score-result blocks.
std::vector<ledger::ContractRule> load_rules(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) return {}; // absent sidecar: no rules registered yet
    try {
        const auto doc = nlohmann::json::parse(in);
        std::vector<ledger::ContractRule> rules;
        for (const auto& e : doc) {
            ledger::ContractRule r;
            r.id = e.at("id").get<std::uint64_t>();
            r.min_records = e.at("min_records").get<std::size_t>();
            r.model_key = e.at("model_key").get<std::string>();
            if (e.contains("predicate")) {
                const auto& p = e.at("predicate");
                r.predicate = ledger::FieldPredicate{p.at("field").get<std::string>(),
                                                     p.at("op").get<std::string>(),
                                                     p.at("value").get<double>()};
            }
            rules.push_back(std::move(r));
        }
        std::sort(rules.begin(), rules.end(),
                  [](const auto& a, const auto& b) { return a.id < b.id; });
        return rules;
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::BadChainFormat, "rules file " + path + ": " + e.what());
    }
}

void save_rules(const std::string& path, const std::vector<ledger::ContractRule>& rules) {
    ordered_json doc = ordered_json::array();
    for (const auto& r : rules) {
        ordered_json e{{"id", r.id}, {"min_records", r.min_records}, {"model_key", r.model_key}};
        if (r.predicate)
            e["predicate"] = {{"field", r.predicate->field},
                              {"op", r.predicate->op},
                              {"value", r.predicate->value}};
        doc.push_back(std::move(e));
    }
    write_text(path, doc.dump(2) + "\n");
}

ledger::Record parse_record(const std::string& text) {
    ledger::Record rec;
    std::stringstream ss(text);
    std::string pair;
    while (std::getline(ss, pair, ',')) {
        auto eq = pair.find('=');
        require(eq != std::string::npos && eq > 0, ErrorCode::Precondition,
                "--record expects k=v[,k=v...], got \"" + pair + "\"");
        rec.body.emplace_back(pair.substr(0, eq), pair.substr(eq + 1));
    }
    require(!rec.body.empty(), ErrorCode::Precondition, "--record needs at least one k=v pair");
    return rec;
}

// Events from a CSV stream, reordered into the model's input schema; extra
// columns pass through unused.
class CsvEventSource : public engine::EventSource {
public:
    CsvEventSource(std::istream& in, const std::vector<tabular::VariableSpec>& input_vars)
        : in_(in) {
        std::vector<std::string> header;
        require(tabular::read_csv_record(in_, header) && !(header.size() == 1 && header[0].empty()),
                ErrorCode::EmptyFile, "event stream has no header");
        for (const auto& var : input_vars) {
            auto it = std::find(header.begin(), header.end(), var.name);
            require(it != header.end(), ErrorCode::InputMismatch,
                    "event stream is missing variable " + var.name);
            source_col_.push_back(static_cast<std::size_t>(it - header.begin()));
        }
    }

    std::optional<std::vector<double>> next() override {
        std::vector<std::string> fields;
        while (tabular::read_csv_record(in_, fields)) {
            if (fields.size() == 1 && fields[0].empty()) continue; // blank line
            ++event_;
            std::vector<double> row(source_col_.size());
            for (std::size_t i = 0; i < source_col_.size(); ++i) {
                require(source_col_[i] < fields.size(), ErrorCode::NonNumericCell,
                        "event " + std::to_string(event_) + " has only " +
                            std::to_string(fields.size()) + " fields");
                auto v = parse_double(fields[source_col_[i]]);
                require(v.has_value(), ErrorCode::NonNumericCell,
                        "event " + std::to_string(event_) + ": \"" + fields[source_col_[i]] +
                            "\"");
                row[i] = *v;
            }
            return row;
        }
        return std::nullopt;
    }

private:
    std::istream& in_;
    std::vector<std::size_t> source_col_;
    std::size_t event_ = 0;
};

class PrintSink : public engine::WindowSink {
public:
    explicit PrintSink(std::ostream& out) : out_(out) {}

    void window(const engine::WindowResult& w) override {
        if (w.failed) {
            out_ << "#window " << w.window_index << " failed: " << one_line(w.error) << "\n";
            return;
        }
        out_ << "#window " << w.window_index << "\n";
        for (const auto& o : w.outputs)
            out_ << format_double(o[0]) << ',' << format_double(o[1]) << "\n";
    }

private:
    std::ostream& out_;
};

void write_curve_files(const evalharness::MetricsCurves& c, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::string pr = "cutoff,precision,recall\n";
    std::string f1 = "cutoff,f1\n";
    std::string roc = "cutoff,fpr,tpr\n";
    for (const auto& m : c.at_cutoff) {
        const std::string cut = format_double(m.cutoff);
        pr += cut + ',' + format_double(m.precision) + ',' + format_double(m.recall) + '\n';
        f1 += cut + ',' + format_double(m.f1) + '\n';
        roc += cut + ',' + format_double(m.fpr) + ',' + format_double(m.tpr) + '\n';
    }
    write_text(dir + "/pr.csv", pr);
    write_text(dir + "/f1.csv", f1);
    write_text(dir + "/roc.csv", roc);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fraud-model toolkit: data, training, model stores, scoring, ledger"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read flags from an INI/TOML file, one section per subcommand");
    std::uint64_t seed = 1;
    app.add_option("--seed", seed, "RNG seed used by every randomized subcommand")
        ->capture_default_str();

    // gen-data ---------------------------------------------------------------
    struct {
        std::size_t rows = 20000;
        double prior = 0.005;
        std::size_t features = 29;
        std::string target = "fraud";
        std::string out;
    } gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write the seeded surrogate dataset as CSV");
    gen_cmd->fallthrough();
    gen_cmd->add_option("--rows", gen.rows, "row count")->capture_default_str();
    gen_cmd->add_option("--prior", gen.prior, "positive-class prior")->capture_default_str();
    gen_cmd->add_option("--features", gen.features, "feature column count")->capture_default_str();
    gen_cmd->add_option("--target", gen.target, "target column name")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "output CSV path")->required();
    gen_cmd->callback([&] {
        echo_config({{"command", "gen-data"},
                     {"rows", gen.rows},
                     {"prior", gen.prior},
                     {"features", gen.features},
                     {"target", gen.target},
                     {"seed", seed},
                     {"out", gen.out}});
        const auto ds = tabular::gen_surrogate(gen.rows, gen.prior, gen.features, seed, gen.target);
        tabular::write_csv(ds, gen.out);
        const auto s = tabular::summarize(ds);
        std::cout << "wrote " << gen.out << ": " << s.n_rows << " rows, " << s.positives
                  << " positives\n";
    });

    // train ------------------------------------------------------------------
    struct TrainCommon {
        std::string data;
        std::string target = "Class";
        std::vector<std::string> drop;
        std::string out;
        std::string name;
        std::string description;
        std::int64_t timestamp = 0;
    };
    auto add_train_common = [](CLI::App* cmd, TrainCommon& c) {
        cmd->fallthrough();
        cmd->add_option("--data", c.data, "training CSV")->required();
        cmd->add_option("--target", c.target, "binary target column")->capture_default_str();
        cmd->add_option("--drop", c.drop, "columns to drop before training");
        cmd->add_option("--out", c.out, "model store output path")->required();
        cmd->add_option("--name", c.name, "model name for the metadata");
        cmd->add_option("--description", c.description, "model description");
        cmd->add_option("--timestamp", c.timestamp, "metadata timestamp, seconds since epoch")
            ->capture_default_str();
    };

    auto* train_cmd = app.add_subcommand("train", "Train a model and write it as a model store");
    train_cmd->fallthrough();
    train_cmd->require_subcommand(1);

    TrainCommon tg;
    gbt::GbtParams gparams;
    auto* tgbt = train_cmd->add_subcommand("gbt", "Gradient boosted trees");
    add_train_common(tgbt, tg);
    tgbt->add_option("--rounds", gparams.n_rounds, "boosting rounds")->capture_default_str();
    tgbt->add_option("--depth", gparams.max_depth, "tree depth limit")->capture_default_str();
    tgbt->add_option("--lr", gparams.learning_rate, "shrinkage")->capture_default_str();
    tgbt->add_option("--min-child-weight", gparams.min_child_weight, "minimum leaf hessian")
        ->capture_default_str();
    tgbt->add_option("--bins", gparams.n_bins, "histogram bins")->capture_default_str();
    tgbt->add_option("--l2", gparams.l2_reg, "L2 leaf regularization")->capture_default_str();
    tgbt->add_flag("--exact", gparams.exact_splits, "exact split enumeration");
    tgbt->callback([&] {
        echo_config({{"command", "train gbt"},
                     {"data", tg.data},
                     {"target", tg.target},
                     {"drop", tg.drop},
                     {"seed", seed},
                     {"rounds", gparams.n_rounds},
                     {"depth", gparams.max_depth},
                     {"lr", gparams.learning_rate},
                     {"min_child_weight", gparams.min_child_weight},
                     {"bins", gparams.n_bins},
                     {"l2", gparams.l2_reg},
                     {"exact", gparams.exact_splits},
                     {"timestamp", tg.timestamp},
                     {"out", tg.out}});
        const auto ds = tabular::load_csv(tg.data, tg.target, tg.drop);
        const auto model = gbt::train_gbt(ds, gparams, seed);
        const std::string name = tg.name.empty() ? "gbt-" + tg.target : tg.name;
        const auto bytes = astore::export_gbt(model, tabular::features_only(ds).specs, name,
                                              tg.description, tg.timestamp, tg.target);
        write_bytes(tg.out, bytes);
        std::cout << "wrote " << tg.out << ": " << name << ", store key "
                  << astore::key_to_hex(astore::deserialize(bytes).store_key) << "\n";
    });

    TrainCommon tc;
    capsnet::CapsNetConfig cconf;
    std::vector<std::size_t> tc_decoder = {64, 128};
    auto* tcaps = train_cmd->add_subcommand("capsnet", "Capsule network");
    add_train_common(tcaps, tc);
    tcaps->add_option("--feat-dim", cconf.feat_dim, "feature layer width")->capture_default_str();
    tcaps->add_option("--n-primary", cconf.n_primary, "primary capsules")->capture_default_str();
    tcaps->add_option("--primary-dim", cconf.primary_dim, "primary capsule dimension")
        ->capture_default_str();
    tcaps->add_option("--class-dim", cconf.class_dim, "class capsule dimension")
        ->capture_default_str();
    auto* tc_dec_opt =
        tcaps->add_option("--decoder-hidden", tc_decoder, "decoder hidden widths")->expected(2);
    tcaps->add_option("--routing", cconf.routing_iters, "routing iterations")
        ->capture_default_str();
    tcaps->add_option("--epochs", cconf.epochs, "training epochs")->capture_default_str();
    tcaps->add_option("--batch", cconf.batch_size, "mini-batch size")->capture_default_str();
    tcaps->add_option("--adam-lr", cconf.adam_lr, "Adam learning rate")->capture_default_str();
    tcaps->add_option("--recon-weight", cconf.recon_weight, "reconstruction loss weight")
        ->capture_default_str();
    tcaps->callback([&] {
        if (tc_dec_opt->count()) cconf.decoder_hidden = {tc_decoder[0], tc_decoder[1]};
        echo_config({{"command", "train capsnet"},
                     {"data", tc.data},
                     {"target", tc.target},
                     {"drop", tc.drop},
                     {"seed", seed},
                     {"feat_dim", cconf.feat_dim},
                     {"n_primary", cconf.n_primary},
                     {"primary_dim", cconf.primary_dim},
                     {"class_dim", cconf.class_dim},
                     {"decoder_hidden", cconf.decoder_hidden},
                     {"routing_iters", cconf.routing_iters},
                     {"epochs", cconf.epochs},
                     {"batch_size", cconf.batch_size},
                     {"adam_lr", cconf.adam_lr},
                     {"recon_weight", cconf.recon_weight},
                     {"timestamp", tc.timestamp},
                     {"out", tc.out}});
        const auto ds = tabular::load_csv(tc.data, tc.target, tc.drop);
        cconf.input_dim = ds.n_cols() - 1;
        std::vector<double> epoch_loss;
        const auto model = capsnet::train_capsnet(cconf, ds, seed, &epoch_loss);
        const std::string name = tc.name.empty() ? "capsnet-" + tc.target : tc.name;
        const auto bytes = astore::export_capsnet(model, name, tc.description, tc.timestamp,
                                                  tc.target);
        write_bytes(tc.out, bytes);
        std::cout << "wrote " << tc.out << ": " << name << ", store key "
                  << astore::key_to_hex(astore::deserialize(bytes).store_key);
        if (!epoch_loss.empty()) std::cout << ", final epoch loss " << format_double(epoch_loss.back());
        std::cout << "\n";
    });

    // export-astore ------------------------------------------------------------
    struct {
        std::string in, out, name, description;
        std::int64_t timestamp = 0;
    } exp;
    auto* exp_cmd = app.add_subcommand("export-astore", "Re-stamp a model store's metadata");
    exp_cmd->fallthrough();
    exp_cmd->add_option("--in", exp.in, "source model store")->required();
    exp_cmd->add_option("--out", exp.out, "destination path")->required();
    auto* exp_name = exp_cmd->add_option("--name", exp.name, "replacement name");
    auto* exp_desc = exp_cmd->add_option("--description", exp.description, "replacement description");
    auto* exp_ts = exp_cmd->add_option("--timestamp", exp.timestamp, "replacement timestamp");
    exp_cmd->callback([&] {
        echo_config({{"command", "export-astore"},
                     {"in", exp.in},
                     {"out", exp.out},
                     {"name", exp_name->count() ? ordered_json(exp.name) : ordered_json(nullptr)},
                     {"description",
                      exp_desc->count() ? ordered_json(exp.description) : ordered_json(nullptr)},
                     {"timestamp",
                      exp_ts->count() ? ordered_json(exp.timestamp) : ordered_json(nullptr)}});
        const auto blob = load_blob(exp.in);
        astore::Metadata md = blob.metadata;
        if (exp_name->count()) md.name = exp.name;
        if (exp_desc->count()) md.description = exp.description;
        if (exp_ts->count()) md.timestamp = exp.timestamp;
        const auto bytes =
            astore::serialize(md, blob.params, blob.input_vars, blob.output_vars, blob.payload);
        write_bytes(exp.out, bytes);
        std::cout << "wrote " << exp.out << ": store key "
                  << astore::key_to_hex(astore::deserialize(bytes).store_key) << "\n";
    });

    // describe -------------------------------------------------------------------
    std::string describe_path;
    auto* desc_cmd = app.add_subcommand("describe", "Print a model store's metadata and schemas");
    desc_cmd->fallthrough();
    desc_cmd->add_option("file", describe_path, "model store path")->required();
    desc_cmd->callback([&] {
        echo_config({{"command", "describe"}, {"file", describe_path}});
        const auto blob = load_blob(describe_path);
        const auto d = astore::describe(blob);
        std::cout << "name:        " << d.metadata.name << "\n"
                  << "description: " << d.metadata.description << "\n"
                  << "algorithm:   " << algorithm_text(d.metadata.algorithm) << "\n"
                  << "timestamp:   " << d.metadata.timestamp << "\n"
                  << "store key:   " << astore::key_to_hex(blob.store_key) << "\n";
        std::cout << "parameters (" << blob.params.size() << "):\n";
        for (const auto& [k, v] : blob.params) std::cout << "  " << k << " = " << v << "\n";
        std::cout << "inputs (" << d.input_vars.size() << "):\n";
        for (const auto& var : d.input_vars)
            std::cout << "  " << var.name << "  " << kind_text(var.kind) << "  " << var.format
                      << "\n";
        std::cout << "outputs (" << d.output_vars.size() << "):\n";
        for (const auto& var : d.output_vars)
            std::cout << "  " << var.name << "  " << kind_text(var.kind) << "  " << var.format
                      << "\n";
    });

    // verify ------------------------------------------------------------------------
    std::string verify_path;
    auto* verify_cmd = app.add_subcommand("verify", "Check a model store's key and structure");
    verify_cmd->fallthrough();
    verify_cmd->add_option("file", verify_path, "model store path")->required();
    verify_cmd->callback([&] {
        echo_config({{"command", "verify"}, {"file", verify_path}});
        const auto bytes = read_bytes(verify_path);
        astore::verify(bytes); // key first, so tampering reports as KEY_MISMATCH
        std::cout << "OK " << astore::key_to_hex(astore::deserialize(bytes).store_key) << "\n";
    });

    // score --------------------------------------------------------------------------
    struct {
        std::string model, data, out;
    } sc;
    auto* score_cmd = app.add_subcommand("score", "Batch-score a CSV against a model store");
    score_cmd->fallthrough();
    score_cmd->add_option("--model", sc.model, "model store path")->required();
    score_cmd->add_option("--data", sc.data, "input CSV; extra columns are ignored")->required();
    score_cmd->add_option("--out", sc.out, "output CSV path")->required();
    score_cmd->callback([&] {
        echo_config(
            {{"command", "score"}, {"model", sc.model}, {"data", sc.data}, {"out", sc.out}});
        const auto blob = load_blob(sc.model);
        const auto input = tabular::load_csv_features(sc.data);
        // The engine emits the output schema only; the CSV keeps the input
        // columns beside the scores so downstream tools see both.
        const auto result =
            engine::astore_score(blob, input, [&](const tabular::TabularDataset& scores) {
                tabular::TabularDataset merged;
                merged.specs = input.specs;
                merged.specs.insert(merged.specs.end(), scores.specs.begin(), scores.specs.end());
                merged.provenance = input.provenance;
                std::vector<double> row;
                for (std::size_t r = 0; r < input.n_rows(); ++r) {
                    row.assign(input.row(r).begin(), input.row(r).end());
                    row.insert(row.end(), scores.row(r).begin(), scores.row(r).end());
                    merged.values.insert(merged.values.end(), row.begin(), row.end());
                }
                tabular::write_csv(merged, sc.out);
            });
        std::cout << "scored " << result.output.n_rows() << " rows -> " << sc.out << "\n";
    });

    // stream ---------------------------------------------------------------------------
    struct {
        std::string model;
        std::size_t window = 0;
        std::size_t slide = 0;
    } st;
    auto* stream_cmd = app.add_subcommand(
        "stream", "Sliding-window scoring: CSV events on stdin, windows on stdout");
    stream_cmd->fallthrough();
    stream_cmd->add_option("--model", st.model, "model store path")->required();
    stream_cmd->add_option("--window", st.window, "events per window")->required();
    stream_cmd->add_option("--slide", st.slide, "window advance in events (default: window size)");
    stream_cmd->callback([&] {
        const std::size_t slide = st.slide == 0 ? st.window : st.slide;
        echo_config({{"command", "stream"},
                     {"model", st.model},
                     {"window", st.window},
                     {"slide", slide}});
        const auto blob = load_blob(st.model);
        CsvEventSource source(std::cin, blob.input_vars);
        PrintSink sink(std::cout);
        for (std::size_t i = 0; i < blob.output_vars.size(); ++i)
            std::cout << (i ? "," : "") << blob.output_vars[i].name;
        std::cout << "\n";
        const auto summary = engine::stream_score(blob, source, {st.window, slide}, sink);
        echo_config({{"events_in", summary.events_in},
                     {"windows_emitted", summary.windows_emitted},
                     {"windows_failed", summary.windows_failed},
                     {"events_scored", summary.events_scored},
                     {"peak_buffered", summary.peak_buffered}});
    });

    // synth -------------------------------------------------------------------------------
    struct {
        std::string model, seeds_csv, out;
        std::string target = "Class";
        std::size_t count = 0;
        double ratio = 0.2;
        std::size_t target_class = 1;
    } sy;
    auto* synth_cmd =
        app.add_subcommand("synth", "Synthesize rare-class rows from a capsule model store");
    synth_cmd->fallthrough();
    synth_cmd->add_option("--model", sy.model, "capsule model store")->required();
    synth_cmd->add_option("--seeds", sy.seeds_csv, "CSV whose target-class rows seed synthesis")
        ->required();
    synth_cmd->add_option("--target", sy.target, "target column in the seeds CSV")
        ->capture_default_str();
    synth_cmd->add_option("--count", sy.count, "rows to synthesize (0: one per seed row)")
        ->capture_default_str();
    synth_cmd->add_option("--ratio", sy.ratio, "activity-vector perturbation magnitude")
        ->capture_default_str();
    synth_cmd->add_option("--target-class", sy.target_class, "class to synthesize")
        ->capture_default_str();
    synth_cmd->add_option("--out", sy.out, "output CSV path")->required();
    synth_cmd->callback([&] {
        echo_config({{"command", "synth"},
                     {"model", sy.model},
                     {"seeds", sy.seeds_csv},
                     {"target", sy.target},
                     {"count", sy.count},
                     {"ratio", sy.ratio},
                     {"target_class", sy.target_class},
                     {"seed", seed},
                     {"out", sy.out}});
        const auto blob = load_blob(sy.model);
        require(blob.metadata.algorithm == astore::Algorithm::CapsNet, ErrorCode::Precondition,
                "synthesis needs a capsule model store");
        const auto model = astore::decode_capsnet(blob.payload);
        const auto ds = tabular::load_csv(sy.seeds_csv, sy.target, {});
        tabular::TabularDataset seeds_ds;
        seeds_ds.specs = ds.specs;
        const auto labels = ds.labels();
        for (std::size_t r = 0; r < ds.n_rows(); ++r)
            if (labels[r] == static_cast<int>(sy.target_class))
                seeds_ds.append_row(ds.row(r), ds.provenance[r]);
        capsnet::SynthConfig scfg;
        scfg.ratio = sy.ratio;
        scfg.count = sy.count == 0 ? seeds_ds.n_rows() : sy.count;
        scfg.target_class = sy.target_class;
        scfg.seed = seed;
        const auto rows = capsnet::synthesize(model, seeds_ds, scfg);
        tabular::write_csv(rows, sy.out);
        std::cout << "wrote " << sy.out << ": " << rows.n_rows() << " synthetic rows from "
                  << seeds_ds.n_rows() << " seeds\n";
    });

    // ledger --------------------------------------------------------------------------------
    auto* ledger_cmd = app.add_subcommand("ledger", "Append-only scoring ledger with contracts");
    ledger_cmd->fallthrough();
    ledger_cmd->require_subcommand(1);

    struct {
        std::string chain;
        std::int64_t timestamp = 0;
        std::uint32_t difficulty = 0;
        bool force = false;
    } li;
    auto* linit = ledger_cmd->add_subcommand("init", "Create a chain file with its genesis block");
    linit->fallthrough();
    linit->add_option("--chain", li.chain, "chain file")->required();
    linit->add_option("--timestamp", li.timestamp, "genesis timestamp")->capture_default_str();
    linit->add_option("--difficulty", li.difficulty, "required leading zero bits")
        ->capture_default_str();
    linit->add_flag("--force", li.force, "overwrite an existing chain file");
    linit->callback([&] {
        echo_config({{"command", "ledger init"},
                     {"chain", li.chain},
                     {"timestamp", li.timestamp},
                     {"difficulty", li.difficulty},
                     {"force", li.force}});
        require(li.force || !std::filesystem::exists(li.chain), ErrorCode::Precondition,
                li.chain + " exists; pass --force to recreate it");
        ledger::Chain chain;
        const auto& genesis = ledger::append_block(chain, {}, li.timestamp, li.difficulty);
        ledger::save_chain(chain, li.chain);
        std::cout << "genesis block " << to_hex(genesis.block_hash) << "\n";
    });

    struct {
        std::string chain, rules, blob_dir;
        std::vector<std::string> records;
        std::int64_t timestamp = 0;
        std::uint32_t difficulty = 0;
    } la;
    auto* lappend =
        ledger_cmd->add_subcommand("append", "Append a transaction block and evaluate contracts");
    lappend->fallthrough();
    lappend->add_option("--chain", la.chain, "chain file")->required();
    lappend->add_option("--record", la.records, "transaction as k=v[,k=v...]; repeatable")
        ->required();
    lappend->add_option("--rules", la.rules, "contract rules JSON sidecar");
    lappend->add_option("--blob-dir", la.blob_dir,
                        "directory of anchored model stores, <KEY>.astore");
    lappend->add_option("--timestamp", la.timestamp, "block timestamp")->capture_default_str();
    lappend->add_option("--difficulty", la.difficulty, "required leading zero bits")
        ->capture_default_str();
    lappend->callback([&] {
        echo_config({{"command", "ledger append"},
                     {"chain", la.chain},
                     {"records", la.records},
                     {"rules", la.rules},
                     {"blob_dir", la.blob_dir},
                     {"timestamp", la.timestamp},
                     {"difficulty", la.difficulty}});
        ledger::Ledger led;
        led.chain = ledger::load_chain(la.chain);
        if (!la.rules.empty()) led.rules = load_rules(la.rules);
        std::vector<ledger::Record> records;
        for (const auto& text : la.records) records.push_back(parse_record(text));
        const auto resolve = [&](const std::string& key) {
            require(!la.blob_dir.empty(), ErrorCode::IoError,
                    "a contract fired but no --blob-dir was given");
            return load_blob(la.blob_dir + "/" + key + ".astore");
        };
        const auto outcome = ledger::append_and_evaluate(led, std::move(records), la.timestamp,
                                                         la.difficulty, resolve);
        ledger::save_chain(led.chain, la.chain);
        std::cout << "block " << outcome.block_index << " appended\n";
        for (const auto& f : outcome.fired) {
            if (f.failed)
                std::cout << "rule " << f.rule_id << " failed on block " << f.trigger_block
                          << ": " << one_line(f.error) << "\n";
            else
                std::cout << "rule " << f.rule_id << " fired on block " << f.trigger_block
                          << ": scored " << f.rows_scored << " rows into block "
                          << f.result_block << "\n";
        }
    });

    struct {
        std::string chain, model, name, blob_dir;
        std::int64_t timestamp = 0;
        std::uint32_t difficulty = 0;
    } lan;
    auto* lanchor =
        ledger_cmd->add_subcommand("anchor", "Record a model store's key on the chain");
    lanchor->fallthrough();
    lanchor->add_option("--chain", lan.chain, "chain file")->required();
    lanchor->add_option("--model", lan.model, "model store to anchor")->required();
    lanchor->add_option("--name", lan.name, "anchor name (default: the model's own name)");
    lanchor->add_option("--blob-dir", lan.blob_dir,
                        "also copy the store there as <KEY>.astore for contract actions");
    lanchor->add_option("--timestamp", lan.timestamp, "block timestamp")->capture_default_str();
    lanchor->add_option("--difficulty", lan.difficulty, "required leading zero bits")
        ->capture_default_str();
    lanchor->callback([&] {
        echo_config({{"command", "ledger anchor"},
                     {"chain", lan.chain},
                     {"model", lan.model},
                     {"name", lan.name},
                     {"blob_dir", lan.blob_dir},
                     {"timestamp", lan.timestamp},
                     {"difficulty", lan.difficulty}});
        const auto bytes = read_bytes(lan.model);
        const auto blob = astore::deserialize(bytes);
        const std::string key = astore::key_to_hex(blob.store_key);
        const std::string name = lan.name.empty() ? blob.metadata.name : lan.name;
        auto chain = ledger::load_chain(lan.chain);
        const auto& block = ledger::anchor_model(chain, key, name, lan.timestamp, lan.difficulty);
        ledger::save_chain(chain, lan.chain);
        if (!lan.blob_dir.empty()) {
            std::filesystem::create_directories(lan.blob_dir);
            write_bytes(lan.blob_dir + "/" + key + ".astore", bytes);
        }
        std::cout << "anchored " << name << " (" << key << ") at block " << block.index << "\n";
    });

    struct {
        std::string chain, rules, model_key, field, op;
        std::uint64_t id = 0;
        std::size_t min_records = 1;
        double value = 0.0;
    } lc;
    auto* lcontract =
        ledger_cmd->add_subcommand("contract", "Register a condition->score contract rule");
    lcontract->fallthrough();
    lcontract->add_option("--chain", lc.chain, "chain file")->required();
    lcontract->add_option("--rules", lc.rules, "rules JSON sidecar to update")->required();
    lcontract->add_option("--id", lc.id, "rule id, unique")->required();
    lcontract->add_option("--model-key", lc.model_key, "store key of an anchored model")
        ->required();
    lcontract->add_option("--min-records", lc.min_records, "eligible transactions needed to fire")
        ->capture_default_str();
    auto* lc_field = lcontract->add_option("--field", lc.field, "predicate field");
    auto* lc_op = lcontract->add_option("--op", lc.op, "predicate comparator")
                      ->check(CLI::IsMember({"<", "<=", "=", ">=", ">"}));
    auto* lc_value = lcontract->add_option("--value", lc.value, "predicate threshold");
    lc_field->needs(lc_op);
    lc_field->needs(lc_value);
    lc_op->needs(lc_field);
    lc_value->needs(lc_field);
    lcontract->callback([&] {
        echo_config({{"command", "ledger contract"},
                     {"chain", lc.chain},
                     {"rules", lc.rules},
                     {"id", lc.id},
                     {"model_key", lc.model_key},
                     {"min_records", lc.min_records},
                     {"field", lc_field->count() ? ordered_json(lc.field) : ordered_json(nullptr)},
                     {"op", lc_op->count() ? ordered_json(lc.op) : ordered_json(nullptr)},
                     {"value", lc_value->count() ? ordered_json(lc.value) : ordered_json(nullptr)}});
        ledger::Ledger led;
        led.chain = ledger::load_chain(lc.chain);
        led.rules = load_rules(lc.rules);
        ledger::ContractRule rule;
        rule.id = lc.id;
        rule.min_records = lc.min_records;
        rule.model_key = lc.model_key;
        if (lc_field->count())
            rule.predicate = ledger::FieldPredicate{lc.field, lc.op, lc.value};
        ledger::register_contract(led, rule);
        save_rules(lc.rules, led.rules);
        std::cout << "rule " << lc.id << " registered (" << led.rules.size() << " total)\n";
    });

    struct {
        std::string chain;
    } lv;
    auto* lvalidate =
        ledger_cmd->add_subcommand("validate", "Re-verify every block hash and link");
    lvalidate->fallthrough();
    lvalidate->add_option("--chain", lv.chain, "chain file")->required();
    lvalidate->callback([&] {
        echo_config({{"command", "ledger validate"}, {"chain", lv.chain}});
        const auto chain = ledger::load_chain(lv.chain);
        const auto report = ledger::validate_chain(chain);
        require(report.ok, ErrorCode::InvalidChain,
                "block " + std::to_string(report.bad_index) + ": " + report.reason);
        std::cout << "OK " << chain.blocks.size() << " blocks";
        if (!chain.blocks.empty())
            std::cout << ", head " << to_hex(chain.blocks.back().block_hash);
        std::cout << "\n";
    });

    // experiment ------------------------------------------------------------------------------
    evalharness::ExperimentConfig ex;
    struct {
        std::string data = "surrogate";
        std::size_t n_seeds = 5;
        std::int64_t synth_count = -1;
        std::string profile = "desk";
        std::string out = "experiment_out";
    } exr;
    struct {
        std::size_t epochs = 0, feat_dim = 0, n_primary = 0, primary_dim = 0, class_dim = 0,
                    routing = 0, batch = 0;
        double adam_lr = 0.0;
        std::vector<std::size_t> decoder = {32, 64};
    } co;
    auto* exp_run = app.add_subcommand(
        "experiment", "The three-model comparison; writes report.json and curve CSVs");
    exp_run->fallthrough();
    exp_run->add_option("--data", exr.data, "\"surrogate\" or a CSV path")->capture_default_str();
    exp_run->add_option("--target", ex.target, "target column for CSV data")
        ->capture_default_str();
    exp_run->add_option("--drop", ex.drop, "columns dropped at load (CSV data)");
    exp_run->add_option("--rows", ex.surrogate_rows, "surrogate rows")->capture_default_str();
    exp_run->add_option("--prior", ex.surrogate_prior, "surrogate positive prior")
        ->capture_default_str();
    exp_run->add_option("--features", ex.surrogate_features, "surrogate feature count")
        ->capture_default_str();
    exp_run->add_option("--data-seed", ex.data_seed, "surrogate generation seed")
        ->capture_default_str();
    exp_run->add_option("--seeds", exr.n_seeds, "number of training seeds, used as 1..N")
        ->capture_default_str();
    exp_run->add_option("--synth-count", exr.synth_count,
                        "synthetic rows per augmented model (default: train minority count)");
    exp_run->add_option("--synth-ratio", ex.synth_ratio, "capsule perturbation magnitude")
        ->capture_default_str();
    exp_run->add_option("--rounds", ex.gbt.n_rounds, "gbt boosting rounds")->capture_default_str();
    exp_run->add_option("--depth", ex.gbt.max_depth, "gbt tree depth")->capture_default_str();
    exp_run->add_option("--lr", ex.gbt.learning_rate, "gbt shrinkage")->capture_default_str();
    exp_run->add_option("--bins", ex.gbt.n_bins, "gbt histogram bins")->capture_default_str();
    exp_run
        ->add_option("--profile", exr.profile,
                     "capsule profile: desk (reduced widths, 20 epochs) or paper (full size)")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->capture_default_str();
    auto* co_epochs = exp_run->add_option("--epochs", co.epochs, "capsule epochs override");
    auto* co_feat = exp_run->add_option("--feat-dim", co.feat_dim, "capsule feature width override");
    auto* co_nprim = exp_run->add_option("--n-primary", co.n_primary, "primary capsules override");
    auto* co_pdim =
        exp_run->add_option("--primary-dim", co.primary_dim, "primary dimension override");
    auto* co_cdim = exp_run->add_option("--class-dim", co.class_dim, "class dimension override");
    auto* co_dec = exp_run->add_option("--decoder-hidden", co.decoder, "decoder widths override")
                       ->expected(2);
    auto* co_rout = exp_run->add_option("--routing", co.routing, "routing iterations override");
    auto* co_batch = exp_run->add_option("--batch", co.batch, "mini-batch size override");
    auto* co_alr = exp_run->add_option("--adam-lr", co.adam_lr, "Adam learning rate override");
    exp_run->add_option("--out", exr.out, "report directory")->capture_default_str();
    exp_run->callback([&] {
        ex.caps = exr.profile == "paper" ? capsnet::CapsNetConfig{}
                                         : evalharness::desk_caps_profile();
        if (co_epochs->count()) ex.caps.epochs = co.epochs;
        if (co_feat->count()) ex.caps.feat_dim = co.feat_dim;
        if (co_nprim->count()) ex.caps.n_primary = co.n_primary;
        if (co_pdim->count()) ex.caps.primary_dim = co.primary_dim;
        if (co_cdim->count()) ex.caps.class_dim = co.class_dim;
        if (co_dec->count()) ex.caps.decoder_hidden = {co.decoder[0], co.decoder[1]};
        if (co_rout->count()) ex.caps.routing_iters = co.routing;
        if (co_batch->count()) ex.caps.batch_size = co.batch;
        if (co_alr->count()) ex.caps.adam_lr = co.adam_lr;
        if (exr.data == "surrogate") {
            ex.source = evalharness::DataSource::Surrogate;
        } else {
            ex.source = evalharness::DataSource::KaggleCsv;
            ex.csv_path = exr.data;
        }
        require(exr.n_seeds >= 1, ErrorCode::Precondition, "--seeds must be at least 1");
        ex.seeds.clear();
        for (std::size_t i = 1; i <= exr.n_seeds; ++i) ex.seeds.push_back(i);
        if (exr.synth_count >= 0) ex.synth_count = static_cast<std::size_t>(exr.synth_count);
        echo_config({{"command", "experiment"},
                     {"data", exr.data},
                     {"target", ex.target},
                     {"drop", ex.drop},
                     {"rows", ex.surrogate_rows},
                     {"prior", ex.surrogate_prior},
                     {"features", ex.surrogate_features},
                     {"data_seed", ex.data_seed},
                     {"seeds", ex.seeds},
                     {"synth_count",
                      ex.synth_count ? ordered_json(*ex.synth_count) : ordered_json(nullptr)},
                     {"synth_ratio", ex.synth_ratio},
                     {"gbt",
                      {{"rounds", ex.gbt.n_rounds},
                       {"depth", ex.gbt.max_depth},
                       {"lr", ex.gbt.learning_rate},
                       {"bins", ex.gbt.n_bins}}},
                     {"profile", exr.profile},
                     {"capsnet",
                      {{"feat_dim", ex.caps.feat_dim},
                       {"n_primary", ex.caps.n_primary},
                       {"primary_dim", ex.caps.primary_dim},
                       {"class_dim", ex.caps.class_dim},
                       {"decoder_hidden", ex.caps.decoder_hidden},
                       {"routing_iters", ex.caps.routing_iters},
                       {"epochs", ex.caps.epochs},
                       {"batch_size", ex.caps.batch_size},
                       {"adam_lr", ex.caps.adam_lr}}},
                     {"out", exr.out}});
        const auto report = evalharness::run_experiment(ex);
        evalharness::write_report(report, exr.out);
        std::cout << "dataset: " << report.data.n_rows << " rows, " << report.data.positives
                  << " positives\n";
        for (std::size_t m = 0; m < evalharness::kModelNames.size(); ++m)
            std::cout << "mean AUC " << evalharness::kModelNames[m] << ": "
                      << format_double(report.mean_auc[m]) << "\n";
        std::cout << "report written to " << exr.out << "\n";
    });

    // curves ---------------------------------------------------------------------------------
    struct {
        std::string data, score, label, out;
    } cu;
    auto* curves_cmd = app.add_subcommand(
        "curves", "Precision/recall, F1 and ROC tables from a scored CSV");
    curves_cmd->fallthrough();
    curves_cmd->add_option("--data", cu.data, "scored CSV")->required();
    curves_cmd->add_option("--score", cu.score, "probability column")->required();
    curves_cmd->add_option("--label", cu.label, "actual binary label column")->required();
    curves_cmd->add_option("--out", cu.out, "output directory")->required();
    curves_cmd->callback([&] {
        echo_config({{"command", "curves"},
                     {"data", cu.data},
                     {"score", cu.score},
                     {"label", cu.label},
                     {"out", cu.out}});
        const auto ds = tabular::load_csv(cu.data, cu.label, {});
        const auto col = ds.column_index(cu.score);
        require(col.has_value(), ErrorCode::MissingColumn, cu.score);
        std::vector<double> scores(ds.n_rows());
        for (std::size_t r = 0; r < ds.n_rows(); ++r) scores[r] = ds.at(r, *col);
        const auto labels = ds.labels();
        const auto c =
            evalharness::curves(scores, labels, evalharness::default_cutoff_grid());
        write_curve_files(c, cu.out);
        std::cout << "auc " << format_double(c.auc) << "\n"
                  << "curves written to " << cu.out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << one_line(e.what()) << "\n";
        return exit_class(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
