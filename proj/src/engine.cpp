#include "edgescore/engine.hpp"

#include <cmath>
#include <deque>

#include "edgescore/errors.hpp"
#include "edgescore/model_codec.hpp"

namespace edgescore::engine {
namespace {

double capsnet_probability(const capsnet::Classification& cl) {
    const double total = cl.norms[0] + cl.norms[1];
    return total > 0.0 ? cl.norms[1] / total : 0.5;
}

} // namespace

void validate_inputs(const tabular::TabularDataset& ds,
                     const std::vector<tabular::VariableSpec>& input_vars) {
    std::string violations;
    for (const auto& v : input_vars) {
        const auto idx = ds.column_index(v.name);
        std::string problem;
        if (!idx) {
            problem = "missing variable " + v.name;
        } else if (ds.specs[*idx].kind != v.kind) {
            problem = "variable " + v.name + " has kind " +
                      std::to_string(static_cast<int>(ds.specs[*idx].kind)) + ", declared " +
                      std::to_string(static_cast<int>(v.kind));
        }
        if (problem.empty()) continue;
        if (!violations.empty()) violations += "; ";
        violations += problem;
    }
    require(violations.empty(), ErrorCode::InputMismatch, violations);
}

Scorer::Scorer(const astore::AstoreBlob& blob)
    : input_vars_(blob.input_vars), output_vars_(blob.output_vars) {
    try {
        if (blob.metadata.algorithm == astore::Algorithm::Gbt) {
            auto model = astore::decode_gbt(blob.payload);
            require(model.n_features == input_vars_.size(), ErrorCode::DescribeFailed,
                    "model over " + std::to_string(model.n_features) + " features but " +
                        std::to_string(input_vars_.size()) + " declared inputs");
            model_ = std::move(model);
        } else {
            auto model = astore::decode_capsnet(blob.payload);
            require(model.config.input_dim == input_vars_.size(), ErrorCode::DescribeFailed,
                    "model over " + std::to_string(model.config.input_dim) + " inputs but " +
                        std::to_string(input_vars_.size()) + " declared");
            require(model.config.n_class == 2, ErrorCode::DescribeFailed,
                    "scoring schema is binary; model has " +
                        std::to_string(model.config.n_class) + " classes");
            model_ = std::move(model);
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::DescribeFailed) throw;
        raise(ErrorCode::DescribeFailed, e.detail());
    }
}

std::array<double, 2> Scorer::score(std::span<const double> row) const {
    require(row.size() == input_vars_.size(), ErrorCode::ScoreFailed,
            "event of width " + std::to_string(row.size()) + ", schema has " +
                std::to_string(input_vars_.size()));
    double p = 0.0;
    if (const auto* g = std::get_if<gbt::GbtModel>(&model_))
        p = gbt::score_gbt(*g, row);
    else
        p = capsnet_probability(capsnet::classify(std::get<capsnet::CapsNetModel>(model_), row));
    require(std::isfinite(p), ErrorCode::ScoreFailed, "non-finite probability");
    return {p, p >= 0.5 ? 1.0 : 0.0};
}

ScoreResult astore_score(const astore::AstoreBlob& blob, const tabular::TabularDataset& input,
                         const std::function<void(const tabular::TabularDataset&)>& write,
                         EngineCounters* counters) {
    EngineCounters local;
    EngineCounters& c = counters ? *counters : local;
    c = EngineCounters{};

    ++c.describe_calls;
    const Scorer scorer(blob);

    ++c.validate_calls;
    validate_inputs(input, scorer.input_vars());

    ++c.setup_calls;
    require(!scorer.output_vars().empty(), ErrorCode::OutputSetupFailed,
            "blob declares no output variables");
    for (const auto& v : scorer.output_vars())
        require(v.kind == tabular::VarKind::Numeric, ErrorCode::OutputSetupFailed,
                "output variable " + v.name + " is not numeric");
    tabular::TabularDataset out;
    out.specs = scorer.output_vars();

    std::vector<std::size_t> cols;
    cols.reserve(scorer.input_vars().size());
    for (const auto& v : scorer.input_vars()) cols.push_back(*input.column_index(v.name));

    std::vector<double> row(cols.size());
    for (std::size_t r = 0; r < input.n_rows(); ++r) {
        for (std::size_t i = 0; i < cols.size(); ++i) row[i] = input.at(r, cols[i]);
        ++c.score_calls;
        std::array<double, 2> scored;
        try {
            scored = scorer.score(row);
        } catch (const Error& e) {
            const std::string inner =
                e.code() == ErrorCode::ScoreFailed ? e.detail() : std::string(e.what());
            raise(ErrorCode::ScoreFailed, "row " + std::to_string(r) + ": " + inner);
        }
        ++c.insert_calls;
        out.append_row(scored, input.provenance[r]);
    }

    ++c.write_calls;
    if (write) {
        try {
            write(out);
        } catch (const Error& e) {
            raise(ErrorCode::WriteFailed, e.detail());
        } catch (const std::exception& e) {
            raise(ErrorCode::WriteFailed, e.what());
        }
    }

    return {std::move(out), c};
}

StreamSummary stream_score(const astore::AstoreBlob& blob, EventSource& source,
                           const WindowConfig& wc, WindowSink& sink) {
    require(wc.window >= 1, ErrorCode::Precondition, "window size must be at least 1");
    require(wc.slide >= 1 && wc.slide <= wc.window, ErrorCode::Precondition,
            "slide must lie in [1, window]");

    StreamSummary sum;
    EngineCounters& c = sum.counters;

    ++c.describe_calls;
    const Scorer scorer(blob);

    ++c.setup_calls;
    require(!scorer.output_vars().empty(), ErrorCode::OutputSetupFailed,
            "blob declares no output variables");

    std::deque<std::vector<double>> buf;
    std::size_t buf_start = 0;   // global index of buf.front()
    std::size_t covered_end = 0; // end of the last full window
    std::size_t window_index = 0;

    auto emit_window = [&](std::size_t count) {
        WindowResult wr;
        wr.window_index = window_index++;
        wr.first_event = buf_start;
        try {
            for (std::size_t i = 0; i < count; ++i) {
                ++c.score_calls;
                wr.outputs.push_back(scorer.score(buf[i]));
                ++c.insert_calls;
            }
        } catch (const Error& e) {
            wr.failed = true;
            wr.outputs.clear();
            wr.error = e.what();
        }
        if (wr.failed)
            ++sum.windows_failed;
        else
            sum.events_scored += wr.outputs.size();
        ++sum.windows_emitted;
        ++c.write_calls;
        sink.window(wr);
    };

    while (auto event = source.next()) {
        buf.push_back(std::move(*event));
        ++sum.events_in;
        sum.peak_buffered = std::max(sum.peak_buffered, buf.size());
        if (buf.size() == wc.window) {
            emit_window(wc.window);
            covered_end = buf_start + wc.window;
            for (std::size_t i = 0; i < wc.slide; ++i) buf.pop_front(); // discarded for good
            buf_start += wc.slide;
        }
    }

    // Trailing partial window, only when it holds an event no full window saw.
    if (!buf.empty() && sum.events_in > covered_end) emit_window(buf.size());

    return sum;
}

} // namespace edgescore::engine
