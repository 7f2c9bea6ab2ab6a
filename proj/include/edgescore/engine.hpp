#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "edgescore/astore.hpp"
#include "edgescore/capsnet.hpp"
#include "edgescore/gbt.hpp"
#include "edgescore/tabular.hpp"

namespace edgescore::engine {

// One increment per stage entry; score_calls counts per-row invocations.
// Lets tests observe that no scoring happens after a validation failure.
struct EngineCounters {
    std::size_t describe_calls = 0;
    std::size_t validate_calls = 0;
    std::size_t setup_calls = 0;
    std::size_t score_calls = 0;
    std::size_t insert_calls = 0;
    std::size_t write_calls = 0;
};

// OK iff every declared variable exists in ds with the declared kind; extra
// columns are permitted. Throws InputMismatch listing every violation.
void validate_inputs(const tabular::TabularDataset& ds,
                     const std::vector<tabular::VariableSpec>& input_vars);

// Decoded model plus the scoring convention shared by batch and stream mode:
// one probability and one 0/1 decision at 0.5.
class Scorer {
public:
    explicit Scorer(const astore::AstoreBlob& blob);

    const std::vector<tabular::VariableSpec>& input_vars() const { return input_vars_; }
    const std::vector<tabular::VariableSpec>& output_vars() const { return output_vars_; }

    // row holds the declared input variables in schema order.
    std::array<double, 2> score(std::span<const double> row) const;

private:
    std::vector<tabular::VariableSpec> input_vars_;
    std::vector<tabular::VariableSpec> output_vars_;
    std::variant<gbt::GbtModel, capsnet::CapsNetModel> model_;
};

struct ScoreResult {
    tabular::TabularDataset output;
    EngineCounters counters;
};

// The scoring pipeline, stage by stage: describe, input validation, output
// setup, per-row score, insert, write. The first failing stage aborts the
// call; the write callback (when given) is the write stage.
ScoreResult astore_score(const astore::AstoreBlob& blob, const tabular::TabularDataset& input,
                         const std::function<void(const tabular::TabularDataset&)>& write = {},
                         EngineCounters* counters = nullptr);

struct WindowConfig {
    std::size_t window = 1; // W, events per window
    std::size_t slide = 1;  // S, events the window advances by; 1 <= S <= W
};

class EventSource {
public:
    virtual ~EventSource() = default;
    // One event in input-schema order; nullopt ends the stream.
    virtual std::optional<std::vector<double>> next() = 0;
};

class MemoryEventSource : public EventSource {
public:
    explicit MemoryEventSource(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {}

    std::optional<std::vector<double>> next() override {
        if (pos_ == rows_.size()) return std::nullopt;
        return rows_[pos_++];
    }

private:
    std::vector<std::vector<double>> rows_;
    std::size_t pos_ = 0;
};

struct WindowResult {
    std::size_t window_index = 0;
    std::size_t first_event = 0; // global index of the window's first event
    std::vector<std::array<double, 2>> outputs;
    bool failed = false;
    std::string error;
};

class WindowSink {
public:
    virtual ~WindowSink() = default;
    virtual void window(const WindowResult& result) = 0;
};

class CollectSink : public WindowSink {
public:
    void window(const WindowResult& result) override { windows.push_back(result); }
    std::vector<WindowResult> windows;
};

struct StreamSummary {
    std::size_t events_in = 0;
    std::size_t windows_emitted = 0;
    std::size_t windows_failed = 0;
    std::size_t events_scored = 0; // total emissions, re-scores included
    std::size_t peak_buffered = 0; // never exceeds the window size
    EngineCounters counters;
};

// Sliding-window scoring over an event stream. Windows of W events advance
// by S; at most W events are retained. A window that fails to score is
// reported through the sink with its error and the stream continues. The
// trailing partial window is emitted only when it contains an event no full
// window covered, so tumbling mode (S = W) scores every event exactly once.
StreamSummary stream_score(const astore::AstoreBlob& blob, EventSource& source,
                           const WindowConfig& wc, WindowSink& sink);

} // namespace edgescore::engine
