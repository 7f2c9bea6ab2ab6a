#include "edgescore/ledger.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>

#include "edgescore/bytes.hpp"
#include "edgescore/engine.hpp"
#include "edgescore/errors.hpp"
#include "edgescore/numtext.hpp"

namespace edgescore::ledger {
namespace {

constexpr char kFieldSep = 0x1F;
constexpr char kRecordSep = 0x1E;

bool is_upper_hex(const std::string& s, std::size_t len) {
    if (s.size() != len) return false;
    return std::all_of(s.begin(), s.end(),
                       [](char c) { return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'F'); });
}

std::uint64_t parse_u64(std::string_view s, std::size_t line_no) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && p == s.data() + s.size(), ErrorCode::BadChainFormat,
            "line " + std::to_string(line_no) + ": bad integer \"" + std::string(s) + "\"");
    return v;
}

std::int64_t parse_i64(std::string_view s, std::size_t line_no) {
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && p == s.data() + s.size(), ErrorCode::BadChainFormat,
            "line " + std::to_string(line_no) + ": bad integer \"" + std::string(s) + "\"");
    return v;
}

Hash32 parse_hash(std::string_view s, std::size_t line_no) {
    Hash32 h{};
    require(s.size() == 64, ErrorCode::BadChainFormat,
            "line " + std::to_string(line_no) + ": hash field of length " +
                std::to_string(s.size()));
    auto nibble = [&](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    for (std::size_t i = 0; i < 32; ++i) {
        const int hi = nibble(s[2 * i]);
        const int lo = nibble(s[2 * i + 1]);
        require(hi >= 0 && lo >= 0, ErrorCode::BadChainFormat,
                "line " + std::to_string(line_no) + ": hash is not lowercase hex");
        h[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return h;
}

bool needs_escape(char c) {
    return c == '%' || c == ';' || c == ',' || c == '=' || c == '\t' || c == '\n' || c == '\r';
}

std::string escape_field(std::string_view s) {
    static const char* digits = "0123456789ABCDEF";
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (needs_escape(c)) {
            const auto b = static_cast<unsigned char>(c);
            out += '%';
            out += digits[b >> 4];
            out += digits[b & 0xF];
        } else {
            out += c;
        }
    }
    return out;
}

std::string unescape_field(std::string_view s, std::size_t line_no) {
    std::string out;
    out.reserve(s.size());
    auto nibble = [&](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '%') {
            out += s[i];
            continue;
        }
        require(i + 2 < s.size(), ErrorCode::BadChainFormat,
                "line " + std::to_string(line_no) + ": dangling escape");
        const int hi = nibble(s[i + 1]);
        const int lo = nibble(s[i + 2]);
        require(hi >= 0 && lo >= 0, ErrorCode::BadChainFormat,
                "line " + std::to_string(line_no) + ": bad escape");
        out += static_cast<char>(hi << 4 | lo);
        i += 2;
    }
    return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t at = s.find(sep, start);
        if (at == std::string_view::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, at - start));
        start = at + 1;
    }
}

} // namespace

std::string_view to_string(RecordKind kind) {
    switch (kind) {
        case RecordKind::Transaction: return "transaction";
        case RecordKind::ModelAnchor: return "model-anchor";
        case RecordKind::ScoreResult: return "score-result";
    }
    return "?";
}

RecordKind record_kind_from(std::string_view text) {
    if (text == "transaction") return RecordKind::Transaction;
    if (text == "model-anchor") return RecordKind::ModelAnchor;
    if (text == "score-result") return RecordKind::ScoreResult;
    raise(ErrorCode::BadChainFormat, "unknown record kind \"" + std::string(text) + "\"");
}

std::vector<std::uint8_t> canonical_record_bytes(std::span<const Record> records) {
    std::string text;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (i > 0) text += kRecordSep;
        text += to_string(records[i].kind);
        auto sorted = records[i].body;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [k, v] : sorted) {
            text += kFieldSep;
            text += k;
            text += kFieldSep;
            text += v;
        }
    }
    return {text.begin(), text.end()};
}

Hash32 records_hash(std::span<const Record> records) {
    return sha256(canonical_record_bytes(records));
}

Hash32 block_hash(const Block& block) {
    ByteWriter w;
    w.u64(block.index);
    w.i64(block.timestamp);
    w.raw(block.prev_hash);
    w.raw(block.records_hash);
    w.u64(block.nonce);
    w.u32(block.difficulty);
    return sha256(w.bytes());
}

const Block& append_block(Chain& chain, std::vector<Record> records, std::int64_t timestamp,
                          std::uint32_t difficulty) {
    const ValidationReport report = validate_chain(chain);
    require(report.ok, ErrorCode::InvalidChain,
            "block " + std::to_string(report.bad_index) + ": " + report.reason);

    Block block;
    block.index = chain.blocks.size();
    block.timestamp = timestamp;
    if (!chain.blocks.empty()) block.prev_hash = chain.blocks.back().block_hash;
    block.records = std::move(records);
    block.records_hash = records_hash(block.records);
    block.difficulty = difficulty;
    for (block.nonce = 0;; ++block.nonce) {
        block.block_hash = block_hash(block);
        if (leading_zero_bits(block.block_hash) >= static_cast<int>(difficulty)) break;
    }
    chain.blocks.push_back(std::move(block));
    return chain.blocks.back();
}

ValidationReport validate_chain(const Chain& chain) {
    for (std::size_t i = 0; i < chain.blocks.size(); ++i) {
        const Block& b = chain.blocks[i];
        if (b.index != i) return {false, i, "INDEX"};
        if (records_hash(b.records) != b.records_hash) return {false, i, "RECORDS_HASH"};
        if (block_hash(b) != b.block_hash) return {false, i, "BLOCK_HASH"};
        if (leading_zero_bits(b.block_hash) < static_cast<int>(b.difficulty))
            return {false, i, "DIFFICULTY"};
        const Hash32 expected_prev = i == 0 ? Hash32{} : chain.blocks[i - 1].block_hash;
        if (b.prev_hash != expected_prev) return {false, i, "LINKAGE"};
    }
    return {};
}

const Block& anchor_model(Chain& chain, const std::string& key_hex, const std::string& name,
                          std::int64_t timestamp, std::uint32_t difficulty) {
    require(is_upper_hex(key_hex, 40), ErrorCode::Precondition,
            "store key must be 40 uppercase hex characters");
    Record anchor;
    anchor.kind = RecordKind::ModelAnchor;
    anchor.body = {{"name", name}, {"store_key", key_hex}};
    return append_block(chain, {std::move(anchor)}, timestamp, difficulty);
}

bool is_anchored(const Chain& chain, const std::string& key_hex) {
    for (const Block& b : chain.blocks)
        for (const Record& r : b.records) {
            if (r.kind != RecordKind::ModelAnchor) continue;
            for (const auto& [k, v] : r.body)
                if (k == "store_key" && v == key_hex) return true;
        }
    return false;
}

std::uint64_t register_contract(Ledger& ledger, ContractRule rule) {
    require(is_upper_hex(rule.model_key, 40), ErrorCode::Precondition,
            "store key must be 40 uppercase hex characters");
    if (rule.predicate) {
        const auto& op = rule.predicate->op;
        require(op == "<" || op == "<=" || op == "=" || op == ">=" || op == ">",
                ErrorCode::Precondition, "unknown predicate operator \"" + op + "\"");
        require(!rule.predicate->field.empty(), ErrorCode::Precondition,
                "predicate field is empty");
    }
    for (const auto& existing : ledger.rules)
        require(existing.id != rule.id, ErrorCode::Precondition,
                "rule id " + std::to_string(rule.id) + " already registered");
    require(is_anchored(ledger.chain, rule.model_key), ErrorCode::UnanchoredModel,
            "store key " + rule.model_key + " is not anchored on-chain");

    const std::uint64_t id = rule.id;
    ledger.rules.push_back(std::move(rule));
    std::sort(ledger.rules.begin(), ledger.rules.end(),
              [](const ContractRule& a, const ContractRule& b) { return a.id < b.id; });
    return id;
}

namespace {

bool predicate_matches(const FieldPredicate& pred, const Record& record) {
    for (const auto& [k, v] : record.body) {
        if (k != pred.field) continue;
        const auto parsed = parse_double(v);
        if (!parsed) return false;
        const double x = *parsed;
        if (pred.op == "<") return x < pred.value;
        if (pred.op == "<=") return x <= pred.value;
        if (pred.op == "=") return x == pred.value;
        if (pred.op == ">=") return x >= pred.value;
        return x > pred.value;
    }
    return false;
}

} // namespace

bool rule_satisfied(const ContractRule& rule, const Block& block) {
    std::size_t transactions = 0;
    std::size_t eligible = 0;
    for (const Record& r : block.records) {
        if (r.kind != RecordKind::Transaction) continue;
        ++transactions;
        if (!rule.predicate || predicate_matches(*rule.predicate, r)) ++eligible;
    }
    return transactions > 0 && eligible >= rule.min_records;
}

namespace {

tabular::TabularDataset transactions_as_dataset(const Block& block,
                                                const std::vector<tabular::VariableSpec>& vars) {
    tabular::TabularDataset ds;
    ds.specs = vars;
    std::vector<double> row(vars.size());
    for (const Record& r : block.records) {
        if (r.kind != RecordKind::Transaction) continue;
        for (std::size_t i = 0; i < vars.size(); ++i) {
            const auto it = std::find_if(r.body.begin(), r.body.end(),
                                         [&](const auto& kv) { return kv.first == vars[i].name; });
            require(it != r.body.end(), ErrorCode::Precondition,
                    "transaction record lacks field " + vars[i].name);
            const auto parsed = parse_double(it->second);
            require(parsed.has_value(), ErrorCode::Precondition,
                    "transaction field " + vars[i].name + " is not numeric: \"" + it->second +
                        "\"");
            row[i] = *parsed;
        }
        ds.append_row(row, 0);
    }
    return ds;
}

} // namespace

std::vector<FiredAction> evaluate_contracts(Ledger& ledger, std::uint64_t block_index,
                                            const BlobResolver& resolve, std::int64_t timestamp,
                                            std::uint32_t difficulty) {
    std::vector<FiredAction> actions;
    std::deque<std::uint64_t> pending{block_index};

    while (!pending.empty()) {
        const std::uint64_t idx = pending.front();
        pending.pop_front();
        require(idx < ledger.chain.blocks.size(), ErrorCode::Precondition,
                "no block at index " + std::to_string(idx));

        for (const ContractRule& rule : ledger.rules) { // kept sorted by id
            if (ledger.fired.count({idx, rule.id})) continue;
            if (!rule_satisfied(rule, ledger.chain.blocks[idx])) continue;
            ledger.fired.insert({idx, rule.id});

            FiredAction action;
            action.rule_id = rule.id;
            action.trigger_block = idx;
            try {
                const astore::AstoreBlob blob = resolve(rule.model_key);
                const auto input =
                    transactions_as_dataset(ledger.chain.blocks[idx], blob.input_vars);
                const engine::ScoreResult scored = engine::astore_score(blob, input);

                std::vector<Record> results;
                results.reserve(scored.output.n_rows());
                for (std::size_t r = 0; r < scored.output.n_rows(); ++r) {
                    Record rec;
                    rec.kind = RecordKind::ScoreResult;
                    rec.body = {{"source_block", std::to_string(idx)},
                                {"row", std::to_string(r)}};
                    for (std::size_t c = 0; c < scored.output.n_cols(); ++c)
                        rec.body.emplace_back(scored.output.specs[c].name,
                                              format_double(scored.output.at(r, c)));
                    results.push_back(std::move(rec));
                }
                const Block& result =
                    append_block(ledger.chain, std::move(results), timestamp, difficulty);
                action.result_block = result.index;
                action.rows_scored = scored.output.n_rows();
                pending.push_back(result.index);
            } catch (const Error& e) {
                action.failed = true;
                action.error = e.what();
            }
            actions.push_back(std::move(action));
        }
    }
    return actions;
}

AppendOutcome append_and_evaluate(Ledger& ledger, std::vector<Record> records,
                                  std::int64_t timestamp, std::uint32_t difficulty,
                                  const BlobResolver& resolve) {
    AppendOutcome outcome;
    outcome.block_index = append_block(ledger.chain, std::move(records), timestamp, difficulty).index;
    outcome.fired = evaluate_contracts(ledger, outcome.block_index, resolve, timestamp, difficulty);
    return outcome;
}

void save_chain(const Chain& chain, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::IoError, "cannot open " + path + " for writing");
    for (const Block& b : chain.blocks) {
        out << b.index << '\t' << b.timestamp << '\t' << to_hex(b.prev_hash) << '\t'
            << to_hex(b.records_hash) << '\t' << b.nonce << '\t' << b.difficulty << '\t'
            << to_hex(b.block_hash) << '\t';
        for (std::size_t i = 0; i < b.records.size(); ++i) {
            if (i > 0) out << ';';
            const Record& r = b.records[i];
            out << to_string(r.kind);
            for (const auto& [k, v] : r.body) out << ',' << escape_field(k) << '=' << escape_field(v);
        }
        out << '\n';
    }
    out.flush();
    require(out.good(), ErrorCode::IoError, "write to " + path + " failed");
}

Chain load_chain(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::IoError, "cannot open " + path);

    Chain chain;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto fields = split(line, '\t');
        require(fields.size() == 8, ErrorCode::BadChainFormat,
                "line " + std::to_string(line_no) + ": expected 8 fields, got " +
                    std::to_string(fields.size()));

        Block b;
        b.index = parse_u64(fields[0], line_no);
        b.timestamp = parse_i64(fields[1], line_no);
        b.prev_hash = parse_hash(fields[2], line_no);
        b.records_hash = parse_hash(fields[3], line_no);
        b.nonce = parse_u64(fields[4], line_no);
        b.difficulty = static_cast<std::uint32_t>(parse_u64(fields[5], line_no));
        b.block_hash = parse_hash(fields[6], line_no);

        if (!fields[7].empty()) {
            for (const auto rec_text : split(fields[7], ';')) {
                const auto parts = split(rec_text, ',');
                Record r;
                r.kind = record_kind_from(parts[0]);
                for (std::size_t i = 1; i < parts.size(); ++i) {
                    const std::size_t eq = parts[i].find('=');
                    require(eq != std::string_view::npos, ErrorCode::BadChainFormat,
                            "line " + std::to_string(line_no) + ": record field without '='");
                    r.body.emplace_back(unescape_field(parts[i].substr(0, eq), line_no),
                                        unescape_field(parts[i].substr(eq + 1), line_no));
                }
                b.records.push_back(std::move(r));
            }
        }
        chain.blocks.push_back(std::move(b));
    }
    return chain;
}

} // namespace edgescore::ledger
