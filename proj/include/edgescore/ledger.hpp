#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "edgescore/astore.hpp"
#include "edgescore/hash.hpp"

namespace edgescore::ledger {

enum class RecordKind {
    Transaction,
    ModelAnchor,
    ScoreResult,
};

std::string_view to_string(RecordKind kind);
RecordKind record_kind_from(std::string_view text); // BadChainFormat on unknown text

struct Record {
    RecordKind kind = RecordKind::Transaction;
    std::vector<std::pair<std::string, std::string>> body;

    bool operator==(const Record&) const = default;
};

struct Block {
    std::uint64_t index = 0;
    std::int64_t timestamp = 0;
    Hash32 prev_hash{};    // 32 zero bytes for the genesis block
    Hash32 records_hash{}; // SHA-256 of the canonical record bytes
    std::uint64_t nonce = 0;
    std::uint32_t difficulty = 0; // required leading zero bits of block_hash
    Hash32 block_hash{};
    std::vector<Record> records;

    bool operator==(const Block&) const = default;
};

struct Chain {
    std::vector<Block> blocks;

    bool operator==(const Chain&) const = default;
};

// Canonical serialization behind records_hash: per record the kind text and
// its key/value pairs sorted by key, all joined with 0x1F; records joined
// with 0x1E. Fixed so the hash is platform-stable.
std::vector<std::uint8_t> canonical_record_bytes(std::span<const Record> records);
Hash32 records_hash(std::span<const Record> records);

// SHA-256 over index, timestamp, prev_hash, records_hash, nonce, difficulty
// (integers little-endian).
Hash32 block_hash(const Block& block);

// Validates the existing chain, then mines the nonce from 0 upward until the
// block hash carries `difficulty` leading zero bits. Deterministic.
const Block& append_block(Chain& chain, std::vector<Record> records, std::int64_t timestamp,
                          std::uint32_t difficulty);

struct ValidationReport {
    bool ok = true;
    std::size_t bad_index = 0;
    std::string reason; // RECORDS_HASH, BLOCK_HASH, DIFFICULTY, LINKAGE or INDEX
};

ValidationReport validate_chain(const Chain& chain);

// Appends a model-anchor block holding the store key (40 uppercase hex) and a
// display name.
const Block& anchor_model(Chain& chain, const std::string& key_hex, const std::string& name,
                          std::int64_t timestamp, std::uint32_t difficulty);

bool is_anchored(const Chain& chain, const std::string& key_hex);

struct FieldPredicate {
    std::string field;
    std::string op; // <, <=, =, >=, >
    double value = 0.0;
};

struct ContractRule {
    std::uint64_t id = 0;
    std::size_t min_records = 1; // eligible transaction records needed to fire
    std::optional<FieldPredicate> predicate;
    std::string model_key; // store key of the anchored scoring model
};

struct Ledger {
    Chain chain;
    std::vector<ContractRule> rules;
    std::set<std::pair<std::uint64_t, std::uint64_t>> fired; // (block index, rule id)
};

// The rule's model must already be anchored on-chain. Rule ids are unique.
std::uint64_t register_contract(Ledger& ledger, ContractRule rule);

// True when the block carries at least one transaction record and the count
// of eligible ones reaches min_records. Blocks without transaction records
// (score results, anchors) never satisfy a rule, which is what keeps fired
// actions from re-triggering themselves.
bool rule_satisfied(const ContractRule& rule, const Block& block);

using BlobResolver = std::function<astore::AstoreBlob(const std::string& key_hex)>;

struct FiredAction {
    std::uint64_t rule_id = 0;
    std::uint64_t trigger_block = 0;
    std::uint64_t result_block = 0; // meaningful only when !failed
    std::size_t rows_scored = 0;
    bool failed = false;
    std::string error;
};

// Evaluates every rule (in id order) against the block, scoring its
// transaction records with the anchored model and appending one score-result
// block per fired rule. Result blocks are evaluated in turn. Each rule fires
// at most once per block; a failed action is reported and the chain moves on.
std::vector<FiredAction> evaluate_contracts(Ledger& ledger, std::uint64_t block_index,
                                            const BlobResolver& resolve, std::int64_t timestamp,
                                            std::uint32_t difficulty);

struct AppendOutcome {
    std::uint64_t block_index = 0;
    std::vector<FiredAction> fired;
};

AppendOutcome append_and_evaluate(Ledger& ledger, std::vector<Record> records,
                                  std::int64_t timestamp, std::uint32_t difficulty,
                                  const BlobResolver& resolve);

// One block per line: index, timestamp, prev hash, records hash, nonce,
// difficulty, block hash (hashes lowercase hex), then the records. Record
// text is percent-escaped so the separators stay unambiguous.
void save_chain(const Chain& chain, const std::string& path);
Chain load_chain(const std::string& path);

} // namespace edgescore::ledger
