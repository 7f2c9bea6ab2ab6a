#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edgescore/tabular.hpp"

namespace edgescore::astore {

enum class Algorithm : std::uint16_t {
    Gbt = 1,
    CapsNet = 2,
};

// First 20 bytes of SHA-256 over the blob body; printed as 40 uppercase hex
// characters. Any body bit flip changes it.
using StoreKey = std::array<std::uint8_t, 20>;

StoreKey compute_key(std::span<const std::uint8_t> body);
std::string key_to_hex(const StoreKey& key);

struct Metadata {
    std::string name;
    std::string description;
    Algorithm algorithm = Algorithm::Gbt;
    std::int64_t timestamp = 0; // seconds since epoch, supplied by the caller

    bool operator==(const Metadata&) const = default;
};

using Params = std::vector<std::pair<std::string, std::string>>;

struct AstoreBlob {
    Metadata metadata;
    Params params;
    std::vector<tabular::VariableSpec> input_vars;
    std::vector<tabular::VariableSpec> output_vars;
    std::vector<std::uint8_t> payload;
    StoreKey store_key{};
};

// Pure function of its arguments; equal inputs give byte-identical blobs.
std::vector<std::uint8_t> serialize(const Metadata& metadata, const Params& params,
                                    const std::vector<tabular::VariableSpec>& input_vars,
                                    const std::vector<tabular::VariableSpec>& output_vars,
                                    std::span<const std::uint8_t> payload);

// Key check runs before any structural parsing, so every corruption is
// reported as KEY_MISMATCH rather than whatever parse error it would cause.
AstoreBlob deserialize(std::span<const std::uint8_t> bytes);

// Recomputes the store key over the body and compares with the stored one;
// returns normally when the blob is intact.
void verify(std::span<const std::uint8_t> bytes);

struct Description {
    const Metadata& metadata;
    const std::vector<tabular::VariableSpec>& input_vars;
    const std::vector<tabular::VariableSpec>& output_vars;
};

inline Description describe(const AstoreBlob& blob) {
    return {blob.metadata, blob.input_vars, blob.output_vars};
}

} // namespace edgescore::astore
