#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace edgescore {

using Hash32 = std::array<std::uint8_t, 32>;

Hash32 sha256(std::span<const std::uint8_t> data);

std::string to_hex(std::span<const std::uint8_t> bytes, bool uppercase = false);

// Parses an even-length hex string; throws Precondition on malformed input.
std::vector<std::uint8_t> from_hex(std::string_view hex);

// Number of leading zero bits of the digest, MSB-first; the proof-of-work
// difficulty measure used by the ledger.
int leading_zero_bits(const Hash32& h);

} // namespace edgescore
