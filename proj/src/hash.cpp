#include "edgescore/hash.hpp"

#include <openssl/evp.h>

#include <vector>

#include "edgescore/errors.hpp"

namespace edgescore {

Hash32 sha256(std::span<const std::uint8_t> data) {
    Hash32 digest{};
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
    return digest;
}

std::string to_hex(std::span<const std::uint8_t> bytes, bool uppercase) {
    static const char* kLower = "0123456789abcdef";
    static const char* kUpper = "0123456789ABCDEF";
    const char* table = uppercase ? kUpper : kLower;
    std::string out;
    out.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        out.push_back(table[b >> 4]);
        out.push_back(table[b & 0x0F]);
    }
    return out;
}

static int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
    require(hex.size() % 2 == 0, ErrorCode::Precondition, "hex string has odd length");
    std::vector<std::uint8_t> out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int hi = hex_nibble(hex[2 * i]);
        const int lo = hex_nibble(hex[2 * i + 1]);
        require(hi >= 0 && lo >= 0, ErrorCode::Precondition, "non-hex character");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

int leading_zero_bits(const Hash32& h) {
    int bits = 0;
    for (std::uint8_t b : h) {
        if (b == 0) {
            bits += 8;
            continue;
        }
        for (int i = 7; i >= 0; --i) {
            if (b & (1u << i)) return bits;
            ++bits;
        }
    }
    return bits;
}

} // namespace edgescore
