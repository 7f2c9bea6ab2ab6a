#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

namespace edgescore {

// Shortest round-trip decimal form; locale-free and stable across runs, so
// emitted files are byte-reproducible.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

// Strict '.'-decimal parse of a full token; rejects trailing junk and
// non-finite values (the ingestion invariant forbids NaN/Inf).
inline std::optional<double> parse_double(std::string_view token) {
    if (token.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    if (!(v == v) || v > 1.7976931348623157e308 || v < -1.7976931348623157e308) return std::nullopt;
    return v;
}

} // namespace edgescore
