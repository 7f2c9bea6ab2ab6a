#include "edgescore/astore.hpp"

#include <algorithm>
#include <cstring>

#include "edgescore/bytes.hpp"
#include "edgescore/errors.hpp"
#include "edgescore/hash.hpp"

namespace edgescore::astore {
namespace {

constexpr char kMagic[8] = {'A', 'S', 'T', 'O', 'R', 'E', '0', '1'};
constexpr std::uint16_t kVersion = 1;

enum SectionId : std::uint16_t {
    kMetadata = 1,
    kParams = 2,
    kSchemaIn = 3,
    kSchemaOut = 4,
    kPayload = 5,
    kStoreKey = 6,
};

constexpr std::size_t kSectionCount = 6;
constexpr std::size_t kHeaderSize = sizeof(kMagic) + 2 + 2;
constexpr std::size_t kTableEntrySize = 2 + 8 + 8;
constexpr std::size_t kDataStart = kHeaderSize + kSectionCount * kTableEntrySize;

// Keep serialized blobs under a sanity bound so a corrupt length field can't
// drive a multi-gigabyte allocation downstream.
constexpr std::uint64_t kMaxPayload = 1ull << 32;

void check_specs(const std::vector<tabular::VariableSpec>& vars, const char* which) {
    for (const auto& v : vars)
        require(!v.name.empty(), ErrorCode::InvalidSpec,
                std::string(which) + " variable with empty name");
}

void write_specs(ByteWriter& w, const std::vector<tabular::VariableSpec>& vars) {
    w.u32(static_cast<std::uint32_t>(vars.size()));
    for (const auto& v : vars) {
        w.str(v.name);
        w.u8(static_cast<std::uint8_t>(v.kind));
        w.str(v.format);
    }
}

std::vector<tabular::VariableSpec> read_specs(ByteReader& r, const char* which) {
    const std::uint32_t n = r.u32();
    std::vector<tabular::VariableSpec> vars;
    vars.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        tabular::VariableSpec v;
        v.name = r.str();
        const std::uint8_t kind = r.u8();
        require(kind <= static_cast<std::uint8_t>(tabular::VarKind::BinaryTarget),
                ErrorCode::InvalidSpec,
                std::string(which) + " variable " + std::to_string(i) + " has kind byte " +
                    std::to_string(kind));
        v.kind = static_cast<tabular::VarKind>(kind);
        v.format = r.str();
        vars.push_back(std::move(v));
    }
    return vars;
}

struct TableEntry {
    std::uint16_t id = 0;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
};

// Reads and validates the section table: the six known ids in ascending
// order, laid out contiguously from the end of the table to the end of the
// input, with the 20-byte store key section closing the file.
std::array<TableEntry, kSectionCount> read_table(ByteReader& r, std::size_t total_size) {
    const std::uint16_t count = r.u16();
    require(count == kSectionCount, ErrorCode::InvalidSpec,
            "expected " + std::to_string(kSectionCount) + " sections, header declares " +
                std::to_string(count));

    std::array<TableEntry, kSectionCount> table;
    for (auto& e : table) {
        e.id = r.u16();
        e.offset = r.u64();
        e.length = r.u64();
    }

    std::uint64_t expected_offset = kDataStart;
    for (std::size_t i = 0; i < kSectionCount; ++i) {
        const auto& e = table[i];
        require(e.id == i + 1, ErrorCode::InvalidSpec,
                "section " + std::to_string(i) + " has id " + std::to_string(e.id));
        require(e.offset >= expected_offset, ErrorCode::SectionOverlap,
                "section " + std::to_string(e.id) + " starts at " + std::to_string(e.offset) +
                    " inside the previous section");
        require(e.offset == expected_offset, ErrorCode::InvalidSpec,
                "gap before section " + std::to_string(e.id));
        require(e.length <= total_size && e.offset <= total_size - e.length,
                ErrorCode::Truncated,
                "section " + std::to_string(e.id) + " extends past end of input");
        expected_offset = e.offset + e.length;
    }

    const auto& key = table[kSectionCount - 1];
    require(key.length == sizeof(StoreKey), ErrorCode::InvalidSpec,
            "store key section has length " + std::to_string(key.length));
    require(key.offset + key.length == total_size, ErrorCode::InvalidSpec,
            "store key section does not close the file");
    require(table[kPayload - 1].length <= kMaxPayload, ErrorCode::PayloadTooLarge,
            "payload section of " + std::to_string(table[kPayload - 1].length) + " bytes");
    return table;
}

ByteReader section_reader(std::span<const std::uint8_t> bytes, const TableEntry& e) {
    return ByteReader(bytes.subspan(e.offset, e.length));
}

void expect_consumed(const ByteReader& r, std::uint16_t id) {
    require(r.at_end(), ErrorCode::InvalidSpec,
            "section " + std::to_string(id) + " has " + std::to_string(r.remaining()) +
                " trailing bytes");
}

} // namespace

StoreKey compute_key(std::span<const std::uint8_t> body) {
    const Hash32 digest = sha256(body);
    StoreKey key;
    std::copy_n(digest.begin(), key.size(), key.begin());
    return key;
}

std::string key_to_hex(const StoreKey& key) {
    return to_hex(key, true);
}

std::vector<std::uint8_t> serialize(const Metadata& metadata, const Params& params,
                                    const std::vector<tabular::VariableSpec>& input_vars,
                                    const std::vector<tabular::VariableSpec>& output_vars,
                                    std::span<const std::uint8_t> payload) {
    require(!metadata.name.empty(), ErrorCode::InvalidSpec, "model name is empty");
    const auto algo = static_cast<std::uint16_t>(metadata.algorithm);
    require(algo == static_cast<std::uint16_t>(Algorithm::Gbt) ||
                algo == static_cast<std::uint16_t>(Algorithm::CapsNet),
            ErrorCode::InvalidSpec, "algorithm id " + std::to_string(algo));
    check_specs(input_vars, "input");
    check_specs(output_vars, "output");
    for (const auto& [k, v] : params) {
        (void)v;
        require(!k.empty(), ErrorCode::InvalidSpec, "parameter with empty key");
    }
    require(payload.size() <= kMaxPayload, ErrorCode::PayloadTooLarge,
            std::to_string(payload.size()) + " bytes");

    ByteWriter meta;
    meta.str(metadata.name);
    meta.str(metadata.description);
    meta.u16(algo);
    meta.i64(metadata.timestamp);

    ByteWriter parm;
    parm.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& [k, v] : params) {
        parm.str(k);
        parm.str(v);
    }

    ByteWriter schema_in;
    write_specs(schema_in, input_vars);
    ByteWriter schema_out;
    write_specs(schema_out, output_vars);

    const std::array<std::uint64_t, kSectionCount> lengths = {
        meta.size(),      parm.size(),    schema_in.size(),
        schema_out.size(), payload.size(), sizeof(StoreKey)};

    ByteWriter out;
    out.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kMagic),
                                          sizeof(kMagic)));
    out.u16(kVersion);
    out.u16(kSectionCount);
    std::uint64_t offset = kDataStart;
    for (std::size_t i = 0; i < kSectionCount; ++i) {
        out.u16(static_cast<std::uint16_t>(i + 1));
        out.u64(offset);
        out.u64(lengths[i]);
        offset += lengths[i];
    }
    out.raw(meta.bytes());
    out.raw(parm.bytes());
    out.raw(schema_in.bytes());
    out.raw(schema_out.bytes());
    out.raw(payload);

    const StoreKey key = compute_key(out.bytes());
    out.raw(key);
    return out.take();
}

void verify(std::span<const std::uint8_t> bytes) {
    require(bytes.size() >= sizeof(StoreKey), ErrorCode::Truncated,
            "input of " + std::to_string(bytes.size()) + " bytes cannot hold a store key");
    const std::size_t body_len = bytes.size() - sizeof(StoreKey);
    const StoreKey expected = compute_key(bytes.first(body_len));
    if (!std::equal(expected.begin(), expected.end(), bytes.begin() + body_len))
        raise(ErrorCode::KeyMismatch,
              "stored key " + to_hex(bytes.subspan(body_len), true) + " but body hashes to " +
                  key_to_hex(expected));
}

AstoreBlob deserialize(std::span<const std::uint8_t> bytes) {
    verify(bytes);

    ByteReader r(bytes);
    const std::vector<std::uint8_t> magic = r.raw(sizeof(kMagic));
    require(std::memcmp(magic.data(), kMagic, sizeof(kMagic)) == 0, ErrorCode::BadMagic,
            "first bytes are not the container signature");
    const std::uint16_t version = r.u16();
    require(version == kVersion, ErrorCode::UnsupportedVersion,
            "version " + std::to_string(version));

    const auto table = read_table(r, bytes.size());

    AstoreBlob blob;
    {
        ByteReader s = section_reader(bytes, table[kMetadata - 1]);
        blob.metadata.name = s.str();
        blob.metadata.description = s.str();
        const std::uint16_t algo = s.u16();
        require(algo == static_cast<std::uint16_t>(Algorithm::Gbt) ||
                    algo == static_cast<std::uint16_t>(Algorithm::CapsNet),
                ErrorCode::InvalidSpec, "algorithm id " + std::to_string(algo));
        blob.metadata.algorithm = static_cast<Algorithm>(algo);
        blob.metadata.timestamp = s.i64();
        expect_consumed(s, kMetadata);
    }
    {
        ByteReader s = section_reader(bytes, table[kParams - 1]);
        const std::uint32_t n = s.u32();
        blob.params.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            std::string k = s.str();
            std::string v = s.str();
            blob.params.emplace_back(std::move(k), std::move(v));
        }
        expect_consumed(s, kParams);
    }
    {
        ByteReader s = section_reader(bytes, table[kSchemaIn - 1]);
        blob.input_vars = read_specs(s, "input");
        expect_consumed(s, kSchemaIn);
    }
    {
        ByteReader s = section_reader(bytes, table[kSchemaOut - 1]);
        blob.output_vars = read_specs(s, "output");
        expect_consumed(s, kSchemaOut);
    }
    {
        const auto& e = table[kPayload - 1];
        blob.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(e.offset),
                            bytes.begin() + static_cast<std::ptrdiff_t>(e.offset + e.length));
    }
    {
        const auto& e = table[kStoreKey - 1];
        std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(e.offset), blob.store_key.size(),
                    blob.store_key.begin());
    }
    return blob;
}

} // namespace edgescore::astore
