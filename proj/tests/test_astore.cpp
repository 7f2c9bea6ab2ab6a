#include <doctest.h>

#include <algorithm>
#include <cstring>

#include "common.hpp"
#include "edgescore/astore.hpp"
#include "edgescore/bytes.hpp"
#include "edgescore/gbt.hpp"
#include "edgescore/model_codec.hpp"
#include "edgescore/rng.hpp"
#include "edgescore/tabular.hpp"

using namespace edgescore;
using namespace edgescore::astore;
using testutil::thrown_code;

namespace {

std::vector<tabular::VariableSpec> numeric_specs(std::initializer_list<const char*> names) {
    std::vector<tabular::VariableSpec> specs;
    for (const char* n : names) specs.push_back({n, tabular::VarKind::Numeric, "BEST12"});
    return specs;
}

std::vector<std::uint8_t> sample_blob() {
    Metadata meta{"fraud_gbt", "demo model", Algorithm::Gbt, 1700000000};
    Params params = {{"n_rounds", "100"}, {"max_depth", "4"}};
    std::vector<std::uint8_t> payload = {0xDE, 0xAD, 0xBE, 0xEF, 0x00, 0x01, 0x02};
    return serialize(meta, params, numeric_specs({"v1", "v2", "v3"}),
                     numeric_specs({"P_fraud", "I_fraud"}), payload);
}

// Overwrites the trailing store key with one matching the (possibly mutated)
// body, so structural errors can be exercised past the key check.
void restamp(std::vector<std::uint8_t>& bytes) {
    const auto key =
        compute_key(std::span<const std::uint8_t>(bytes).first(bytes.size() - 20));
    std::copy(key.begin(), key.end(), bytes.end() - 20);
}

void patch_u64(std::vector<std::uint8_t>& bytes, std::size_t at, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes[at + static_cast<std::size_t>(i)] = std::uint8_t(v >> (8 * i));
}

// Table entry i sits at 12 + 18*i: id(2) offset(8) length(8).
std::size_t entry_offset_pos(std::size_t i) { return 12 + 18 * i + 2; }
std::size_t entry_length_pos(std::size_t i) { return 12 + 18 * i + 10; }

} // namespace

TEST_CASE("store key of the empty body matches the published constant") {
    const StoreKey key = compute_key({});
    CHECK(key_to_hex(key) == "E3B0C44298FC1C149AFBF4C8996FB92427AE41E4");
    CHECK(key.size() == 20);
    CHECK(key_to_hex(key).size() == 40);
}

TEST_CASE("serialize, deserialize round-trip preserves every field") {
    const auto bytes = sample_blob();
    const AstoreBlob blob = deserialize(bytes);

    CHECK(blob.metadata.name == "fraud_gbt");
    CHECK(blob.metadata.description == "demo model");
    CHECK(blob.metadata.algorithm == Algorithm::Gbt);
    CHECK(blob.metadata.timestamp == 1700000000);
    REQUIRE(blob.params.size() == 2);
    CHECK(blob.params[0] == std::pair<std::string, std::string>{"n_rounds", "100"});
    REQUIRE(blob.input_vars.size() == 3);
    CHECK(blob.input_vars[1].name == "v2");
    CHECK(blob.input_vars[1].kind == tabular::VarKind::Numeric);
    CHECK(blob.input_vars[1].format == "BEST12");
    REQUIRE(blob.output_vars.size() == 2);
    CHECK(blob.output_vars[0].name == "P_fraud");
    CHECK(blob.payload == std::vector<std::uint8_t>{0xDE, 0xAD, 0xBE, 0xEF, 0x00, 0x01, 0x02});

    const auto again = serialize(blob.metadata, blob.params, blob.input_vars, blob.output_vars,
                                 blob.payload);
    CHECK(again == bytes);
}

TEST_CASE("serialization is a pure function of its arguments") {
    CHECK(sample_blob() == sample_blob());
}

TEST_CASE("stored key equals the recomputed body key") {
    const auto bytes = sample_blob();
    const AstoreBlob blob = deserialize(bytes);
    const auto body = std::span<const std::uint8_t>(bytes).first(bytes.size() - 20);
    CHECK(blob.store_key == compute_key(body));
    CHECK_NOTHROW(verify(bytes));
}

TEST_CASE("every single-bit flip anywhere in the blob is a key mismatch") {
    auto bytes = sample_blob();
    for (std::size_t byte = 0; byte < bytes.size(); ++byte) {
        for (int bit = 0; bit < 8; ++bit) {
            bytes[byte] ^= std::uint8_t(1u << bit);
            CHECK(thrown_code([&] { verify(bytes); }) == ErrorCode::KeyMismatch);
            bytes[byte] ^= std::uint8_t(1u << bit);
        }
    }
    CHECK_NOTHROW(verify(bytes));
}

TEST_CASE("deserialize reports tampering before any structural error") {
    auto bytes = sample_blob();
    bytes[0] ^= 0x01; // would be BAD_MAGIC if parsing ran first
    CHECK(thrown_code([&] { deserialize(bytes); }) == ErrorCode::KeyMismatch);
}

TEST_CASE("inputs too short to hold a key are truncated") {
    const auto bytes = sample_blob();
    for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{11}, std::size_t{19}}) {
        const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + std::ptrdiff_t(n));
        CHECK(thrown_code([&] { verify(cut); }) == ErrorCode::Truncated);
        CHECK(thrown_code([&] { deserialize(cut); }) == ErrorCode::Truncated);
    }
}

TEST_CASE("mid-body truncation is caught by the key check") {
    const auto bytes = sample_blob();
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 5);
    CHECK(thrown_code([&] { verify(cut); }) == ErrorCode::KeyMismatch);
}

TEST_CASE("re-stamped structural corruption still fails to parse") {
    SUBCASE("bad magic") {
        auto bytes = sample_blob();
        bytes[0] = 'X';
        restamp(bytes);
        CHECK_NOTHROW(verify(bytes)); // the key itself is consistent again
        CHECK(thrown_code([&] { deserialize(bytes); }) == ErrorCode::BadMagic);
    }
    SUBCASE("unsupported version") {
        auto bytes = sample_blob();
        bytes[8] = 2; // version field follows the 8-byte magic
        restamp(bytes);
        CHECK(thrown_code([&] { deserialize(bytes); }) == ErrorCode::UnsupportedVersion);
    }
    SUBCASE("wrong section count") {
        auto bytes = sample_blob();
        bytes[10] = 5;
        restamp(bytes);
        CHECK(thrown_code([&] { deserialize(bytes); }) == ErrorCode::InvalidSpec);
    }
    SUBCASE("second section starts inside the first") {
        auto bytes = sample_blob();
        patch_u64(bytes, entry_offset_pos(1), 120); // section 1 data also starts at 120
        restamp(bytes);
        CHECK(thrown_code([&] { deserialize(bytes); }) == ErrorCode::SectionOverlap);
    }
    SUBCASE("gap between sections") {
        auto bytes = sample_blob();
        ByteReader r(bytes);
        (void)r.raw(12 + 18);
        (void)r.u16();
        const std::uint64_t off1 = r.u64();
        patch_u64(bytes, entry_offset_pos(1), off1 + 1);
        restamp(bytes);
        CHECK(thrown_code([&] { deserialize(bytes); }) == ErrorCode::InvalidSpec);
    }
    SUBCASE("section runs past the end of the input") {
        auto bytes = sample_blob();
        patch_u64(bytes, entry_length_pos(4), 1u << 20);
        restamp(bytes);
        CHECK(thrown_code([&] { deserialize(bytes); }) == ErrorCode::Truncated);
    }
    SUBCASE("store key section not 20 bytes") {
        auto bytes = sample_blob();
        patch_u64(bytes, entry_length_pos(5), 19);
        restamp(bytes);
        CHECK(thrown_code([&] { deserialize(bytes); }) == ErrorCode::InvalidSpec);
    }
}

TEST_CASE("serialize rejects malformed inputs") {
    const auto in_vars = numeric_specs({"v1"});
    const auto out_vars = numeric_specs({"P_fraud"});
    Metadata meta{"m", "", Algorithm::Gbt, 0};

    Metadata unnamed = meta;
    unnamed.name.clear();
    CHECK(thrown_code([&] { serialize(unnamed, {}, in_vars, out_vars, {}); }) ==
          ErrorCode::InvalidSpec);

    CHECK(thrown_code([&] { serialize(meta, {{"", "x"}}, in_vars, out_vars, {}); }) ==
          ErrorCode::InvalidSpec);

    auto bad_vars = in_vars;
    bad_vars[0].name.clear();
    CHECK(thrown_code([&] { serialize(meta, {}, bad_vars, out_vars, {}); }) ==
          ErrorCode::InvalidSpec);

    Metadata bad_algo = meta;
    bad_algo.algorithm = static_cast<Algorithm>(7);
    CHECK(thrown_code([&] { serialize(bad_algo, {}, in_vars, out_vars, {}); }) ==
          ErrorCode::InvalidSpec);
}

TEST_CASE("empty params, schemas and payload still round-trip") {
    Metadata meta{"bare", "", Algorithm::CapsNet, -5};
    const auto bytes = serialize(meta, {}, {}, {}, {});
    const AstoreBlob blob = deserialize(bytes);
    CHECK(blob.metadata == meta);
    CHECK(blob.params.empty());
    CHECK(blob.input_vars.empty());
    CHECK(blob.output_vars.empty());
    CHECK(blob.payload.empty());
    CHECK(serialize(blob.metadata, blob.params, blob.input_vars, blob.output_vars, blob.payload) ==
          bytes);
}

TEST_CASE("randomized blobs round-trip and re-serialize byte-identically") {
    Rng rng(20240817);
    auto rand_string = [&](std::size_t max_len, bool allow_empty) {
        const std::size_t len = allow_empty ? rng.below(max_len + 1) : 1 + rng.below(max_len);
        std::string s;
        for (std::size_t i = 0; i < len; ++i)
            s.push_back(static_cast<char>(32 + rng.below(95)));
        return s;
    };

    for (int round = 0; round < 50; ++round) {
        Metadata meta;
        meta.name = rand_string(24, false);
        meta.description = rand_string(60, true);
        meta.algorithm = rng.below(2) == 0 ? Algorithm::Gbt : Algorithm::CapsNet;
        meta.timestamp = static_cast<std::int64_t>(rng.next_u64());

        Params params;
        for (std::size_t i = rng.below(6); i > 0; --i)
            params.emplace_back(rand_string(12, false), rand_string(30, true));

        auto rand_specs = [&] {
            std::vector<tabular::VariableSpec> specs;
            for (std::size_t i = rng.below(5); i > 0; --i)
                specs.push_back({rand_string(10, false),
                                 rng.below(2) == 0 ? tabular::VarKind::Numeric
                                                   : tabular::VarKind::BinaryTarget,
                                 rand_string(8, true)});
            return specs;
        };
        const auto in_vars = rand_specs();
        const auto out_vars = rand_specs();

        std::vector<std::uint8_t> payload(rng.below(2000));
        for (auto& b : payload) b = static_cast<std::uint8_t>(rng.below(256));

        const auto bytes = serialize(meta, params, in_vars, out_vars, payload);
        CHECK_NOTHROW(verify(bytes));

        const AstoreBlob blob = deserialize(bytes);
        CHECK(blob.metadata == meta);
        CHECK(blob.params == params);
        CHECK(blob.input_vars == in_vars);
        CHECK(blob.output_vars == out_vars);
        CHECK(blob.payload == payload);
        CHECK(serialize(blob.metadata, blob.params, blob.input_vars, blob.output_vars,
                        blob.payload) == bytes);
    }
}

TEST_CASE("describe exposes metadata and schemas without reparsing") {
    const AstoreBlob blob = deserialize(sample_blob());
    const Description d = describe(blob);
    CHECK(d.metadata.name == "fraud_gbt");
    CHECK(d.input_vars.size() == 3);
    CHECK(d.output_vars.size() == 2);
    CHECK(&d.metadata == &blob.metadata);
}

namespace {

gbt::GbtModel tiny_gbt() {
    auto ds = tabular::gen_surrogate(400, 0.25, 5, 11);
    gbt::GbtParams params;
    params.n_rounds = 12;
    params.max_depth = 3;
    return gbt::train_gbt(ds, params, 1);
}

} // namespace

TEST_CASE("gbt payload codec reproduces the model exactly") {
    const gbt::GbtModel model = tiny_gbt();
    const auto payload = encode_gbt(model);
    const gbt::GbtModel back = decode_gbt(payload);

    CHECK(back.params == model.params);
    CHECK(back.n_features == model.n_features);
    CHECK(back.base_score == model.base_score);
    REQUIRE(back.trees.size() == model.trees.size());
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        REQUIRE(back.trees[t].nodes.size() == model.trees[t].nodes.size());
        for (std::size_t n = 0; n < model.trees[t].nodes.size(); ++n) {
            const auto& a = model.trees[t].nodes[n];
            const auto& b = back.trees[t].nodes[n];
            CHECK(a.feature == b.feature);
            CHECK(a.threshold == b.threshold);
            CHECK(a.left == b.left);
            CHECK(a.right == b.right);
            CHECK(a.weight == b.weight);
        }
    }

    auto features = tabular::features_only(tabular::gen_surrogate(100, 0.2, 5, 12));
    CHECK(gbt::score_gbt_batch(back, features) == gbt::score_gbt_batch(model, features));
}

TEST_CASE("gbt payload decode rejects damaged encodings") {
    const auto payload = encode_gbt(tiny_gbt());

    std::vector<std::uint8_t> cut(payload.begin(), payload.end() - 3);
    CHECK(thrown_code([&] { decode_gbt(cut); }) == ErrorCode::Truncated);

    auto padded = payload;
    padded.push_back(0);
    CHECK(thrown_code([&] { decode_gbt(padded); }) == ErrorCode::InvalidSpec);
}

TEST_CASE("capsnet payload codec reproduces config, standardizer and weights") {
    capsnet::CapsNetConfig cfg;
    cfg.input_dim = 6;
    cfg.feat_dim = 12;
    cfg.n_primary = 4;
    cfg.primary_dim = 3;
    cfg.n_class = 2;
    cfg.class_dim = 4;
    cfg.decoder_hidden = {10, 12};
    cfg.routing_iters = 3;
    cfg.epochs = 0;
    cfg.batch_size = 16;

    auto ds = tabular::gen_surrogate(64, 0.25, cfg.input_dim, 3);
    const capsnet::CapsNetModel model = capsnet::train_capsnet(cfg, ds, 9);

    const auto payload = encode_capsnet(model);
    const capsnet::CapsNetModel back = decode_capsnet(payload);

    CHECK(back.config == model.config);
    CHECK(back.weights == model.weights);
    CHECK(back.standardizer.specs == model.standardizer.specs);
    CHECK(back.standardizer.mean == model.standardizer.mean);
    CHECK(back.standardizer.stddev == model.standardizer.stddev);

    const auto row = ds.row(5);
    const auto a = capsnet::classify(model, row.first(cfg.input_dim));
    const auto b = capsnet::classify(back, row.first(cfg.input_dim));
    CHECK(a.cls == b.cls);
    CHECK(a.norms == b.norms);
}

TEST_CASE("model export carries schemas, params and the right algorithm id") {
    const gbt::GbtModel model = tiny_gbt();
    auto specs = tabular::features_only(tabular::gen_surrogate(10, 0.2, 5, 11)).specs;

    const auto bytes = export_gbt(model, specs, "surrogate_gbt", "boosted trees", 1234, "fraud");
    const AstoreBlob blob = deserialize(bytes);

    CHECK(blob.metadata.algorithm == Algorithm::Gbt);
    CHECK(blob.metadata.name == "surrogate_gbt");
    CHECK(blob.metadata.timestamp == 1234);
    CHECK(blob.input_vars == specs);
    REQUIRE(blob.output_vars.size() == 2);
    CHECK(blob.output_vars[0].name == "P_fraud");
    CHECK(blob.output_vars[1].name == "I_fraud");
    const auto& p = blob.params;
    CHECK(std::find(p.begin(), p.end(),
                    std::pair<std::string, std::string>{"n_rounds", "12"}) != p.end());
    CHECK(std::find(p.begin(), p.end(),
                    std::pair<std::string, std::string>{"exact_splits", "false"}) != p.end());

    const gbt::GbtModel back = decode_gbt(blob.payload);
    CHECK(back.base_score == model.base_score);

    CHECK(thrown_code([&] {
              auto wide = specs;
              wide.push_back({"extra", tabular::VarKind::Numeric, "BEST12"});
              return export_gbt(model, wide, "x", "", 0, "fraud");
          }) == ErrorCode::DimMismatch);
}

TEST_CASE("capsnet export derives its input schema from the standardizer") {
    capsnet::CapsNetConfig cfg;
    cfg.input_dim = 5;
    cfg.feat_dim = 8;
    cfg.n_primary = 2;
    cfg.primary_dim = 4;
    cfg.n_class = 2;
    cfg.class_dim = 3;
    cfg.decoder_hidden = {6, 7};
    cfg.epochs = 0;
    cfg.batch_size = 8;

    auto ds = tabular::gen_surrogate(48, 0.25, cfg.input_dim, 4);
    const capsnet::CapsNetModel model = capsnet::train_capsnet(cfg, ds, 2);

    const auto bytes = export_capsnet(model, "caps", "routing network", 99, "fraud");
    const AstoreBlob blob = deserialize(bytes);
    CHECK(blob.metadata.algorithm == Algorithm::CapsNet);
    CHECK(blob.input_vars == model.standardizer.specs);
    CHECK(blob.input_vars.size() == 5);
    CHECK(blob.output_vars[0].name == "P_fraud");

    const capsnet::CapsNetModel back = decode_capsnet(blob.payload);
    CHECK(back.weights == model.weights);
}
