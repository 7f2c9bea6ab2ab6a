#include <doctest.h>

#include <cmath>

#include "edgescore/capsnet.hpp"
#include "edgescore/rng.hpp"
#include "common.hpp"

using namespace edgescore;
using namespace edgescore::capsnet;
using testutil::thrown_code;

namespace {

CapsNetConfig small_config() {
    CapsNetConfig cfg;
    cfg.input_dim = 8;
    cfg.feat_dim = 12;
    cfg.n_primary = 4;
    cfg.primary_dim = 3;
    cfg.n_class = 2;
    cfg.class_dim = 4;
    cfg.decoder_hidden = {10, 12};
    cfg.epochs = 5;
    cfg.batch_size = 32;
    return cfg;
}

CapsNetModel small_model(std::uint64_t seed) {
    CapsNetModel model;
    model.config = small_config();
    model.weights = init_weights(model.config, seed);
    // Identity standardizer so raw and standardized rows coincide.
    for (std::size_t c = 0; c < model.config.input_dim; ++c) {
        model.standardizer.specs.push_back(
            {"v" + std::to_string(c + 1), tabular::VarKind::Numeric, "BEST12"});
        model.standardizer.mean.push_back(0.0);
        model.standardizer.stddev.push_back(1.0);
    }
    return model;
}

tabular::TabularDataset two_blob_data(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    tabular::TabularDataset ds;
    for (std::size_t c = 0; c < dim; ++c)
        ds.specs.push_back({"v" + std::to_string(c + 1), tabular::VarKind::Numeric, "BEST12"});
    ds.specs.push_back({"fraud", tabular::VarKind::BinaryTarget, "BEST12"});
    std::vector<double> row(dim + 1);
    for (std::size_t r = 0; r < n; ++r) {
        const bool pos = r % 2 == 1;
        for (std::size_t c = 0; c < dim; ++c)
            row[c] = rng.normal() * 0.5 + (pos ? 1.5 : -1.5);
        row[dim] = pos ? 1.0 : 0.0;
        ds.append_row(row, r);
    }
    return ds;
}

} // namespace

TEST_CASE("squash matches the hand-derived values") {
    std::vector<double> zero{0.0, 0.0, 0.0};
    auto z = squash(zero);
    for (double x : z) CHECK(x == 0.0);

    std::vector<double> s{3.0, 4.0};
    auto v = squash(s);
    CHECK(v[0] == doctest::Approx(0.5769231).epsilon(1e-6));
    CHECK(v[1] == doctest::Approx(0.7692308).epsilon(1e-6));

    auto norm = [](const std::vector<double>& a) {
        double sq = 0;
        for (double x : a) sq += x * x;
        return std::sqrt(sq);
    };
    std::vector<double> t1{0.1}, t2{1.0}, t3{10.0};
    CHECK(norm(squash(t1)) == doctest::Approx(0.00990099).epsilon(1e-6));
    CHECK(norm(squash(t2)) == doctest::Approx(0.5));
    CHECK(norm(squash(t3)) == doctest::Approx(0.990099).epsilon(1e-6));
}

TEST_CASE("squash norms stay below one and grow with the input norm") {
    double prev = -1.0;
    for (int e = -30; e <= 30; ++e) {
        const double t = std::pow(10.0, e / 10.0);
        std::vector<double> s{t, 0.0, 0.0};
        auto v = squash(s);
        const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        CHECK(n < 1.0);
        CHECK(n > prev);
        prev = n;
    }
}

TEST_CASE("one routing iteration keeps the couplings uniform") {
    Rng rng(3);
    const std::size_t P = 5, C = 2, D = 4;
    std::vector<double> u_hat(P * C * D);
    for (auto& x : u_hat) x = rng.normal();
    auto res = route(u_hat, P, C, D, 1);
    for (std::size_t i = 0; i < P; ++i)
        for (std::size_t j = 0; j < C; ++j) CHECK(res.c[i * C + j] == 0.5);
}

TEST_CASE("zero predictions are a routing fixed point") {
    const std::size_t P = 3, C = 2, D = 4;
    std::vector<double> u_hat(P * C * D, 0.0);
    auto res = route(u_hat, P, C, D, 3);
    for (double x : res.v) CHECK(x == 0.0);
    for (std::size_t i = 0; i < P; ++i)
        for (std::size_t j = 0; j < C; ++j) CHECK(res.c[i * C + j] == 0.5);
}

TEST_CASE("coupling rows sum to one for random predictions") {
    Rng rng(17);
    for (int round = 0; round < 20; ++round) {
        const std::size_t P = 4, C = 3, D = 5;
        std::vector<double> u_hat(P * C * D);
        for (auto& x : u_hat) x = rng.normal() * 2.0;
        auto res = route(u_hat, P, C, D, 3);
        for (std::size_t i = 0; i < P; ++i) {
            double sum = 0;
            for (std::size_t j = 0; j < C; ++j) sum += res.c[i * C + j];
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("forward honours the shape contract") {
    auto model = small_model(5);
    Rng rng(8);
    std::vector<double> row(model.config.input_dim);
    for (auto& x : row) x = rng.normal();
    auto tr = forward(model, row, kMaskByPrediction);

    REQUIRE(tr.class_norms.size() == 2);
    for (double n : tr.class_norms) {
        CHECK(n >= 0.0);
        CHECK(n < 1.0);
    }
    CHECK(tr.recon.size() == model.config.input_dim);
    for (const auto& step : tr.steps)
        for (std::size_t i = 0; i < model.config.n_primary; ++i) {
            double sum = 0;
            for (std::size_t j = 0; j < model.config.n_class; ++j)
                sum += step.c[i * model.config.n_class + j];
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }

    std::vector<double> tiny(3);
    CHECK(thrown_code([&] { forward(model, tiny, 0); }) == ErrorCode::DimMismatch);
}

TEST_CASE("the mask picks which class block feeds the decoder") {
    auto model = small_model(6);
    Rng rng(9);
    std::vector<double> row(model.config.input_dim);
    for (auto& x : row) x = rng.normal();

    auto t0 = forward(model, row, 0);
    auto t1 = forward(model, row, 1);
    const std::size_t cd = model.config.class_dim;

    bool block0_nonzero = false;
    for (std::size_t d = 0; d < cd; ++d) {
        block0_nonzero = block0_nonzero || t0.masked[d] != 0.0;
        CHECK(t0.masked[cd + d] == 0.0);
        CHECK(t1.masked[d] == 0.0);
    }
    CHECK(block0_nonzero);
    CHECK(t0.v() == t1.v()); // masking is downstream of routing
}

TEST_CASE("an all-zero decoder reconstructs the zero vector") {
    auto model = small_model(7);
    std::fill(model.weights.dec_w0.begin(), model.weights.dec_w0.end(), 0.0);
    std::fill(model.weights.dec_b0.begin(), model.weights.dec_b0.end(), 0.0);
    std::fill(model.weights.dec_w1.begin(), model.weights.dec_w1.end(), 0.0);
    std::fill(model.weights.dec_b1.begin(), model.weights.dec_b1.end(), 0.0);
    std::fill(model.weights.dec_w2.begin(), model.weights.dec_w2.end(), 0.0);
    std::fill(model.weights.dec_b2.begin(), model.weights.dec_b2.end(), 0.0);
    Rng rng(10);
    std::vector<double> row(model.config.input_dim);
    for (auto& x : row) x = rng.normal();
    for (int mask = 0; mask < 2; ++mask) {
        auto tr = forward(model, row, mask);
        for (double r : tr.recon) CHECK(r == 0.0);
    }
}

TEST_CASE("margin loss is zero when both hinges rest") {
    CapsNetConfig cfg;
    std::vector<double> norms{0.9, 0.1};
    CHECK(margin_loss(norms, 0, cfg) == 0.0);
    std::vector<double> bad{0.1, 0.9};
    CHECK(margin_loss(bad, 0, cfg) > 0.0);
}

TEST_CASE("duplicating a batch leaves the mean loss unchanged") {
    auto model = small_model(11);
    Rng rng(12);
    const std::size_t n = 4, dim = model.config.input_dim;
    std::vector<double> rows(n * dim);
    for (auto& x : rows) x = rng.normal();
    std::vector<int> labels{0, 1, 0, 1};

    std::vector<double> doubled(rows);
    doubled.insert(doubled.end(), rows.begin(), rows.end());
    std::vector<int> doubled_labels(labels);
    doubled_labels.insert(doubled_labels.end(), labels.begin(), labels.end());

    CapsNetWeights g1, g2;
    const double a = loss_and_grads(model, rows, labels, g1);
    const double b = loss_and_grads(model, doubled, doubled_labels, g2);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("zero-epoch training returns a usable initialized model") {
    auto ds = two_blob_data(64, 8, 13);
    auto cfg = small_config();
    cfg.epochs = 0;
    auto model = train_capsnet(cfg, ds, 21);
    CHECK(model.weights == init_weights(cfg, 21));
    auto features = tabular::features_only(ds);
    auto cls = classify(model, features.row(0));
    CHECK(cls.norms.size() == 2);
}

TEST_CASE("training is deterministic per seed") {
    auto ds = two_blob_data(64, 8, 14);
    auto cfg = small_config();
    cfg.epochs = 2;
    auto a = train_capsnet(cfg, ds, 5);
    auto b = train_capsnet(cfg, ds, 5);
    CHECK(a.weights == b.weights);
    auto c = train_capsnet(cfg, ds, 6);
    CHECK(a.weights != c.weights);
}

TEST_CASE("a few epochs of training reduce the loss") {
    auto ds = two_blob_data(128, 8, 15);
    auto cfg = small_config();
    cfg.epochs = 5;
    std::vector<double> epoch_loss;
    train_capsnet(cfg, ds, 2, &epoch_loss);
    REQUIRE(epoch_loss.size() == 5);
    CHECK(epoch_loss.back() < epoch_loss.front());
}

TEST_CASE("classification breaks norm ties toward class zero") {
    auto model = small_model(16);
    Rng rng(17);
    std::vector<double> row(model.config.input_dim);
    for (auto& x : row) x = rng.normal();
    auto cls = classify(model, row);
    std::size_t expect = cls.norms[1] > cls.norms[0] ? 1 : 0;
    CHECK(cls.cls == expect);

    // Decoder weights cannot influence the decision.
    auto scaled = model;
    for (auto& w : scaled.weights.dec_w2) w *= 100.0;
    CHECK(classify(scaled, row).cls == cls.cls);
}

TEST_CASE("training separates the two blobs") {
    auto ds = two_blob_data(256, 8, 18);
    auto cfg = small_config();
    cfg.epochs = 12;
    auto model = train_capsnet(cfg, ds, 3);
    auto features = tabular::features_only(ds);
    auto labels = ds.labels();
    std::size_t correct = 0;
    for (std::size_t r = 0; r < ds.n_rows(); ++r)
        if (classify(model, features.row(r)).cls == static_cast<std::size_t>(labels[r]))
            ++correct;
    CHECK(static_cast<double>(correct) / static_cast<double>(ds.n_rows()) > 0.9);
}

TEST_CASE("zero-ratio synthesis reproduces plain reconstructions") {
    auto ds = two_blob_data(32, 8, 19);
    auto cfg = small_config();
    cfg.epochs = 2;
    auto model = train_capsnet(cfg, ds, 4);

    // Minority seeds: class-1 rows only.
    tabular::TabularDataset seeds;
    seeds.specs = ds.specs;
    auto labels = ds.labels();
    for (std::size_t r = 0; r < ds.n_rows(); ++r)
        if (labels[r] == 1) seeds.append_row(ds.row(r), ds.provenance[r]);

    SynthConfig synth;
    synth.ratio = 0.0;
    synth.count = 3;
    synth.target_class = 1;
    synth.seed = 7;
    auto out = synthesize(model, seeds, synth);
    REQUIRE(out.n_rows() == 3);

    auto seed_features = tabular::features_only(seeds);
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<double> std_row(cfg.input_dim);
        auto raw = seed_features.row(k);
        for (std::size_t c = 0; c < cfg.input_dim; ++c) {
            const auto& st = model.standardizer;
            std_row[c] = st.stddev[c] == 0 ? 0.0 : (raw[c] - st.mean[c]) / st.stddev[c];
        }
        auto tr = forward(model, std_row, 1);
        for (std::size_t c = 0; c < cfg.input_dim; ++c) {
            const double expect =
                tr.recon[c] * model.standardizer.stddev[c] + model.standardizer.mean[c];
            CHECK(out.at(k, c) == expect);
        }
        CHECK(out.at(k, cfg.input_dim) == 1.0);
    }
}

TEST_CASE("synthesis walks the seed rows round-robin") {
    auto ds = two_blob_data(32, 8, 20);
    auto cfg = small_config();
    cfg.epochs = 1;
    auto model = train_capsnet(cfg, ds, 5);

    tabular::TabularDataset seeds;
    seeds.specs = ds.specs;
    auto labels = ds.labels();
    for (std::size_t r = 0; r < ds.n_rows() && seeds.n_rows() < 3; ++r)
        if (labels[r] == 1) seeds.append_row(ds.row(r), ds.provenance[r]);
    REQUIRE(seeds.n_rows() == 3);

    SynthConfig synth;
    synth.count = 10;
    synth.target_class = 1;
    synth.seed = 8;
    auto out = synthesize(model, seeds, synth);
    REQUIRE(out.n_rows() == 10);

    std::array<int, 3> used{0, 0, 0};
    for (std::size_t r = 0; r < out.n_rows(); ++r) {
        REQUIRE((out.provenance[r] & tabular::kSyntheticTag) != 0);
        used[out.provenance[r] & ~tabular::kSyntheticTag] += 1;
    }
    CHECK(used[0] == 4);
    CHECK(used[1] == 3);
    CHECK(used[2] == 3);

    for (std::size_t r = 0; r < out.n_rows(); ++r) {
        for (std::size_t c = 0; c < out.n_cols(); ++c) CHECK(std::isfinite(out.at(r, c)));
        CHECK(out.at(r, cfg.input_dim) == 1.0);
    }

    auto again = synthesize(model, seeds, synth);
    CHECK(again.values == out.values);
}

TEST_CASE("synthesis rejects empty seeds and bad configs") {
    auto model = small_model(22);
    tabular::TabularDataset empty;
    empty.specs.push_back({"v1", tabular::VarKind::Numeric, "BEST12"});
    empty.specs.push_back({"fraud", tabular::VarKind::BinaryTarget, "BEST12"});
    SynthConfig synth;
    synth.count = 1;
    CHECK(thrown_code([&] { synthesize(model, empty, synth); }) == ErrorCode::EmptySeeds);
}

TEST_CASE("config validation rejects inconsistent shapes") {
    auto cfg = small_config();
    cfg.feat_dim = 13; // not n_primary * primary_dim
    CHECK(thrown_code([&] { cfg.validate(); }) == ErrorCode::Precondition);
    cfg = small_config();
    cfg.routing_iters = 0;
    CHECK(thrown_code([&] { cfg.validate(); }) == ErrorCode::Precondition);
    cfg = small_config();
    cfg.margin_m_minus = 0.95;
    CHECK(thrown_code([&] { cfg.validate(); }) == ErrorCode::Precondition);
}
