#include <doctest.h>

#include <cmath>

#include "edgescore/capsnet.hpp"
#include "edgescore/rng.hpp"

using namespace edgescore;
using namespace edgescore::capsnet;

namespace {

CapsNetConfig tiny_config() {
    CapsNetConfig cfg;
    cfg.input_dim = 4;
    cfg.feat_dim = 6;
    cfg.n_primary = 2;
    cfg.primary_dim = 3;
    cfg.n_class = 2;
    cfg.class_dim = 2;
    cfg.decoder_hidden = {5, 4};
    cfg.routing_iters = 3;
    // A reconstruction weight large enough that decoder gradients are not
    // lost in the comparison floor.
    cfg.recon_weight = 0.05;
    return cfg;
}

CapsNetModel tiny_model(std::uint64_t seed) {
    CapsNetModel model;
    model.config = tiny_config();
    model.weights = init_weights(model.config, seed);
    // Fresh init leaves biases at zero, which parks the decoder's ReLU
    // pre-activations on their kink; finite differences straddle it there.
    // Jitter every parameter so the check runs at a generic point.
    Rng jitter(seed ^ 0x5EEDull);
    model.weights.visit([&](std::vector<double>& a) {
        for (double& x : a) x += jitter.uniform(-0.2, 0.2);
    });
    return model;
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t n_params = 0;
};

// Central finite differences against the analytic gradients, every parameter.
// Relative error uses a floor so near-zero pairs are compared absolutely.
GradCheckResult gradcheck(CapsNetModel& model, std::span<const double> rows,
                          std::span<const int> labels) {
    CapsNetWeights grads;
    loss_and_grads(model, rows, labels, grads);

    const double h = 1e-5;
    const double floor = 1e-3;
    GradCheckResult res;

    std::vector<std::vector<double>*> weight_arrays, grad_arrays;
    model.weights.visit([&](std::vector<double>& a) { weight_arrays.push_back(&a); });
    grads.visit([&](std::vector<double>& a) { grad_arrays.push_back(&a); });
    REQUIRE(weight_arrays.size() == grad_arrays.size());

    for (std::size_t a = 0; a < weight_arrays.size(); ++a) {
        auto& weights = *weight_arrays[a];
        auto& analytic = *grad_arrays[a];
        REQUIRE(weights.size() == analytic.size());
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const double saved = weights[i];
            CapsNetWeights scratch;
            weights[i] = saved + h;
            const double up = loss_and_grads(model, rows, labels, scratch);
            weights[i] = saved - h;
            const double down = loss_and_grads(model, rows, labels, scratch);
            weights[i] = saved;
            const double numeric = (up - down) / (2 * h);
            const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
            res.max_rel_err = std::max(res.max_rel_err, std::abs(numeric - analytic[i]) / denom);
            ++res.n_params;
        }
    }
    return res;
}

} // namespace

TEST_CASE("analytic gradients match central finite differences across seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto model = tiny_model(seed);
        const auto& cfg = model.config;

        Rng rng(seed * 1000 + 7);
        const std::size_t batch = 3;
        std::vector<double> rows(batch * cfg.input_dim);
        for (auto& v : rows) v = rng.normal();
        std::vector<int> labels{0, 1, 1};

        auto res = gradcheck(model, rows, labels);
        CAPTURE(seed);
        CHECK(res.n_params > 100);
        CHECK(res.max_rel_err < 1e-4);
    }
}

TEST_CASE("gradients stay correct after a few optimizer steps") {
    // Catch errors that only appear once weights leave the init distribution.
    auto model = tiny_model(99);
    const auto& cfg = model.config;
    Rng rng(4242);
    std::vector<double> rows(4 * cfg.input_dim);
    for (auto& v : rows) v = rng.normal();
    std::vector<int> labels{0, 0, 1, 1};

    for (int step = 0; step < 5; ++step) {
        CapsNetWeights grads;
        loss_and_grads(model, rows, labels, grads);
        std::vector<std::vector<double>*> ws, gs;
        model.weights.visit([&](std::vector<double>& a) { ws.push_back(&a); });
        grads.visit([&](std::vector<double>& a) { gs.push_back(&a); });
        for (std::size_t a = 0; a < ws.size(); ++a)
            for (std::size_t i = 0; i < ws[a]->size(); ++i)
                (*ws[a])[i] -= 0.05 * (*gs[a])[i];
    }

    auto res = gradcheck(model, rows, labels);
    CHECK(res.max_rel_err < 1e-4);
}
