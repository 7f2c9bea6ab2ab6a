#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "edgescore/tabular.hpp"

namespace edgescore::capsnet {

struct CapsNetConfig {
    std::size_t input_dim = 29;
    std::size_t feat_dim = 100; // must equal n_primary * primary_dim
    std::size_t n_primary = 10;
    std::size_t primary_dim = 10;
    std::size_t n_class = 2;
    std::size_t class_dim = 16;
    std::array<std::size_t, 2> decoder_hidden{64, 128};
    std::size_t routing_iters = 3;
    std::size_t epochs = 250;
    std::size_t batch_size = 128;
    double adam_lr = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double margin_m_plus = 0.9;
    double margin_m_minus = 0.1;
    double margin_lambda = 0.5;
    double recon_weight = 0.0005;

    std::size_t decoder_input_dim() const { return n_class * class_dim; }
    void validate() const;

    bool operator==(const CapsNetConfig&) const = default;
};

// Every learned array, in the order gradients and optimizer state are laid
// out. `visit` fixes that order once for init, Adam, and serialization alike.
struct CapsNetWeights {
    std::vector<double> w1, b1; // feat_dim×input_dim, feat_dim
    std::vector<double> wij;    // n_primary×n_class blocks of class_dim×primary_dim
    std::vector<double> dec_w0, dec_b0;
    std::vector<double> dec_w1, dec_b1;
    std::vector<double> dec_w2, dec_b2;

    template <typename F>
    void visit(F&& f) {
        f(w1); f(b1); f(wij);
        f(dec_w0); f(dec_b0); f(dec_w1); f(dec_b1); f(dec_w2); f(dec_b2);
    }

    template <typename F>
    void visit(F&& f) const {
        f(w1); f(b1); f(wij);
        f(dec_w0); f(dec_b0); f(dec_w1); f(dec_b1); f(dec_w2); f(dec_b2);
    }

    void shape(const CapsNetConfig& cfg);

    bool operator==(const CapsNetWeights&) const = default;
};

struct CapsNetModel {
    CapsNetConfig config;
    tabular::Standardizer standardizer; // feature columns only
    CapsNetWeights weights;
};

// v = (norm^2 / (1 + norm^2)) * unit(s); zero stays zero, output norm < 1.
std::vector<double> squash(std::span<const double> s);

struct RouteResult {
    std::vector<double> v; // n_class × class_dim
    std::vector<double> c; // n_primary × n_class, rows sum to 1
};

// Agreement routing over prediction vectors u_hat laid out
// [primary][cls][class_dim]. Logits start at zero and are not updated after
// the final iteration.
RouteResult route(std::span<const double> u_hat, std::size_t n_primary, std::size_t n_class,
                  std::size_t class_dim, std::size_t iterations);

struct RoutingStep {
    std::vector<double> c; // n_primary × n_class
    std::vector<double> s; // n_class × class_dim
    std::vector<double> v; // n_class × class_dim
};

// Pass mask_class = kMaskByPrediction to mask with the argmax-norm class.
inline constexpr int kMaskByPrediction = -1;

struct ForwardTrace {
    std::vector<double> x;     // the standardized input
    std::vector<double> z1, h; // feature layer pre/post ReLU
    std::vector<double> u;     // squashed primary capsules, n_primary × primary_dim
    std::vector<double> u_hat; // n_primary × n_class × class_dim
    std::vector<RoutingStep> steps;
    std::vector<double> b; // logits behind the final coupling
    std::vector<double> class_norms;
    int mask_class = 0;
    std::vector<double> masked; // decoder input
    std::vector<double> zd0, a0, zd1, a1, recon;

    const std::vector<double>& v() const { return steps.back().v; }
    const std::vector<double>& c() const { return steps.back().c; }
};

ForwardTrace forward(const CapsNetModel& model, std::span<const double> std_row, int mask_class);

double margin_loss(std::span<const double> norms, std::size_t label, const CapsNetConfig& cfg);

// Mean loss over the batch plus gradients for every weight; rows are already
// standardized, flattened input_dim-wide. The reconstruction mask is the true
// label.
double loss_and_grads(const CapsNetModel& model, std::span<const double> rows,
                      std::span<const int> labels, CapsNetWeights& grads);

CapsNetWeights init_weights(const CapsNetConfig& cfg, std::uint64_t seed);

// Standardizes train_ds internally and runs seeded mini-batch Adam. When
// epoch_loss is given it receives the mean sample loss of every epoch.
CapsNetModel train_capsnet(const CapsNetConfig& cfg, const tabular::TabularDataset& train_ds,
                           std::uint64_t seed, std::vector<double>* epoch_loss = nullptr);

struct Classification {
    std::size_t cls = 0;
    std::vector<double> norms;
};

// Raw (unstandardized) feature row in, argmax-norm class out; ties go to the
// lower index.
Classification classify(const CapsNetModel& model, std::span<const double> raw_row);

struct SynthConfig {
    double ratio = 0.2; // perturbation magnitude on the class activity vector
    std::size_t count = 0;
    std::size_t target_class = 1;
    std::uint64_t seed = 0;
};

// Round-robin over seed_rows: forward, perturb the target activity vector by
// v*(1 + ratio*eps) with eps uniform in [-1,1], decode, un-standardize.
// Output rows carry the synthetic provenance tag and label = target_class.
tabular::TabularDataset synthesize(const CapsNetModel& model,
                                   const tabular::TabularDataset& seed_rows,
                                   const SynthConfig& synth);

} // namespace edgescore::capsnet
