#include "edgescore/capsnet.hpp"

#include <algorithm>
#include <cmath>

#include "edgescore/errors.hpp"
#include "edgescore/rng.hpp"

namespace edgescore::capsnet {

namespace {

// Below this norm a capsule is treated as exactly zero; squash and its
// Jacobian both vanish there.
constexpr double kNormFloor = 1e-12;

double norm_of(std::span<const double> v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    return std::sqrt(sq);
}

// y = W x + b, W row-major rows×cols.
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
            std::span<double> y) {
    const std::size_t rows = b.size(), cols = x.size();
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* wr = w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

// Accumulates the affine backward pass: g_w += g_y xᵀ, g_b += g_y,
// g_x += Wᵀ g_y.
void affine_backward(std::span<const double> w, std::span<const double> x,
                     std::span<const double> g_y, std::span<double> g_w, std::span<double> g_b,
                     std::span<double> g_x) {
    const std::size_t rows = g_y.size(), cols = x.size();
    for (std::size_t r = 0; r < rows; ++r) {
        const double gy = g_y[r];
        if (gy == 0.0) continue;
        g_b[r] += gy;
        const double* wr = w.data() + r * cols;
        double* gwr = g_w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            gwr[c] += gy * x[c];
            g_x[c] += wr[c] * gy;
        }
    }
}

void squash_into(std::span<const double> s, std::span<double> out) {
    const double n = norm_of(s);
    if (n < kNormFloor) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const double scale = n / (1.0 + n * n);
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] * scale;
}

// g_s += J_squash(s)ᵀ g_v. With g(n) = n/(1+n²):
// J = g(n) I + (g'(n)/n) s sᵀ, g'(n) = (1−n²)/(1+n²)².
void squash_backward(std::span<const double> s, std::span<const double> g_v,
                     std::span<double> g_s) {
    const double n = norm_of(s);
    if (n < kNormFloor) return;
    const double n2 = n * n;
    const double g = n / (1.0 + n2);
    const double gp = (1.0 - n2) / ((1.0 + n2) * (1.0 + n2));
    double dot = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) dot += s[i] * g_v[i];
    const double radial = gp / n * dot;
    for (std::size_t i = 0; i < s.size(); ++i) g_s[i] += g * g_v[i] + radial * s[i];
}

void softmax_rows(std::span<const double> logits, std::size_t n_rows, std::size_t n_cols,
                  std::span<double> out) {
    for (std::size_t i = 0; i < n_rows; ++i) {
        const double* row = logits.data() + i * n_cols;
        double* orow = out.data() + i * n_cols;
        double hi = row[0];
        for (std::size_t j = 1; j < n_cols; ++j) hi = std::max(hi, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n_cols; ++j) {
            orow[j] = std::exp(row[j] - hi);
            sum += orow[j];
        }
        for (std::size_t j = 0; j < n_cols; ++j) orow[j] /= sum;
    }
}

void run_routing(std::span<const double> u_hat, std::size_t n_primary, std::size_t n_class,
                 std::size_t class_dim, std::size_t iterations, std::vector<RoutingStep>& steps,
                 std::vector<double>& final_logits) {
    std::vector<double> b(n_primary * n_class, 0.0);
    steps.clear();
    steps.reserve(iterations);
    for (std::size_t t = 0; t < iterations; ++t) {
        RoutingStep st;
        st.c.resize(n_primary * n_class);
        softmax_rows(b, n_primary, n_class, st.c);

        st.s.assign(n_class * class_dim, 0.0);
        for (std::size_t i = 0; i < n_primary; ++i)
            for (std::size_t j = 0; j < n_class; ++j) {
                const double cij = st.c[i * n_class + j];
                const double* uh = u_hat.data() + (i * n_class + j) * class_dim;
                double* sj = st.s.data() + j * class_dim;
                for (std::size_t d = 0; d < class_dim; ++d) sj[d] += cij * uh[d];
            }

        st.v.resize(n_class * class_dim);
        for (std::size_t j = 0; j < n_class; ++j)
            squash_into(std::span(st.s).subspan(j * class_dim, class_dim),
                        std::span(st.v).subspan(j * class_dim, class_dim));

        // Agreement sharpens the logits; the pass producing the returned v
        // leaves them untouched.
        if (t + 1 < iterations) {
            for (std::size_t i = 0; i < n_primary; ++i)
                for (std::size_t j = 0; j < n_class; ++j) {
                    const double* uh = u_hat.data() + (i * n_class + j) * class_dim;
                    const double* vj = st.v.data() + j * class_dim;
                    double agree = 0.0;
                    for (std::size_t d = 0; d < class_dim; ++d) agree += uh[d] * vj[d];
                    b[i * n_class + j] += agree;
                }
        }
        steps.push_back(std::move(st));
    }
    final_logits = std::move(b);
}

void decoder_forward(const CapsNetConfig& cfg, const CapsNetWeights& w,
                     std::span<const double> masked, std::vector<double>& zd0,
                     std::vector<double>& a0, std::vector<double>& zd1, std::vector<double>& a1,
                     std::vector<double>& recon) {
    zd0.resize(cfg.decoder_hidden[0]);
    affine(w.dec_w0, w.dec_b0, masked, zd0);
    a0.resize(zd0.size());
    for (std::size_t i = 0; i < zd0.size(); ++i) a0[i] = std::max(0.0, zd0[i]);

    zd1.resize(cfg.decoder_hidden[1]);
    affine(w.dec_w1, w.dec_b1, a0, zd1);
    a1.resize(zd1.size());
    for (std::size_t i = 0; i < zd1.size(); ++i) a1[i] = std::max(0.0, zd1[i]);

    recon.resize(cfg.input_dim);
    affine(w.dec_w2, w.dec_b2, a1, recon);
}

std::size_t argmax_norm(std::span<const double> norms) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < norms.size(); ++k)
        if (norms[k] > norms[best]) best = k;
    return best;
}

void standardize_row(const tabular::Standardizer& st, std::span<const double> raw,
                     std::span<double> out) {
    for (std::size_t c = 0; c < raw.size(); ++c)
        out[c] = st.stddev[c] == 0.0 ? 0.0 : (raw[c] - st.mean[c]) / st.stddev[c];
}

} // namespace

void CapsNetConfig::validate() const {
    require(input_dim >= 1 && n_primary >= 1 && primary_dim >= 1 && class_dim >= 1,
            ErrorCode::Precondition, "capsule dimensions must be positive");
    require(n_class >= 2, ErrorCode::Precondition, "need at least two classes");
    require(feat_dim == n_primary * primary_dim, ErrorCode::Precondition,
            "feat_dim must equal n_primary * primary_dim");
    require(decoder_hidden[0] >= 1 && decoder_hidden[1] >= 1, ErrorCode::Precondition,
            "decoder hidden sizes must be positive");
    require(routing_iters >= 1, ErrorCode::Precondition, "need at least one routing iteration");
    require(batch_size >= 1, ErrorCode::Precondition, "batch size must be positive");
    require(adam_lr > 0.0 && adam_eps > 0.0, ErrorCode::Precondition,
            "optimizer rate and epsilon must be positive");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            ErrorCode::Precondition, "Adam betas must lie in [0,1)");
    require(margin_m_minus >= 0.0 && margin_m_minus < margin_m_plus && margin_m_plus <= 1.0,
            ErrorCode::Precondition, "margins must satisfy 0 <= m_minus < m_plus <= 1");
    require(margin_lambda >= 0.0 && recon_weight >= 0.0, ErrorCode::Precondition,
            "loss weights must be nonnegative");
}

void CapsNetWeights::shape(const CapsNetConfig& cfg) {
    w1.assign(cfg.feat_dim * cfg.input_dim, 0.0);
    b1.assign(cfg.feat_dim, 0.0);
    wij.assign(cfg.n_primary * cfg.n_class * cfg.class_dim * cfg.primary_dim, 0.0);
    dec_w0.assign(cfg.decoder_hidden[0] * cfg.decoder_input_dim(), 0.0);
    dec_b0.assign(cfg.decoder_hidden[0], 0.0);
    dec_w1.assign(cfg.decoder_hidden[1] * cfg.decoder_hidden[0], 0.0);
    dec_b1.assign(cfg.decoder_hidden[1], 0.0);
    dec_w2.assign(cfg.input_dim * cfg.decoder_hidden[1], 0.0);
    dec_b2.assign(cfg.input_dim, 0.0);
}

std::vector<double> squash(std::span<const double> s) {
    std::vector<double> out(s.size());
    squash_into(s, out);
    return out;
}

RouteResult route(std::span<const double> u_hat, std::size_t n_primary, std::size_t n_class,
                  std::size_t class_dim, std::size_t iterations) {
    require(iterations >= 1, ErrorCode::Precondition, "need at least one routing iteration");
    require(u_hat.size() == n_primary * n_class * class_dim, ErrorCode::DimMismatch,
            "prediction vector buffer does not match the given shape");
    std::vector<RoutingStep> steps;
    std::vector<double> logits;
    run_routing(u_hat, n_primary, n_class, class_dim, iterations, steps, logits);
    return {steps.back().v, steps.back().c};
}

ForwardTrace forward(const CapsNetModel& model, std::span<const double> std_row,
                     int mask_class) {
    const auto& cfg = model.config;
    const auto& w = model.weights;
    require(std_row.size() == cfg.input_dim, ErrorCode::DimMismatch,
            "row has " + std::to_string(std_row.size()) + " values, model expects " +
                std::to_string(cfg.input_dim));

    ForwardTrace tr;
    tr.x.assign(std_row.begin(), std_row.end());

    tr.z1.resize(cfg.feat_dim);
    affine(w.w1, w.b1, tr.x, tr.z1);
    tr.h.resize(cfg.feat_dim);
    for (std::size_t i = 0; i < cfg.feat_dim; ++i) tr.h[i] = std::max(0.0, tr.z1[i]);

    tr.u.resize(cfg.feat_dim);
    for (std::size_t i = 0; i < cfg.n_primary; ++i)
        squash_into(std::span(tr.h).subspan(i * cfg.primary_dim, cfg.primary_dim),
                    std::span(tr.u).subspan(i * cfg.primary_dim, cfg.primary_dim));

    tr.u_hat.assign(cfg.n_primary * cfg.n_class * cfg.class_dim, 0.0);
    for (std::size_t i = 0; i < cfg.n_primary; ++i) {
        const double* ui = tr.u.data() + i * cfg.primary_dim;
        for (std::size_t j = 0; j < cfg.n_class; ++j) {
            const std::size_t block = (i * cfg.n_class + j) * cfg.class_dim;
            for (std::size_t o = 0; o < cfg.class_dim; ++o) {
                const double* wrow = w.wij.data() + (block + o) * cfg.primary_dim;
                double acc = 0.0;
                for (std::size_t in = 0; in < cfg.primary_dim; ++in) acc += wrow[in] * ui[in];
                tr.u_hat[block + o] = acc;
            }
        }
    }

    run_routing(tr.u_hat, cfg.n_primary, cfg.n_class, cfg.class_dim, cfg.routing_iters,
                tr.steps, tr.b);

    tr.class_norms.resize(cfg.n_class);
    for (std::size_t j = 0; j < cfg.n_class; ++j)
        tr.class_norms[j] =
            norm_of(std::span(tr.v()).subspan(j * cfg.class_dim, cfg.class_dim));

    std::size_t mask = mask_class == kMaskByPrediction
                           ? argmax_norm(tr.class_norms)
                           : static_cast<std::size_t>(mask_class);
    require(mask_class == kMaskByPrediction ||
                (mask_class >= 0 && mask < cfg.n_class),
            ErrorCode::Precondition, "mask class out of range");
    tr.mask_class = static_cast<int>(mask);

    tr.masked.assign(cfg.decoder_input_dim(), 0.0);
    std::copy_n(tr.v().data() + mask * cfg.class_dim, cfg.class_dim,
                tr.masked.data() + mask * cfg.class_dim);

    decoder_forward(cfg, w, tr.masked, tr.zd0, tr.a0, tr.zd1, tr.a1, tr.recon);
    return tr;
}

double margin_loss(std::span<const double> norms, std::size_t label, const CapsNetConfig& cfg) {
    double total = 0.0;
    for (std::size_t k = 0; k < norms.size(); ++k) {
        if (k == label) {
            const double gap = std::max(0.0, cfg.margin_m_plus - norms[k]);
            total += gap * gap;
        } else {
            const double spill = std::max(0.0, norms[k] - cfg.margin_m_minus);
            total += cfg.margin_lambda * spill * spill;
        }
    }
    return total;
}

namespace {

// Accumulates grads scaled by `scale` and returns this sample's loss.
double sample_backward(const CapsNetModel& model, const ForwardTrace& tr, std::size_t label,
                       double scale, CapsNetWeights& g) {
    const auto& cfg = model.config;
    const auto& w = model.weights;
    const std::size_t P = cfg.n_primary, C = cfg.n_class, cd = cfg.class_dim,
                      pd = cfg.primary_dim;

    double loss = margin_loss(tr.class_norms, label, cfg);
    double recon_sq = 0.0;
    for (std::size_t i = 0; i < cfg.input_dim; ++i) {
        const double d = tr.recon[i] - tr.x[i];
        recon_sq += d * d;
    }
    loss += cfg.recon_weight * recon_sq;

    // Margin-loss gradient lands on the final activity vectors.
    std::vector<double> g_v(C * cd, 0.0);
    for (std::size_t k = 0; k < C; ++k) {
        const double n = tr.class_norms[k];
        double dldn = 0.0;
        if (k == label) {
            const double gap = cfg.margin_m_plus - n;
            if (gap > 0.0) dldn -= 2.0 * gap;
        } else {
            const double spill = n - cfg.margin_m_minus;
            if (spill > 0.0) dldn += 2.0 * cfg.margin_lambda * spill;
        }
        if (dldn != 0.0 && n > kNormFloor) {
            const double* vk = tr.v().data() + k * cd;
            for (std::size_t d = 0; d < cd; ++d) g_v[k * cd + d] += scale * dldn * vk[d] / n;
        }
    }

    // Reconstruction path back to the masked class vector.
    std::vector<double> g_recon(cfg.input_dim);
    for (std::size_t i = 0; i < cfg.input_dim; ++i)
        g_recon[i] = scale * 2.0 * cfg.recon_weight * (tr.recon[i] - tr.x[i]);

    std::vector<double> g_a1(cfg.decoder_hidden[1], 0.0);
    affine_backward(w.dec_w2, tr.a1, g_recon, g.dec_w2, g.dec_b2, g_a1);
    for (std::size_t i = 0; i < g_a1.size(); ++i)
        if (tr.zd1[i] <= 0.0) g_a1[i] = 0.0;

    std::vector<double> g_a0(cfg.decoder_hidden[0], 0.0);
    affine_backward(w.dec_w1, tr.a0, g_a1, g.dec_w1, g.dec_b1, g_a0);
    for (std::size_t i = 0; i < g_a0.size(); ++i)
        if (tr.zd0[i] <= 0.0) g_a0[i] = 0.0;

    std::vector<double> g_masked(cfg.decoder_input_dim(), 0.0);
    affine_backward(w.dec_w0, tr.masked, g_a0, g.dec_w0, g.dec_b0, g_masked);
    {
        const std::size_t mask = static_cast<std::size_t>(tr.mask_class);
        for (std::size_t d = 0; d < cd; ++d) g_v[mask * cd + d] += g_masked[mask * cd + d];
    }

    // Unroll the routing iterations backward. g_b_accum holds dL/d(logits of
    // the following iteration); v of earlier iterations is reached only
    // through the agreement update.
    const std::size_t T = tr.steps.size();
    std::vector<double> g_b_accum(P * C, 0.0);
    std::vector<double> g_u_hat(P * C * cd, 0.0);
    std::vector<double> g_v_t = g_v;
    std::vector<double> g_s(C * cd), g_c(P * C);
    for (std::size_t t = T; t-- > 0;) {
        const auto& st = tr.steps[t];
        if (t + 1 < T) {
            std::fill(g_v_t.begin(), g_v_t.end(), 0.0);
            for (std::size_t i = 0; i < P; ++i)
                for (std::size_t j = 0; j < C; ++j) {
                    const double gb = g_b_accum[i * C + j];
                    if (gb == 0.0) continue;
                    const double* uh = tr.u_hat.data() + (i * C + j) * cd;
                    const double* vj = st.v.data() + j * cd;
                    double* guh = g_u_hat.data() + (i * C + j) * cd;
                    for (std::size_t d = 0; d < cd; ++d) {
                        guh[d] += gb * vj[d];
                        g_v_t[j * cd + d] += gb * uh[d];
                    }
                }
        }

        std::fill(g_s.begin(), g_s.end(), 0.0);
        for (std::size_t j = 0; j < C; ++j)
            squash_backward(std::span(st.s).subspan(j * cd, cd),
                            std::span(g_v_t).subspan(j * cd, cd),
                            std::span(g_s).subspan(j * cd, cd));

        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t j = 0; j < C; ++j) {
                const double* uh = tr.u_hat.data() + (i * C + j) * cd;
                const double* gs = g_s.data() + j * cd;
                double acc = 0.0;
                for (std::size_t d = 0; d < cd; ++d) acc += gs[d] * uh[d];
                g_c[i * C + j] = acc;
                const double cij = st.c[i * C + j];
                if (cij != 0.0) {
                    double* guh = g_u_hat.data() + (i * C + j) * cd;
                    for (std::size_t d = 0; d < cd; ++d) guh[d] += cij * gs[d];
                }
            }

        // Softmax backward row by row, folded straight into the running
        // logit gradient.
        for (std::size_t i = 0; i < P; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < C; ++j) dot += st.c[i * C + j] * g_c[i * C + j];
            for (std::size_t j = 0; j < C; ++j)
                g_b_accum[i * C + j] += st.c[i * C + j] * (g_c[i * C + j] - dot);
        }
    }

    // Prediction vectors back to the transform matrices and primary capsules.
    std::vector<double> g_u(P * pd, 0.0);
    for (std::size_t i = 0; i < P; ++i) {
        const double* ui = tr.u.data() + i * pd;
        double* gui = g_u.data() + i * pd;
        for (std::size_t j = 0; j < C; ++j) {
            const std::size_t block = (i * C + j) * cd;
            for (std::size_t o = 0; o < cd; ++o) {
                const double guh = g_u_hat[block + o];
                if (guh == 0.0) continue;
                const double* wrow = w.wij.data() + (block + o) * pd;
                double* gwrow = g.wij.data() + (block + o) * pd;
                for (std::size_t in = 0; in < pd; ++in) {
                    gwrow[in] += guh * ui[in];
                    gui[in] += wrow[in] * guh;
                }
            }
        }
    }

    std::vector<double> g_h(cfg.feat_dim, 0.0);
    for (std::size_t i = 0; i < P; ++i)
        squash_backward(std::span(tr.h).subspan(i * pd, pd),
                        std::span(g_u).subspan(i * pd, pd),
                        std::span(g_h).subspan(i * pd, pd));

    for (std::size_t r = 0; r < cfg.feat_dim; ++r) {
        const double gz = tr.z1[r] > 0.0 ? g_h[r] : 0.0;
        if (gz == 0.0) continue;
        g.b1[r] += gz;
        double* gw = g.w1.data() + r * cfg.input_dim;
        for (std::size_t c = 0; c < cfg.input_dim; ++c) gw[c] += gz * tr.x[c];
    }

    return loss;
}

} // namespace

double loss_and_grads(const CapsNetModel& model, std::span<const double> rows,
                      std::span<const int> labels, CapsNetWeights& grads) {
    const auto& cfg = model.config;
    require(!labels.empty(), ErrorCode::Precondition, "batch must be nonempty");
    require(rows.size() == labels.size() * cfg.input_dim, ErrorCode::DimMismatch,
            "row buffer size does not match batch size");
    grads.shape(cfg);

    const double scale = 1.0 / static_cast<double>(labels.size());
    double loss_sum = 0.0;
    for (std::size_t idx = 0; idx < labels.size(); ++idx) {
        const int label = labels[idx];
        require(label >= 0 && static_cast<std::size_t>(label) < cfg.n_class,
                ErrorCode::Precondition, "label out of range");
        auto tr = forward(model, rows.subspan(idx * cfg.input_dim, cfg.input_dim), label);
        loss_sum += sample_backward(model, tr, static_cast<std::size_t>(label), scale, grads);
    }
    const double loss = loss_sum * scale;
    require(std::isfinite(loss), ErrorCode::NonfiniteLoss, "batch loss is not finite");
    return loss;
}

CapsNetWeights init_weights(const CapsNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    CapsNetWeights w;
    w.shape(cfg);
    Rng rng = Rng::derive(seed, 1);
    auto fill = [&](std::vector<double>& a, std::size_t fan_in, std::size_t fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& x : a) x = rng.uniform(-limit, limit);
    };
    fill(w.w1, cfg.input_dim, cfg.feat_dim);
    fill(w.wij, cfg.primary_dim, cfg.class_dim);
    fill(w.dec_w0, cfg.decoder_input_dim(), cfg.decoder_hidden[0]);
    fill(w.dec_w1, cfg.decoder_hidden[0], cfg.decoder_hidden[1]);
    fill(w.dec_w2, cfg.decoder_hidden[1], cfg.input_dim);
    return w;
}

CapsNetModel train_capsnet(const CapsNetConfig& cfg, const tabular::TabularDataset& train_ds,
                           std::uint64_t seed, std::vector<double>* epoch_loss) {
    cfg.validate();
    auto labels = train_ds.labels();
    for (int l : labels)
        require(static_cast<std::size_t>(l) < cfg.n_class, ErrorCode::Precondition,
                "label out of range for the configured class count");

    CapsNetModel model;
    model.config = cfg;
    auto features = tabular::features_only(train_ds);
    require(features.n_cols() == cfg.input_dim, ErrorCode::DimMismatch,
            "training data has " + std::to_string(features.n_cols()) +
                " features, config expects " + std::to_string(cfg.input_dim));
    model.standardizer = tabular::fit_standardizer(features);
    auto std_features = tabular::apply_standardizer(model.standardizer, features);

    model.weights = init_weights(cfg, seed);

    CapsNetWeights grads, mom, vel;
    mom.shape(cfg);
    vel.shape(cfg);
    std::vector<std::vector<double>*> ws, ms, vs;
    model.weights.visit([&](std::vector<double>& a) { ws.push_back(&a); });
    mom.visit([&](std::vector<double>& a) { ms.push_back(&a); });
    vel.visit([&](std::vector<double>& a) { vs.push_back(&a); });

    const std::size_t n = std_features.n_rows();
    std::vector<std::size_t> order(n);
    std::vector<double> batch_rows;
    std::vector<int> batch_labels;
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffler = Rng::derive(seed, 1000 + epoch);
        shuffler.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            batch_rows.resize(count * cfg.input_dim);
            batch_labels.resize(count);
            for (std::size_t k = 0; k < count; ++k) {
                const std::size_t r = order[start + k];
                auto row = std_features.row(r);
                std::copy(row.begin(), row.end(), batch_rows.begin() + k * cfg.input_dim);
                batch_labels[k] = labels[r];
            }

            double loss = 0.0;
            try {
                loss = loss_and_grads(model, batch_rows, batch_labels, grads);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::NonfiniteLoss)
                    raise(ErrorCode::NonfiniteLoss,
                          "epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(start / cfg.batch_size));
                throw;
            }
            loss_sum += loss * static_cast<double>(count);

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            std::vector<std::vector<double>*> gs;
            grads.visit([&](std::vector<double>& a) { gs.push_back(&a); });
            for (std::size_t a = 0; a < ws.size(); ++a) {
                auto& wv = *ws[a];
                auto& gv = *gs[a];
                auto& mv = *ms[a];
                auto& vv = *vs[a];
                for (std::size_t i = 0; i < wv.size(); ++i) {
                    mv[i] = cfg.adam_beta1 * mv[i] + (1.0 - cfg.adam_beta1) * gv[i];
                    vv[i] = cfg.adam_beta2 * vv[i] + (1.0 - cfg.adam_beta2) * gv[i] * gv[i];
                    wv[i] -= cfg.adam_lr * (mv[i] / bc1) / (std::sqrt(vv[i] / bc2) + cfg.adam_eps);
                }
            }
        }
        if (epoch_loss) epoch_loss->push_back(loss_sum / static_cast<double>(n));
    }
    return model;
}

Classification classify(const CapsNetModel& model, std::span<const double> raw_row) {
    const auto& cfg = model.config;
    require(raw_row.size() == cfg.input_dim, ErrorCode::DimMismatch,
            "row has " + std::to_string(raw_row.size()) + " values, model expects " +
                std::to_string(cfg.input_dim));
    std::vector<double> std_row(cfg.input_dim);
    standardize_row(model.standardizer, raw_row, std_row);
    auto tr = forward(model, std_row, kMaskByPrediction);
    Classification out;
    out.norms = tr.class_norms;
    out.cls = argmax_norm(out.norms);
    return out;
}

tabular::TabularDataset synthesize(const CapsNetModel& model,
                                   const tabular::TabularDataset& seed_rows,
                                   const SynthConfig& synth) {
    const auto& cfg = model.config;
    require(seed_rows.n_rows() > 0, ErrorCode::EmptySeeds, "no seed rows to synthesize from");
    require(synth.count >= 1, ErrorCode::Precondition, "need a positive synthesis count");
    require(synth.ratio >= 0.0, ErrorCode::Precondition, "ratio must be nonnegative");
    require(synth.target_class < cfg.n_class, ErrorCode::Precondition,
            "target class out of range");
    auto target = seed_rows.target_index();
    require(target.has_value(), ErrorCode::MissingColumn,
            "seed rows need a target column to label the output");

    auto features = tabular::features_only(seed_rows);
    require(features.n_cols() == cfg.input_dim, ErrorCode::DimMismatch,
            "seed rows have " + std::to_string(features.n_cols()) +
                " features, model expects " + std::to_string(cfg.input_dim));

    tabular::TabularDataset out;
    out.specs = seed_rows.specs;

    Rng rng(synth.seed);
    std::vector<double> std_row(cfg.input_dim);
    std::vector<double> masked(cfg.decoder_input_dim());
    std::vector<double> zd0, a0, zd1, a1, recon;
    std::vector<double> row_out(seed_rows.n_cols());

    for (std::size_t k = 0; k < synth.count; ++k) {
        const std::size_t s = k % seed_rows.n_rows();
        standardize_row(model.standardizer, features.row(s), std_row);
        auto tr = forward(model, std_row, static_cast<int>(synth.target_class));

        std::fill(masked.begin(), masked.end(), 0.0);
        const double* vt = tr.v().data() + synth.target_class * cfg.class_dim;
        double* mt = masked.data() + synth.target_class * cfg.class_dim;
        for (std::size_t d = 0; d < cfg.class_dim; ++d) {
            const double eps = rng.uniform(-1.0, 1.0);
            mt[d] = vt[d] * (1.0 + synth.ratio * eps);
        }

        decoder_forward(cfg, model.weights, masked, zd0, a0, zd1, a1, recon);

        std::size_t f = 0;
        for (std::size_t c = 0; c < seed_rows.n_cols(); ++c) {
            if (c == *target) {
                row_out[c] = static_cast<double>(synth.target_class);
            } else {
                row_out[c] = recon[f] * model.standardizer.stddev[f] + model.standardizer.mean[f];
                ++f;
            }
        }
        out.append_row(row_out, tabular::kSyntheticTag | static_cast<std::uint64_t>(s));
    }
    return out;
}

} // namespace edgescore::capsnet
