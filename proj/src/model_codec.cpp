#include "edgescore/model_codec.hpp"

#include "edgescore/bytes.hpp"
#include "edgescore/errors.hpp"
#include "edgescore/numtext.hpp"

namespace edgescore::astore {
namespace {

void write_i32(ByteWriter& w, std::int32_t v) {
    w.u32(static_cast<std::uint32_t>(v));
}

std::int32_t read_i32(ByteReader& r) {
    return static_cast<std::int32_t>(r.u32());
}

void expect_consumed(const ByteReader& r) {
    require(r.at_end(), ErrorCode::InvalidSpec,
            "payload has " + std::to_string(r.remaining()) + " trailing bytes");
}

void write_standardizer(ByteWriter& w, const tabular::Standardizer& st) {
    w.u32(static_cast<std::uint32_t>(st.specs.size()));
    for (const auto& v : st.specs) {
        w.str(v.name);
        w.u8(static_cast<std::uint8_t>(v.kind));
        w.str(v.format);
    }
    for (double m : st.mean) w.f64(m);
    for (double s : st.stddev) w.f64(s);
}

tabular::Standardizer read_standardizer(ByteReader& r) {
    tabular::Standardizer st;
    const std::uint32_t n = r.u32();
    st.specs.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        tabular::VariableSpec v;
        v.name = r.str();
        const std::uint8_t kind = r.u8();
        require(kind <= static_cast<std::uint8_t>(tabular::VarKind::BinaryTarget),
                ErrorCode::InvalidSpec, "standardizer kind byte " + std::to_string(kind));
        v.kind = static_cast<tabular::VarKind>(kind);
        v.format = r.str();
        st.specs.push_back(std::move(v));
    }
    st.mean.resize(n);
    for (auto& m : st.mean) m = r.f64();
    st.stddev.resize(n);
    for (auto& s : st.stddev) s = r.f64();
    return st;
}

} // namespace

std::vector<std::uint8_t> encode_gbt(const gbt::GbtModel& model) {
    ByteWriter w;
    w.u64(model.params.n_rounds);
    w.u64(model.params.max_depth);
    w.f64(model.params.learning_rate);
    w.f64(model.params.min_child_weight);
    w.u64(model.params.n_bins);
    w.f64(model.params.l2_reg);
    w.u8(model.params.exact_splits ? 1 : 0);
    w.u64(model.n_features);
    w.f64(model.base_score);
    w.u32(static_cast<std::uint32_t>(model.trees.size()));
    for (const auto& tree : model.trees) {
        w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
        for (const auto& n : tree.nodes) {
            write_i32(w, n.feature);
            w.f64(n.threshold);
            write_i32(w, n.left);
            write_i32(w, n.right);
            w.f64(n.weight);
        }
    }
    return w.take();
}

gbt::GbtModel decode_gbt(std::span<const std::uint8_t> payload) {
    ByteReader r(payload);
    gbt::GbtModel model;
    model.params.n_rounds = r.u64();
    model.params.max_depth = r.u64();
    model.params.learning_rate = r.f64();
    model.params.min_child_weight = r.f64();
    model.params.n_bins = r.u64();
    model.params.l2_reg = r.f64();
    model.params.exact_splits = r.u8() != 0;
    model.n_features = r.u64();
    model.base_score = r.f64();
    const std::uint32_t n_trees = r.u32();
    model.trees.resize(n_trees);
    for (auto& tree : model.trees) {
        const std::uint32_t n_nodes = r.u32();
        require(n_nodes >= 1, ErrorCode::InvalidSpec, "tree with no nodes");
        tree.nodes.resize(n_nodes);
        for (auto& n : tree.nodes) {
            n.feature = read_i32(r);
            n.threshold = r.f64();
            n.left = read_i32(r);
            n.right = read_i32(r);
            n.weight = r.f64();
        }
        for (const auto& n : tree.nodes) {
            if (n.is_leaf()) continue;
            require(n.feature >= 0 &&
                        static_cast<std::size_t>(n.feature) < model.n_features,
                    ErrorCode::InvalidSpec, "split on feature " + std::to_string(n.feature));
            require(n.left >= 0 && static_cast<std::uint32_t>(n.left) < n_nodes &&
                        n.right >= 0 && static_cast<std::uint32_t>(n.right) < n_nodes,
                    ErrorCode::InvalidSpec, "child index out of range");
        }
    }
    expect_consumed(r);
    return model;
}

std::vector<std::uint8_t> encode_capsnet(const capsnet::CapsNetModel& model) {
    const auto& cfg = model.config;
    ByteWriter w;
    w.u64(cfg.input_dim);
    w.u64(cfg.feat_dim);
    w.u64(cfg.n_primary);
    w.u64(cfg.primary_dim);
    w.u64(cfg.n_class);
    w.u64(cfg.class_dim);
    w.u64(cfg.decoder_hidden[0]);
    w.u64(cfg.decoder_hidden[1]);
    w.u64(cfg.routing_iters);
    w.u64(cfg.epochs);
    w.u64(cfg.batch_size);
    w.f64(cfg.adam_lr);
    w.f64(cfg.adam_beta1);
    w.f64(cfg.adam_beta2);
    w.f64(cfg.adam_eps);
    w.f64(cfg.margin_m_plus);
    w.f64(cfg.margin_m_minus);
    w.f64(cfg.margin_lambda);
    w.f64(cfg.recon_weight);
    write_standardizer(w, model.standardizer);
    model.weights.visit([&](const std::vector<double>& arr) {
        w.u64(arr.size());
        for (double x : arr) w.f64(x);
    });
    return w.take();
}

capsnet::CapsNetModel decode_capsnet(std::span<const std::uint8_t> payload) {
    ByteReader r(payload);
    capsnet::CapsNetModel model;
    auto& cfg = model.config;
    cfg.input_dim = r.u64();
    cfg.feat_dim = r.u64();
    cfg.n_primary = r.u64();
    cfg.primary_dim = r.u64();
    cfg.n_class = r.u64();
    cfg.class_dim = r.u64();
    cfg.decoder_hidden[0] = r.u64();
    cfg.decoder_hidden[1] = r.u64();
    cfg.routing_iters = r.u64();
    cfg.epochs = r.u64();
    cfg.batch_size = r.u64();
    cfg.adam_lr = r.f64();
    cfg.adam_beta1 = r.f64();
    cfg.adam_beta2 = r.f64();
    cfg.adam_eps = r.f64();
    cfg.margin_m_plus = r.f64();
    cfg.margin_m_minus = r.f64();
    cfg.margin_lambda = r.f64();
    cfg.recon_weight = r.f64();
    try {
        cfg.validate();
    } catch (const Error& e) {
        raise(ErrorCode::InvalidSpec, std::string("stored config: ") + e.what());
    }

    model.standardizer = read_standardizer(r);
    require(model.standardizer.specs.size() == cfg.input_dim, ErrorCode::InvalidSpec,
            "standardizer covers " + std::to_string(model.standardizer.specs.size()) +
                " columns for input_dim " + std::to_string(cfg.input_dim));

    model.weights.shape(cfg);
    model.weights.visit([&](std::vector<double>& arr) {
        const std::uint64_t n = r.u64();
        require(n == arr.size(), ErrorCode::InvalidSpec,
                "weight array of " + std::to_string(n) + " values where " +
                    std::to_string(arr.size()) + " expected");
        for (auto& x : arr) x = r.f64();
    });
    expect_consumed(r);
    return model;
}

std::vector<tabular::VariableSpec> score_output_vars(const std::string& target_name) {
    return {{"P_" + target_name, tabular::VarKind::Numeric, "BEST12"},
            {"I_" + target_name, tabular::VarKind::Numeric, "BEST12"}};
}

std::vector<std::uint8_t> export_gbt(const gbt::GbtModel& model,
                                     const std::vector<tabular::VariableSpec>& feature_specs,
                                     const std::string& name, const std::string& description,
                                     std::int64_t timestamp, const std::string& target_name) {
    require(feature_specs.size() == model.n_features, ErrorCode::DimMismatch,
            std::to_string(feature_specs.size()) + " feature specs for a model over " +
                std::to_string(model.n_features) + " features");
    for (const auto& v : feature_specs)
        require(v.kind == tabular::VarKind::Numeric, ErrorCode::InvalidSpec,
                "input variable " + v.name + " is not numeric");

    Metadata meta{name, description, Algorithm::Gbt, timestamp};
    Params params = {
        {"n_rounds", std::to_string(model.params.n_rounds)},
        {"max_depth", std::to_string(model.params.max_depth)},
        {"learning_rate", format_double(model.params.learning_rate)},
        {"min_child_weight", format_double(model.params.min_child_weight)},
        {"n_bins", std::to_string(model.params.n_bins)},
        {"l2_reg", format_double(model.params.l2_reg)},
        {"exact_splits", model.params.exact_splits ? "true" : "false"},
    };
    const auto payload = encode_gbt(model);
    return serialize(meta, params, feature_specs, score_output_vars(target_name), payload);
}

std::vector<std::uint8_t> export_capsnet(const capsnet::CapsNetModel& model,
                                         const std::string& name, const std::string& description,
                                         std::int64_t timestamp, const std::string& target_name) {
    const auto& cfg = model.config;
    Metadata meta{name, description, Algorithm::CapsNet, timestamp};
    Params params = {
        {"feat_dim", std::to_string(cfg.feat_dim)},
        {"n_primary", std::to_string(cfg.n_primary)},
        {"primary_dim", std::to_string(cfg.primary_dim)},
        {"n_class", std::to_string(cfg.n_class)},
        {"class_dim", std::to_string(cfg.class_dim)},
        {"decoder_hidden",
         std::to_string(cfg.decoder_hidden[0]) + "," + std::to_string(cfg.decoder_hidden[1])},
        {"routing_iters", std::to_string(cfg.routing_iters)},
        {"epochs", std::to_string(cfg.epochs)},
        {"batch_size", std::to_string(cfg.batch_size)},
        {"adam_lr", format_double(cfg.adam_lr)},
        {"margin_m_plus", format_double(cfg.margin_m_plus)},
        {"margin_m_minus", format_double(cfg.margin_m_minus)},
        {"margin_lambda", format_double(cfg.margin_lambda)},
        {"recon_weight", format_double(cfg.recon_weight)},
    };
    const auto payload = encode_capsnet(model);
    return serialize(meta, params, model.standardizer.specs, score_output_vars(target_name),
                     payload);
}

} // namespace edgescore::astore
