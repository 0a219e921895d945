#include "wafl/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "wafl/binary_io.hpp"
#include "wafl/error.hpp"
#include "wafl/json_config.hpp"

namespace wafl {

namespace {

using nlohmann::json;

constexpr char kCheckpointMagic[8] = {'W', 'A', 'F', 'L', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

double round_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

Tensor uniform_tensor(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
    Tensor t(rows, cols);
    for (auto& x : t.flat()) x = round_to_float(rng.uniform(-bound, bound));
    return t;
}

LinearHead init_head(Rng& rng, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    LinearHead head;
    head.w.resize(fan_in);
    for (auto& w : head.w) w = round_to_float(rng.uniform(-bound, bound));
    head.b = round_to_float(rng.uniform(-bound, bound));
    return head;
}

void check_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, what);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Realignment layer

RealignLayer init_realign(std::size_t k, std::size_t d, std::size_t r, double alpha, double dropout_rate,
                          std::uint64_t seed) {
    if (k == 0 || d == 0) throw Error(ErrorCode::ShapeMismatch, "realign dims must be positive");
    if (r == 0 || r > std::min(d, k)) {
        throw Error(ErrorCode::InvalidRank, "rank " + std::to_string(r) + " must lie in [1, min(d, k)]");
    }
    if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "dropout rate must lie in [0, 1)");
    }
    Rng rng(seed);
    RealignLayer layer;
    layer.alpha = alpha;
    layer.rank = r;
    layer.dropout_rate = dropout_rate;
    // Stand-in for a pretrained projection: N(0, 1/k), stored at float precision.
    layer.w0 = Tensor(d, k);
    const double sd = 1.0 / std::sqrt(static_cast<double>(k));
    for (auto& w : layer.w0.flat()) w = round_to_float(rng.normal(0.0, sd));
    layer.phi_up = Tensor(d, r, 0.0);
    // Kaiming uniform, fan_in = k.
    layer.phi_down = uniform_tensor(rng, r, k, std::sqrt(6.0 / static_cast<double>(k)));
    return layer;
}

Tensor realign_forward(const RealignLayer& layer, const Tensor& x, bool training, Rng& rng, RealignCache* cache) {
    const std::size_t T = x.rows(), k = layer.in_dim(), d = layer.out_dim(), r = layer.rank;
    if (x.cols() != k) {
        throw Error(ErrorCode::ShapeMismatch,
                    "input has " + std::to_string(x.cols()) + " columns, layer expects " + std::to_string(k));
    }

    Tensor dropped = x;
    Tensor keep_scale;
    if (training && layer.dropout_rate > 0.0) {
        keep_scale = Tensor(T, k);
        const double kept = 1.0 / (1.0 - layer.dropout_rate);
        auto dst = dropped.flat();
        auto mask = keep_scale.flat();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            mask[i] = rng.bernoulli(layer.dropout_rate) ? 0.0 : kept;
            dst[i] *= mask[i];
        }
    }

    Tensor bottleneck(T, r);
    for (std::size_t t = 0; t < T; ++t) {
        const auto dx = dropped.row(t);
        for (std::size_t j = 0; j < r; ++j) {
            const auto pd = layer.phi_down.row(j);
            double acc = 0.0;
            for (std::size_t c = 0; c < k; ++c) acc += pd[c] * dx[c];
            bottleneck(t, j) = acc;
        }
    }

    const double s = layer.scale();
    Tensor h(T, d);
    for (std::size_t t = 0; t < T; ++t) {
        const auto xr = x.row(t);
        const auto br = bottleneck.row(t);
        for (std::size_t i = 0; i < d; ++i) {
            const auto w = layer.w0.row(i);
            double frozen = 0.0;
            for (std::size_t c = 0; c < k; ++c) frozen += w[c] * xr[c];
            const auto up = layer.phi_up.row(i);
            double low_rank = 0.0;
            for (std::size_t j = 0; j < r; ++j) low_rank += up[j] * br[j];
            h(t, i) = frozen + s * low_rank;
        }
    }

    if (cache != nullptr) {
        cache->dropped = std::move(dropped);
        cache->keep_scale = std::move(keep_scale);
        cache->bottleneck = std::move(bottleneck);
        cache->valid = true;
    }
    return h;
}

RealignGrads realign_backward(const RealignLayer& layer, const Tensor& x, RealignCache& cache,
                              const Tensor& upstream, bool want_input_grad) {
    if (!cache.valid) throw Error(ErrorCode::StaleMask, "realign_backward needs a preceding forward pass");
    const std::size_t T = x.rows(), k = layer.in_dim(), d = layer.out_dim(), r = layer.rank;
    if (upstream.rows() != T || upstream.cols() != d || cache.dropped.rows() != T) {
        throw Error(ErrorCode::ShapeMismatch, "upstream gradient shape does not match the cached forward");
    }
    cache.valid = false;
    const double s = layer.scale();

    RealignGrads g;
    g.phi_up = Tensor(d, r);
    Tensor d_bottleneck(T, r);
    for (std::size_t t = 0; t < T; ++t) {
        const auto up_row = upstream.row(t);
        const auto br = cache.bottleneck.row(t);
        auto dbr = d_bottleneck.row(t);
        for (std::size_t i = 0; i < d; ++i) {
            const double gi = s * up_row[i];
            if (gi == 0.0) continue;
            auto gu = g.phi_up.row(i);
            const auto pu = layer.phi_up.row(i);
            for (std::size_t j = 0; j < r; ++j) {
                gu[j] += gi * br[j];
                dbr[j] += gi * pu[j];
            }
        }
    }

    g.phi_down = Tensor(r, k);
    for (std::size_t t = 0; t < T; ++t) {
        const auto dx = cache.dropped.row(t);
        for (std::size_t j = 0; j < r; ++j) {
            const double gb = d_bottleneck(t, j);
            if (gb == 0.0) continue;
            auto gd = g.phi_down.row(j);
            for (std::size_t c = 0; c < k; ++c) gd[c] += gb * dx[c];
        }
    }

    if (want_input_grad) {
        g.input = Tensor(T, k);
        for (std::size_t t = 0; t < T; ++t) {
            auto gi = g.input.row(t);
            const auto up_row = upstream.row(t);
            for (std::size_t i = 0; i < d; ++i) {
                const auto w = layer.w0.row(i);
                for (std::size_t c = 0; c < k; ++c) gi[c] += up_row[i] * w[c];
            }
            for (std::size_t j = 0; j < r; ++j) {
                const double gb = d_bottleneck(t, j);
                const auto pd = layer.phi_down.row(j);
                for (std::size_t c = 0; c < k; ++c) {
                    const double mask = cache.keep_scale.empty() ? 1.0 : cache.keep_scale(t, c);
                    gi[c] += gb * pd[c] * mask;
                }
            }
        }
    }
    return g;
}

std::vector<double> pool(const Tensor& h) {
    std::vector<double> f(h.cols(), 0.0);
    if (h.rows() == 0) return f;
    for (std::size_t t = 0; t < h.rows(); ++t) {
        const auto row = h.row(t);
        for (std::size_t j = 0; j < f.size(); ++j) f[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(h.rows());
    for (auto& v : f) v *= inv;
    return f;
}

// ---------------------------------------------------------------------------
// Heads

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double head_logit(const LinearHead& head, std::span<const double> f) {
    if (f.size() != head.w.size()) {
        throw Error(ErrorCode::ShapeMismatch, "head expects " + std::to_string(head.w.size()) + " inputs");
    }
    double z = head.b;
    for (std::size_t i = 0; i < f.size(); ++i) z += head.w[i] * f[i];
    return z;
}

double head_forward(const LinearHead& head, std::span<const double> f) { return sigmoid(head_logit(head, f)); }

// ---------------------------------------------------------------------------
// Bundle

void ModelConfig::validate() const {
    if (k_v == 0 || k_a == 0 || d_v == 0 || d_a == 0) {
        throw Error(ErrorCode::InvalidConfig, "model dims must be positive");
    }
    if (rank == 0 || rank > std::min(k_v, d_v) || rank > std::min(k_a, d_a)) {
        throw Error(ErrorCode::InvalidRank, "rank must lie in [1, min(d, k)] for both modalities");
    }
    if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "dropout_rate must lie in [0, 1)");
    }
    pad.validate();
}

ModelBundle init_model(const ModelConfig& config) {
    config.validate();
    ModelBundle b;
    b.config = config;
    b.realign_v = init_realign(config.k_v, config.d_v, config.rank, config.alpha, config.dropout_rate,
                               mix_seed(config.seed, 101));
    b.realign_a = init_realign(config.k_a, config.d_a, config.rank, config.alpha, config.dropout_rate,
                               mix_seed(config.seed, 102));
    Rng rng(mix_seed(config.seed, 103));
    b.head_v = init_head(rng, config.d_v);
    b.head_a = init_head(rng, config.d_a);
    b.head_va = init_head(rng, config.d_v + config.d_a);
    return b;
}

std::vector<double> TokenForward::fused() const {
    std::vector<double> out;
    out.reserve(f_v.size() + f_a.size());
    out.insert(out.end(), f_v.begin(), f_v.end());
    out.insert(out.end(), f_a.begin(), f_a.end());
    return out;
}

TokenForward forward_token(const ModelBundle& bundle, const TokenFeatures& features, bool training, Rng& rng) {
    TokenForward out;
    const auto padded = pad_token(features, bundle.config.pad);
    out.x_v = matrix_cast<double>(padded.visual);
    out.x_a = matrix_cast<double>(padded.audio);
    out.f_v = pool(realign_forward(bundle.realign_v, out.x_v, training, rng, &out.cache_v));
    out.f_a = pool(realign_forward(bundle.realign_a, out.x_a, training, rng, &out.cache_a));
    out.p_v = head_forward(bundle.head_v, out.f_v);
    out.p_a = head_forward(bundle.head_a, out.f_a);
    out.p_av = head_forward(bundle.head_va, out.fused());
    return out;
}

BundleGrads BundleGrads::zeros_like(const ModelBundle& bundle) {
    BundleGrads g;
    g.phi_up_v = Tensor(bundle.realign_v.phi_up.rows(), bundle.realign_v.phi_up.cols());
    g.phi_down_v = Tensor(bundle.realign_v.phi_down.rows(), bundle.realign_v.phi_down.cols());
    g.phi_up_a = Tensor(bundle.realign_a.phi_up.rows(), bundle.realign_a.phi_up.cols());
    g.phi_down_a = Tensor(bundle.realign_a.phi_down.rows(), bundle.realign_a.phi_down.cols());
    g.w_v.assign(bundle.head_v.w.size(), 0.0);
    g.w_a.assign(bundle.head_a.w.size(), 0.0);
    g.w_va.assign(bundle.head_va.w.size(), 0.0);
    return g;
}

void BundleGrads::scale(double s) {
    for (Tensor* t : {&phi_up_v, &phi_down_v, &phi_up_a, &phi_down_a}) {
        for (auto& x : t->flat()) x *= s;
    }
    for (auto* v : {&w_v, &w_a, &w_va}) {
        for (auto& x : *v) x *= s;
    }
    b_v *= s;
    b_a *= s;
    b_va *= s;
}

namespace {

void add_into(Tensor& dst, const Tensor& src) {
    auto d = dst.flat();
    auto s = src.flat();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// dL/dH for H = pooled over T rows: every row receives df / T.
Tensor pooled_upstream(std::span<const double> df, std::size_t T) {
    Tensor up(T, df.size());
    const double inv = 1.0 / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
        auto row = up.row(t);
        for (std::size_t j = 0; j < df.size(); ++j) row[j] = df[j] * inv;
    }
    return up;
}

}  // namespace

void backward_token(const ModelBundle& bundle, TokenForward& fwd, double dlogit_v, double dlogit_a,
                    double dlogit_av, BundleGrads& grads) {
    const std::size_t dv = fwd.f_v.size(), da = fwd.f_a.size();
    std::vector<double> df_v(dv), df_a(da);
    for (std::size_t j = 0; j < dv; ++j) {
        grads.w_v[j] += dlogit_v * fwd.f_v[j];
        grads.w_va[j] += dlogit_av * fwd.f_v[j];
        df_v[j] = dlogit_v * bundle.head_v.w[j] + dlogit_av * bundle.head_va.w[j];
    }
    for (std::size_t j = 0; j < da; ++j) {
        grads.w_a[j] += dlogit_a * fwd.f_a[j];
        grads.w_va[dv + j] += dlogit_av * fwd.f_a[j];
        df_a[j] = dlogit_a * bundle.head_a.w[j] + dlogit_av * bundle.head_va.w[dv + j];
    }
    grads.b_v += dlogit_v;
    grads.b_a += dlogit_a;
    grads.b_va += dlogit_av;

    auto gv = realign_backward(bundle.realign_v, fwd.x_v, fwd.cache_v, pooled_upstream(df_v, fwd.x_v.rows()), false);
    auto ga = realign_backward(bundle.realign_a, fwd.x_a, fwd.cache_a, pooled_upstream(df_a, fwd.x_a.rows()), false);
    add_into(grads.phi_up_v, gv.phi_up);
    add_into(grads.phi_down_v, gv.phi_down);
    add_into(grads.phi_up_a, ga.phi_up);
    add_into(grads.phi_down_a, ga.phi_down);
}

Tensor fused_features(const ModelBundle& bundle, const Dataset& dataset) {
    const std::size_t dim = bundle.config.d_v + bundle.config.d_a;
    Tensor out(dataset.token_count(), dim);
    Rng unused(0);
    std::size_t r = 0;
    for (std::size_t v = 0; v < dataset.videos.size(); ++v) {
        for (std::size_t t = 0; t < dataset.videos[v].tokens.size(); ++t, ++r) {
            const auto fwd = forward_token(bundle, dataset.token_features(v, t), false, unused);
            const auto f = fwd.fused();
            std::ranges::copy(f, out.row(r).begin());
        }
    }
    return out;
}

std::vector<std::vector<double>> score_dataset(const ModelBundle& bundle, const Dataset& dataset) {
    std::vector<std::vector<double>> scores(dataset.videos.size());
    Rng unused(0);
    for (std::size_t v = 0; v < dataset.videos.size(); ++v) {
        scores[v].reserve(dataset.videos[v].tokens.size());
        for (std::size_t t = 0; t < dataset.videos[v].tokens.size(); ++t) {
            scores[v].push_back(forward_token(bundle, dataset.token_features(v, t), false, unused).p_av);
        }
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Config JSON

std::string model_config_json(const ModelConfig& c) {
    json j = {{"k_v", c.k_v},
              {"k_a", c.k_a},
              {"d_v", c.d_v},
              {"d_a", c.d_a},
              {"rank", c.rank},
              {"alpha", c.alpha},
              {"dropout_rate", c.dropout_rate},
              {"seed", c.seed},
              {"padding",
               {{"target_T_v", c.pad.target_T_v},
                {"target_T_a", c.pad.target_T_a},
                {"strategy_v", to_string(c.pad.strategy_v)},
                {"strategy_a", to_string(c.pad.strategy_a)}}}};
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("model config: ") + e.what());
    }
    constexpr std::string_view ctx = "model";
    reject_unknown_keys(j, {"k_v", "k_a", "d_v", "d_a", "rank", "alpha", "dropout_rate", "seed", "padding"}, ctx);
    ModelConfig c;
    read_optional(j, "k_v", c.k_v, ctx);
    read_optional(j, "k_a", c.k_a, ctx);
    read_optional(j, "d_v", c.d_v, ctx);
    read_optional(j, "d_a", c.d_a, ctx);
    read_optional(j, "rank", c.rank, ctx);
    read_optional(j, "alpha", c.alpha, ctx);
    read_optional(j, "dropout_rate", c.dropout_rate, ctx);
    read_optional(j, "seed", c.seed, ctx);
    if (auto it = j.find("padding"); it != j.end()) {
        constexpr std::string_view pctx = "model.padding";
        reject_unknown_keys(*it, {"target_T_v", "target_T_a", "strategy_v", "strategy_a"}, pctx);
        read_optional(*it, "target_T_v", c.pad.target_T_v, pctx);
        read_optional(*it, "target_T_a", c.pad.target_T_a, pctx);
        std::string sv = std::string(to_string(c.pad.strategy_v));
        std::string sa = std::string(to_string(c.pad.strategy_a));
        read_optional(*it, "strategy_v", sv, pctx);
        read_optional(*it, "strategy_a", sa, pctx);
        c.pad.strategy_v = parse_pad_strategy(sv);
        c.pad.strategy_a = parse_pad_strategy(sa);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;
};

void write_tensor(std::ostream& os, const std::string& name, std::vector<std::uint32_t> dims,
                  std::span<const double> values) {
    binio::write_string(os, name);
    binio::write_u32(os, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) binio::write_u32(os, d);
    for (double v : values) binio::write_f32(os, static_cast<float>(v));
}

void write_matrix_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    write_tensor(os, name, {static_cast<std::uint32_t>(t.rows()), static_cast<std::uint32_t>(t.cols())}, t.flat());
}

Tensor take_matrix(std::map<std::string, NamedTensor>& tensors, const std::string& name, std::size_t rows,
                   std::size_t cols) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(ErrorCode::FormatError, "checkpoint lacks tensor '" + name + "'");
    const auto& t = it->second;
    if (t.dims.size() != 2 || t.dims[0] != rows || t.dims[1] != cols) {
        throw Error(ErrorCode::DimensionMismatch, "checkpoint tensor '" + name + "' has unexpected shape");
    }
    return Tensor(rows, cols, t.values);
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    binio::write_u32(out, kCheckpointVersion);
    binio::write_u32(out, 13);

    const std::string config = model_config_json(bundle.config);
    binio::write_string(out, "config");
    binio::write_u32(out, 1);
    binio::write_u32(out, static_cast<std::uint32_t>(config.size()));
    binio::write_bytes(out, config);

    for (const auto& [prefix, layer] : {std::pair{"realign_v", &bundle.realign_v}, {"realign_a", &bundle.realign_a}}) {
        write_matrix_tensor(out, std::string(prefix) + ".W0", layer->w0);
        write_matrix_tensor(out, std::string(prefix) + ".phi_up", layer->phi_up);
        write_matrix_tensor(out, std::string(prefix) + ".phi_down", layer->phi_down);
    }
    for (const auto& [prefix, head] :
         {std::pair{"head_v", &bundle.head_v}, {"head_a", &bundle.head_a}, {"head_va", &bundle.head_va}}) {
        write_tensor(out, std::string(prefix) + ".W", {1, static_cast<std::uint32_t>(head->w.size())}, head->w);
        const double b = head->b;
        write_tensor(out, std::string(prefix) + ".b", {1}, std::span<const double>(&b, 1));
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    char magic[8];
    binio::read_exact(in, magic, sizeof magic);
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
        throw Error(ErrorCode::FormatError, path.string() + ": bad magic");
    }
    if (const auto version = binio::read_u32(in); version != kCheckpointVersion) {
        throw Error(ErrorCode::FormatError, "unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = binio::read_u32(in);
    std::string config_text;
    bool have_config = false;
    std::map<std::string, NamedTensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = binio::read_string(in, 4096);
        const auto rank = binio::read_u32(in);
        if (rank > 8) throw Error(ErrorCode::FormatError, "tensor rank out of range");
        std::size_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.dims.push_back(binio::read_u32(in));
            n *= t.dims.back();
        }
        if (n > (std::size_t{1} << 28)) throw Error(ErrorCode::FormatError, "tensor too large");
        if (t.name == "config") {
            if (rank != 1) throw Error(ErrorCode::FormatError, "config blob must be rank 1");
            config_text = binio::read_bytes(in, n);
            have_config = true;
            continue;
        }
        t.values.resize(n);
        for (auto& v : t.values) v = binio::read_f32(in);
        tensors.emplace(t.name, std::move(t));
    }
    if (!have_config) throw Error(ErrorCode::FormatError, "checkpoint lacks the config blob");

    ModelBundle b;
    b.config = model_config_from_json(config_text);
    b.config.validate();
    const auto& c = b.config;
    for (auto [prefix, layer, k, d] : {std::tuple{"realign_v", &b.realign_v, c.k_v, c.d_v},
                                       std::tuple{"realign_a", &b.realign_a, c.k_a, c.d_a}}) {
        layer->alpha = c.alpha;
        layer->rank = c.rank;
        layer->dropout_rate = c.dropout_rate;
        layer->w0 = take_matrix(tensors, std::string(prefix) + ".W0", d, k);
        layer->phi_up = take_matrix(tensors, std::string(prefix) + ".phi_up", d, c.rank);
        layer->phi_down = take_matrix(tensors, std::string(prefix) + ".phi_down", c.rank, k);
    }
    for (auto [prefix, head, dim] : {std::tuple{"head_v", &b.head_v, c.d_v}, std::tuple{"head_a", &b.head_a, c.d_a},
                                     std::tuple{"head_va", &b.head_va, c.d_v + c.d_a}}) {
        const auto w = take_matrix(tensors, std::string(prefix) + ".W", 1, dim);
        head->w.assign(w.flat().begin(), w.flat().end());
        auto it = tensors.find(std::string(prefix) + ".b");
        if (it == tensors.end() || it->second.values.size() != 1) {
            throw Error(ErrorCode::FormatError, std::string("checkpoint lacks tensor '") + prefix + ".b'");
        }
        head->b = it->second.values[0];
    }
    for (const auto* layer : {&b.realign_v, &b.realign_a}) {
        check_finite(layer->w0.flat(), "checkpoint contains non-finite W0");
        check_finite(layer->phi_up.flat(), "checkpoint contains non-finite phi_up");
        check_finite(layer->phi_down.flat(), "checkpoint contains non-finite phi_down");
    }
    return b;
}

}  // namespace wafl
