#pragma once

// Tiny decoder-only autoregressive model with residual-stream capture,
// relaxed one-hot inputs, activation edits (ablate/add a direction), and
// explicit reverse-mode gradients through the fixed architecture.
//
// Architecture: pre-norm transformer blocks (causal multi-head attention
// + GELU MLP), RMSNorm, learned absolute positions, untied unembedding.
// All math in 64-bit floats, single-threaded, bit-deterministic.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "suffixlab/common.hpp"
#include "suffixlab/linalg.hpp"

namespace suffixlab {

// chat template: BOS, prompt tokens, EOI, response tokens
constexpr int kBosToken = 0;
constexpr int kEoiToken = 1;

constexpr double kRmsEps = 1e-6;

// ----------------------------- config & sequences -----------------------------

struct ModelConfig {
    int n_layers = 4;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 128;
    int vocab_size = 64;
    int max_seq_len = 48;
    std::uint64_t seed = 1;

    int head_dim() const { return d_model / n_heads; }

    void validate() const {
        require(n_layers >= 2, "ModelConfig: n_layers must be >= 2");
        require(d_model >= 1 && n_heads >= 1, "ModelConfig: bad dimensions");
        require(d_model % n_heads == 0, "ModelConfig: d_model not divisible by n_heads");
        require(vocab_size >= 4, "ModelConfig: vocab_size must be >= 4");
        require(d_ff >= 1, "ModelConfig: d_ff must be >= 1");
        require(max_seq_len >= 4, "ModelConfig: max_seq_len must be >= 4");
    }

    bool operator==(const ModelConfig&) const = default;
};

struct TokenSequence {
    std::vector<int> tokens;
    int eoi_index = -1;

    int length() const { return static_cast<int>(tokens.size()); }

    void validate(const ModelConfig& cfg) const {
        require(!tokens.empty(), "TokenSequence: empty");
        require(length() <= cfg.max_seq_len, "TokenSequence: longer than max_seq_len");
        for (int t : tokens)
            require(t >= 0 && t < cfg.vocab_size, "TokenSequence: token id out of range");
        require(eoi_index >= 0 && eoi_index < length(), "TokenSequence: eoi_index out of range");
        require(tokens[eoi_index] == kEoiToken, "TokenSequence: eoi_index does not point at EOI");
        int n_eoi = 0;
        for (int t : tokens) n_eoi += (t == kEoiToken);
        require(n_eoi == 1, "TokenSequence: EOI token must appear exactly once");
    }
};

// ----------------------------- parameters -----------------------------

struct ParamLayout {
    struct Block {
        std::size_t attn_gain, wq, wk, wv, wo, mlp_gain, w1, w2;
    };
    std::size_t tok_embed = 0, pos_embed = 0, final_gain = 0, unembed = 0, total = 0;
    std::vector<Block> blocks;

    static ParamLayout make(const ModelConfig& c) {
        ParamLayout l;
        std::size_t off = 0;
        auto take = [&off](std::size_t n) { std::size_t o = off; off += n; return o; };
        const std::size_t d = c.d_model, f = c.d_ff, v = c.vocab_size, s = c.max_seq_len;
        l.tok_embed = take(v * d);
        l.pos_embed = take(s * d);
        l.blocks.resize(c.n_layers);
        for (auto& b : l.blocks) {
            b.attn_gain = take(d);
            b.wq = take(d * d);
            b.wk = take(d * d);
            b.wv = take(d * d);
            b.wo = take(d * d);
            b.mlp_gain = take(d);
            b.w1 = take(f * d); // [d_ff x d_model], rows are output units
            b.w2 = take(d * f); // [d_model x d_ff]
        }
        l.final_gain = take(d);
        l.unembed = take(v * d); // [vocab x d_model]
        l.total = off;
        return l;
    }
};

// One flat buffer holds either weights or their gradients.
struct Parameters {
    ModelConfig config;
    ParamLayout layout;
    Vec data;

    explicit Parameters(const ModelConfig& cfg)
        : config(cfg), layout(ParamLayout::make(cfg)), data(layout.total, 0.0) {
        cfg.validate();
    }

    double* tok_embed() { return data.data() + layout.tok_embed; }
    const double* tok_embed() const { return data.data() + layout.tok_embed; }
    double* pos_embed() { return data.data() + layout.pos_embed; }
    const double* pos_embed() const { return data.data() + layout.pos_embed; }
    double* final_gain() { return data.data() + layout.final_gain; }
    const double* final_gain() const { return data.data() + layout.final_gain; }
    double* unembed() { return data.data() + layout.unembed; }
    const double* unembed() const { return data.data() + layout.unembed; }
    double* block(std::size_t off) { return data.data() + off; }
    const double* block(std::size_t off) const { return data.data() + off; }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    std::uint64_t content_hash() const {
        std::uint64_t h = fnv1a64(&config.n_layers, sizeof(int) * 6);
        return fnv1a64(data.data(), data.size() * sizeof(double), h);
    }
};

inline Parameters init_parameters(const ModelConfig& cfg) {
    Parameters p(cfg);
    Rng rng(cfg.seed);
    const double init_std = 0.08;
    for (auto& x : p.data) x = rng.next_gauss(0.0, init_std);
    // norm gains start at identity
    auto set_ones = [&](std::size_t off, int n) {
        for (int i = 0; i < n; ++i) p.data[off + i] = 1.0;
    };
    for (const auto& b : p.layout.blocks) {
        set_ones(b.attn_gain, cfg.d_model);
        set_ones(b.mlp_gain, cfg.d_model);
    }
    set_ones(p.layout.final_gain, cfg.d_model);
    return p;
}

// ----------------------------- residual edits -----------------------------

// Steering edits applied to the residual stream at capture points
// (post-embedding = layer 0, post-block = layers 1..n_layers).
//   ablate: remove the direction's projection at every layer and position
//   add:    add scale * unit_direction at one layer, every position
struct ResidualEdit {
    enum class Kind { none, ablate, add };
    Kind kind = Kind::none;
    Vec unit_direction;
    int add_layer = -1;
    double add_scale = 0.0;

    static ResidualEdit none() { return {}; }

    static ResidualEdit ablation(Vec unit_dir) {
        ResidualEdit e;
        e.kind = Kind::ablate;
        e.unit_direction = std::move(unit_dir);
        return e;
    }

    static ResidualEdit addition(Vec unit_dir, int layer, double scale) {
        ResidualEdit e;
        e.kind = Kind::add;
        e.unit_direction = std::move(unit_dir);
        e.add_layer = layer;
        e.add_scale = scale;
        return e;
    }
};

// ----------------------------- forward -----------------------------

struct ForwardTrace {
    Mat logits;                // [seq_len x vocab]; empty when stopped early
    std::vector<Mat> residual; // n_layers+1 entries of [seq_len x d_model]
};

struct TraceOptions {
    ResidualEdit edit;
    int stop_layer = -1;       // compute captures 0..stop_layer only, skip logits
    int start_layer = 0;       // with `injected`: resume from this capture point
    const Mat* injected = nullptr;
};

namespace detail {

inline void rmsnorm_row(const double* x, const double* gain, double* out, double& r_out, int d) {
    double ss = 0.0;
    for (int i = 0; i < d; ++i) ss += x[i] * x[i];
    const double r = std::sqrt(ss / d + kRmsEps);
    for (int i = 0; i < d; ++i) out[i] = gain[i] * x[i] / r;
    r_out = r;
}

// out[o] = dot(W.row(o), x), W is [n_out x n_in] row-major
inline void matvec(const double* w, const double* x, double* out, int n_out, int n_in) {
    for (int o = 0; o < n_out; ++o) out[o] = dot(w + static_cast<std::size_t>(o) * n_in, x, n_in);
}

// x_grad[i] += dot(W.col(i), dy); accumulated as x_grad += W^T dy
inline void matvec_t_acc(const double* w, const double* dy, double* x_grad, int n_out, int n_in) {
    for (int o = 0; o < n_out; ++o) {
        const double g = dy[o];
        if (g == 0.0) continue;
        axpy(g, w + static_cast<std::size_t>(o) * n_in, x_grad, n_in);
    }
}

inline double gelu(double x) {
    const double c = 0.7978845608028654; // sqrt(2/pi)
    const double u = c * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad(double x) {
    const double c = 0.7978845608028654;
    const double u = c * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

inline void apply_edit(Mat& resid, const ResidualEdit& e, int capture_layer) {
    if (e.kind == ResidualEdit::Kind::none) return;
    const int d = static_cast<int>(resid.cols);
    if (e.kind == ResidualEdit::Kind::ablate) {
        for (std::size_t p = 0; p < resid.rows; ++p) {
            double* x = resid.row(p);
            const double c = dot(x, e.unit_direction.data(), d);
            axpy(-c, e.unit_direction.data(), x, d);
        }
    } else if (e.kind == ResidualEdit::Kind::add && capture_layer == e.add_layer) {
        for (std::size_t p = 0; p < resid.rows; ++p)
            axpy(e.add_scale, e.unit_direction.data(), resid.row(p), d);
    }
}

} // namespace detail

// Per-layer intermediates retained for the backward pass.
struct BlockCache {
    Mat norm1_out;      // [T x D]
    Vec norm1_r;        // [T]
    Mat q, k, v;        // [T x D], heads packed along columns
    std::vector<Mat> attn; // per head [T x T], causal rows
    Mat ctx;            // [T x D]
    Mat mid;            // residual after attention, before MLP
    Vec norm2_r;        // [T]
    Mat norm2_out;      // [T x D]
    Mat mlp_pre;        // [T x F]
    Mat mlp_act;        // [T x F]
};

struct ForwardCache {
    Mat x_onehot;              // [T x V] (relaxed) one-hot input
    std::vector<Mat> residual; // [L+1] of [T x D]
    std::vector<BlockCache> blocks;
    Mat final_norm_out;        // [T x D]
    Vec final_r;               // [T]
    Mat logits;                // [T x V]
};

inline Mat onehot_rows(const std::vector<int>& tokens, int vocab) {
    Mat x(tokens.size(), vocab);
    for (std::size_t p = 0; p < tokens.size(); ++p) {
        require(tokens[p] >= 0 && tokens[p] < vocab, "onehot_rows: token id out of range");
        x.at(p, tokens[p]) = 1.0;
    }
    return x;
}

namespace detail {

// Shared forward. `cache` may be null (trace-only). Edits are rejected
// when a cache is requested: the backward pass assumes an unedited net.
inline ForwardTrace run_forward(const Parameters& p, const Mat& x_onehot,
                                const TraceOptions& opt, ForwardCache* cache) {
    const ModelConfig& c = p.config;
    const int t_len = static_cast<int>(x_onehot.rows);
    const int d = c.d_model, nh = c.n_heads, dh = c.head_dim(), f = c.d_ff, v = c.vocab_size;
    require(t_len >= 1 && t_len <= c.max_seq_len, "forward: sequence length out of range");
    require(static_cast<int>(x_onehot.cols) == v, "forward: one-hot width != vocab_size");
    if (cache) {
        require(opt.edit.kind == ResidualEdit::Kind::none, "forward: edits not supported with gradient cache");
        require(opt.injected == nullptr && opt.stop_layer < 0, "forward: partial runs not supported with gradient cache");
    }
    if (opt.edit.kind != ResidualEdit::Kind::none)
        require(static_cast<int>(opt.edit.unit_direction.size()) == d, "forward: edit direction dimension mismatch");

    ForwardTrace tr;
    tr.residual.assign(c.n_layers + 1, Mat());

    const int start = opt.injected ? opt.start_layer : 0;
    if (opt.injected) {
        require(start >= 0 && start <= c.n_layers, "forward: injection layer out of range");
        require(opt.injected->rows == static_cast<std::size_t>(t_len) &&
                    opt.injected->cols == static_cast<std::size_t>(d),
                "forward: injected residual shape mismatch");
        tr.residual[start] = *opt.injected;
    } else {
        // embedding = X * tok_embed + positions
        Mat e(t_len, d);
        for (int pos = 0; pos < t_len; ++pos) {
            double* row = e.row(pos);
            const double* xr = x_onehot.row(pos);
            for (int tok = 0; tok < v; ++tok) {
                const double w = xr[tok];
                if (w != 0.0) axpy(w, p.tok_embed() + static_cast<std::size_t>(tok) * d, row, d);
            }
            axpy(1.0, p.pos_embed() + static_cast<std::size_t>(pos) * d, row, d);
        }
        detail::apply_edit(e, opt.edit, 0);
        tr.residual[0] = std::move(e);
    }

    if (cache) {
        cache->x_onehot = x_onehot;
        cache->blocks.assign(c.n_layers, BlockCache{});
    }

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const int last = (opt.stop_layer >= 0) ? opt.stop_layer : c.n_layers;
    require(last <= c.n_layers, "forward: stop_layer out of range");

    for (int b = start; b < last; ++b) {
        const auto& bl = p.layout.blocks[b];
        const Mat& x_in = tr.residual[b];
        BlockCache* bc = cache ? &cache->blocks[b] : nullptr;

        Mat n1(t_len, d);
        Vec r1(t_len);
        for (int pos = 0; pos < t_len; ++pos)
            detail::rmsnorm_row(x_in.row(pos), p.block(bl.attn_gain), n1.row(pos), r1[pos], d);

        Mat q(t_len, d), k(t_len, d), vv(t_len, d);
        for (int pos = 0; pos < t_len; ++pos) {
            detail::matvec(p.block(bl.wq), n1.row(pos), q.row(pos), d, d);
            detail::matvec(p.block(bl.wk), n1.row(pos), k.row(pos), d, d);
            detail::matvec(p.block(bl.wv), n1.row(pos), vv.row(pos), d, d);
        }

        std::vector<Mat> attn(nh);
        Mat ctx(t_len, d);
        for (int h = 0; h < nh; ++h) {
            const int o0 = h * dh;
            Mat& a = attn[h];
            a = Mat(t_len, t_len);
            for (int pos = 0; pos < t_len; ++pos) {
                double mx = -1e300;
                for (int j = 0; j <= pos; ++j) {
                    const double s = dot(q.row(pos) + o0, k.row(j) + o0, dh) * inv_sqrt_dh;
                    a.at(pos, j) = s;
                    if (s > mx) mx = s;
                }
                double z = 0.0;
                for (int j = 0; j <= pos; ++j) {
                    const double e = std::exp(a.at(pos, j) - mx);
                    a.at(pos, j) = e;
                    z += e;
                }
                double* c_row = ctx.row(pos) + o0;
                for (int j = 0; j <= pos; ++j) {
                    const double w = a.at(pos, j) / z;
                    a.at(pos, j) = w;
                    axpy(w, vv.row(j) + o0, c_row, dh);
                }
            }
        }

        Mat mid(t_len, d);
        for (int pos = 0; pos < t_len; ++pos) {
            double* m_row = mid.row(pos);
            detail::matvec(p.block(bl.wo), ctx.row(pos), m_row, d, d);
            axpy(1.0, x_in.row(pos), m_row, d);
        }

        Mat n2(t_len, d);
        Vec r2(t_len);
        for (int pos = 0; pos < t_len; ++pos)
            detail::rmsnorm_row(mid.row(pos), p.block(bl.mlp_gain), n2.row(pos), r2[pos], d);

        Mat pre(t_len, f), act(t_len, f);
        Mat out(t_len, d);
        for (int pos = 0; pos < t_len; ++pos) {
            detail::matvec(p.block(bl.w1), n2.row(pos), pre.row(pos), f, d);
            double* a_row = act.row(pos);
            const double* p_row = pre.row(pos);
            for (int i = 0; i < f; ++i) a_row[i] = detail::gelu(p_row[i]);
            double* o_row = out.row(pos);
            detail::matvec(p.block(bl.w2), a_row, o_row, d, f);
            axpy(1.0, mid.row(pos), o_row, d);
        }
        detail::apply_edit(out, opt.edit, b + 1);

        if (bc) {
            bc->norm1_out = std::move(n1);
            bc->norm1_r = std::move(r1);
            bc->q = std::move(q);
            bc->k = std::move(k);
            bc->v = std::move(vv);
            bc->attn = std::move(attn);
            bc->ctx = std::move(ctx);
            bc->mid = std::move(mid);
            bc->norm2_r = std::move(r2);
            bc->norm2_out = std::move(n2);
            bc->mlp_pre = std::move(pre);
            bc->mlp_act = std::move(act);
        }
        tr.residual[b + 1] = std::move(out);
    }

    if (opt.stop_layer >= 0) {
        if (cache) throw validation_error("forward: cache with stop_layer unsupported");
        return tr;
    }

    Mat fn(t_len, d);
    Vec fr(t_len);
    for (int pos = 0; pos < t_len; ++pos)
        detail::rmsnorm_row(tr.residual[c.n_layers].row(pos), p.final_gain(), fn.row(pos), fr[pos], d);
    tr.logits = Mat(t_len, v);
    for (int pos = 0; pos < t_len; ++pos)
        detail::matvec(p.unembed(), fn.row(pos), tr.logits.row(pos), v, d);

    if (cache) {
        cache->residual = tr.residual;
        cache->final_norm_out = std::move(fn);
        cache->final_r = std::move(fr);
        cache->logits = tr.logits;
    }
    return tr;
}

} // namespace detail

inline ForwardTrace forward_trace(const Parameters& p, const Mat& x_onehot,
                                  const TraceOptions& opt = {}) {
    return detail::run_forward(p, x_onehot, opt, nullptr);
}

inline ForwardTrace forward_trace_tokens(const Parameters& p, const std::vector<int>& tokens,
                                         const TraceOptions& opt = {}) {
    return detail::run_forward(p, onehot_rows(tokens, p.config.vocab_size), opt, nullptr);
}

inline ForwardTrace forward_with_trace(const Parameters& p, const TokenSequence& seq) {
    seq.validate(p.config);
    return forward_trace_tokens(p, seq.tokens);
}

inline ForwardCache forward_cached(const Parameters& p, const Mat& x_onehot) {
    ForwardCache cache;
    detail::run_forward(p, x_onehot, {}, &cache);
    return cache;
}

// ----------------------------- backward -----------------------------

// Extra gradient injected at a residual capture point, used to
// differentiate activation-space objectives (push/shift regularizers).
struct ResidualGradSeed {
    int layer = 0;
    int pos = 0;
    Vec grad;
};

// Reverse-mode pass. `param_grads` (optional) is accumulated into;
// `d_onehot` (optional) receives the input gradient [T x V].
inline void backward(const Parameters& p, const ForwardCache& cache, const Mat& d_logits,
                     const std::vector<ResidualGradSeed>& seeds,
                     Parameters* param_grads, Mat* d_onehot) {
    const ModelConfig& c = p.config;
    const int t_len = static_cast<int>(cache.residual[0].rows);
    const int d = c.d_model, nh = c.n_heads, dh = c.head_dim(), f = c.d_ff, v = c.vocab_size;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    if (param_grads)
        require(param_grads->config == c, "backward: gradient buffer config mismatch");

    auto rmsnorm_backward = [&](const double* x, double r, const double* gain,
                                const double* dy, double* dx_acc, double* dgain_acc) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += dy[i] * gain[i] * x[i];
        const double inv_r = 1.0 / r;
        const double k3 = s / (d * r * r * r);
        for (int i = 0; i < d; ++i) dx_acc[i] += gain[i] * dy[i] * inv_r - x[i] * k3;
        if (dgain_acc)
            for (int i = 0; i < d; ++i) dgain_acc[i] += dy[i] * x[i] * inv_r;
    };

    // final norm + unembed
    Mat d_resid(t_len, d);
    {
        Mat d_fn(t_len, d);
        for (int pos = 0; pos < t_len; ++pos) {
            const double* dl = d_logits.row(pos);
            detail::matvec_t_acc(p.unembed(), dl, d_fn.row(pos), v, d);
            if (param_grads) {
                double* du = param_grads->unembed();
                const double* fn = cache.final_norm_out.row(pos);
                for (int o = 0; o < v; ++o) {
                    const double g = dl[o];
                    if (g != 0.0) axpy(g, fn, du + static_cast<std::size_t>(o) * d, d);
                }
            }
        }
        for (int pos = 0; pos < t_len; ++pos)
            rmsnorm_backward(cache.residual[c.n_layers].row(pos), cache.final_r[pos], p.final_gain(),
                             d_fn.row(pos), d_resid.row(pos),
                             param_grads ? param_grads->final_gain() : nullptr);
    }

    auto apply_seeds = [&](int layer, Mat& dr) {
        for (const auto& s : seeds) {
            if (s.layer != layer) continue;
            require(s.pos >= 0 && s.pos < t_len, "backward: seed position out of range");
            require(static_cast<int>(s.grad.size()) == d, "backward: seed dimension mismatch");
            axpy(1.0, s.grad.data(), dr.row(s.pos), d);
        }
    };
    apply_seeds(c.n_layers, d_resid);

    for (int b = c.n_layers - 1; b >= 0; --b) {
        const auto& bl = p.layout.blocks[b];
        const BlockCache& bc = cache.blocks[b];

        // MLP branch: out = mid + W2 * gelu(W1 * rmsnorm(mid))
        Mat d_mid = d_resid; // through the residual add
        {
            Mat d_n2(t_len, d);
            for (int pos = 0; pos < t_len; ++pos) {
                const double* d_out = d_resid.row(pos);
                // d_act = W2^T d_out
                Vec d_act(f, 0.0);
                detail::matvec_t_acc(p.block(bl.w2), d_out, d_act.data(), d, f);
                if (param_grads) {
                    double* dw2 = param_grads->block(bl.w2);
                    const double* act = bc.mlp_act.row(pos);
                    for (int o = 0; o < d; ++o) {
                        const double g = d_out[o];
                        if (g != 0.0) axpy(g, act, dw2 + static_cast<std::size_t>(o) * f, f);
                    }
                }
                const double* pre = bc.mlp_pre.row(pos);
                for (int i = 0; i < f; ++i) d_act[i] *= detail::gelu_grad(pre[i]);
                detail::matvec_t_acc(p.block(bl.w1), d_act.data(), d_n2.row(pos), f, d);
                if (param_grads) {
                    double* dw1 = param_grads->block(bl.w1);
                    const double* n2 = bc.norm2_out.row(pos);
                    for (int o = 0; o < f; ++o) {
                        const double g = d_act[o];
                        if (g != 0.0) axpy(g, n2, dw1 + static_cast<std::size_t>(o) * d, d);
                    }
                }
            }
            for (int pos = 0; pos < t_len; ++pos)
                rmsnorm_backward(bc.mid.row(pos), bc.norm2_r[pos], p.block(bl.mlp_gain),
                                 d_n2.row(pos), d_mid.row(pos),
                                 param_grads ? param_grads->block(bl.mlp_gain) : nullptr);
        }

        // attention branch: mid = x_in + Wo * ctx
        Mat d_x(t_len, d);
        {
            Mat d_ctx(t_len, d);
            for (int pos = 0; pos < t_len; ++pos) {
                const double* dm = d_mid.row(pos);
                detail::matvec_t_acc(p.block(bl.wo), dm, d_ctx.row(pos), d, d);
                if (param_grads) {
                    double* dwo = param_grads->block(bl.wo);
                    const double* ctx = bc.ctx.row(pos);
                    for (int o = 0; o < d; ++o) {
                        const double g = dm[o];
                        if (g != 0.0) axpy(g, ctx, dwo + static_cast<std::size_t>(o) * d, d);
                    }
                }
            }

            Mat d_q(t_len, d), d_k(t_len, d), d_v(t_len, d);
            for (int h = 0; h < nh; ++h) {
                const int o0 = h * dh;
                const Mat& a = bc.attn[h];
                for (int pos = 0; pos < t_len; ++pos) {
                    const double* dc = d_ctx.row(pos) + o0;
                    // d_alpha and softmax backprop within the causal row
                    double dot_a_da = 0.0;
                    Vec da(pos + 1);
                    for (int j = 0; j <= pos; ++j) {
                        da[j] = dot(dc, bc.v.row(j) + o0, dh);
                        dot_a_da += a.at(pos, j) * da[j];
                        axpy(a.at(pos, j), dc, d_v.row(j) + o0, dh);
                    }
                    for (int j = 0; j <= pos; ++j) {
                        const double ds = a.at(pos, j) * (da[j] - dot_a_da) * inv_sqrt_dh;
                        if (ds != 0.0) {
                            axpy(ds, bc.k.row(j) + o0, d_q.row(pos) + o0, dh);
                            axpy(ds, bc.q.row(pos) + o0, d_k.row(j) + o0, dh);
                        }
                    }
                }
            }

            Mat d_n1(t_len, d);
            for (int pos = 0; pos < t_len; ++pos) {
                detail::matvec_t_acc(p.block(bl.wq), d_q.row(pos), d_n1.row(pos), d, d);
                detail::matvec_t_acc(p.block(bl.wk), d_k.row(pos), d_n1.row(pos), d, d);
                detail::matvec_t_acc(p.block(bl.wv), d_v.row(pos), d_n1.row(pos), d, d);
                if (param_grads) {
                    const double* n1 = bc.norm1_out.row(pos);
                    double* dwq = param_grads->block(bl.wq);
                    double* dwk = param_grads->block(bl.wk);
                    double* dwv = param_grads->block(bl.wv);
                    const double* dq = d_q.row(pos);
                    const double* dk = d_k.row(pos);
                    const double* dv = d_v.row(pos);
                    for (int o = 0; o < d; ++o) {
                        if (dq[o] != 0.0) axpy(dq[o], n1, dwq + static_cast<std::size_t>(o) * d, d);
                        if (dk[o] != 0.0) axpy(dk[o], n1, dwk + static_cast<std::size_t>(o) * d, d);
                        if (dv[o] != 0.0) axpy(dv[o], n1, dwv + static_cast<std::size_t>(o) * d, d);
                    }
                }
            }
            d_x = d_mid; // through the residual add
            for (int pos = 0; pos < t_len; ++pos)
                rmsnorm_backward(cache.residual[b].row(pos), bc.norm1_r[pos], p.block(bl.attn_gain),
                                 d_n1.row(pos), d_x.row(pos),
                                 param_grads ? param_grads->block(bl.attn_gain) : nullptr);
        }

        apply_seeds(b, d_x);
        d_resid = std::move(d_x);
    }

    // embedding: e[pos] = sum_t X[pos][t] tok_embed[t] + pos_embed[pos]
    if (d_onehot) {
        *d_onehot = Mat(t_len, v);
        for (int pos = 0; pos < t_len; ++pos) {
            const double* de = d_resid.row(pos);
            double* row = d_onehot->row(pos);
            for (int tok = 0; tok < v; ++tok)
                row[tok] = dot(de, p.tok_embed() + static_cast<std::size_t>(tok) * d, d);
        }
    }
    if (param_grads) {
        for (int pos = 0; pos < t_len; ++pos) {
            const double* de = d_resid.row(pos);
            const double* xr = cache.x_onehot.row(pos);
            for (int tok = 0; tok < v; ++tok) {
                const double w = xr[tok];
                if (w != 0.0) axpy(w, de, param_grads->tok_embed() + static_cast<std::size_t>(tok) * d, d);
            }
            axpy(1.0, de, param_grads->pos_embed() + static_cast<std::size_t>(pos) * d, d);
        }
    }
}

// ----------------------------- losses -----------------------------

// mean NLL of `target` under teacher forcing; logits row (first_pred_row + k)
// predicts target[k]
inline double nll_from_logits(const Mat& logits, int first_pred_row, const std::vector<int>& target) {
    require(!target.empty(), "nll_from_logits: empty target");
    require(first_pred_row >= 0 &&
                first_pred_row + static_cast<int>(target.size()) <= static_cast<int>(logits.rows),
            "nll_from_logits: rows out of range");
    const int v = static_cast<int>(logits.cols);
    double total = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
        const double* row = logits.row(first_pred_row + k);
        require(target[k] >= 0 && target[k] < v, "nll_from_logits: target id out of range");
        double mx = row[0];
        for (int i = 1; i < v; ++i) mx = std::max(mx, row[i]);
        double z = 0.0;
        for (int i = 0; i < v; ++i) z += std::exp(row[i] - mx);
        total += -(row[target[k]] - mx - std::log(z));
    }
    return total / static_cast<double>(target.size());
}

// gradient of nll_from_logits w.r.t. logits: (softmax - onehot)/n on prediction rows
inline Mat dlogits_for_nll(const Mat& logits, int first_pred_row, const std::vector<int>& target) {
    Mat dl(logits.rows, logits.cols);
    const int v = static_cast<int>(logits.cols);
    const double inv_n = 1.0 / static_cast<double>(target.size());
    for (std::size_t k = 0; k < target.size(); ++k) {
        const int row_i = first_pred_row + static_cast<int>(k);
        const double* row = logits.row(row_i);
        double* out = dl.row(row_i);
        double mx = row[0];
        for (int i = 1; i < v; ++i) mx = std::max(mx, row[i]);
        double z = 0.0;
        for (int i = 0; i < v; ++i) z += std::exp(row[i] - mx);
        for (int i = 0; i < v; ++i) out[i] = std::exp(row[i] - mx) / z * inv_n;
        out[target[k]] -= inv_n;
    }
    return dl;
}

// mean negative log-likelihood of the target continuation appended after EOI
inline double target_loss(const Parameters& p, const TokenSequence& seq, const std::vector<int>& target) {
    seq.validate(p.config);
    require(!target.empty(), "target_loss: empty target");
    require(seq.eoi_index == seq.length() - 1, "target_loss: sequence must end at the response boundary");
    std::vector<int> full = seq.tokens;
    full.insert(full.end(), target.begin(), target.end());
    require(static_cast<int>(full.size()) <= p.config.max_seq_len, "target_loss: sequence too long");
    ForwardTrace tr = forward_trace_tokens(p, full);
    return nll_from_logits(tr.logits, seq.eoi_index, target);
}

// ----------------------------- attack objective -----------------------------

enum class RegKind { none, suffix_push, orthogonal_shift };

struct RegularizerSpec {
    RegKind kind = RegKind::none;
    double lambda = 0.0;

    void validate() const {
        require(lambda >= 0.0, "RegularizerSpec: lambda must be >= 0");
        if (kind == RegKind::none)
            require(lambda == 0.0, "RegularizerSpec: kind=none requires lambda=0");
    }
};

inline const char* reg_kind_name(RegKind k) {
    switch (k) {
        case RegKind::none: return "none";
        case RegKind::suffix_push: return "suffix_push";
        case RegKind::orthogonal_shift: return "orthogonal_shift";
    }
    return "none";
}

// Target NLL plus an activation-space reward evaluated at the
// end-of-instruction residual of a chosen layer:
//   suffix_push:       loss - lambda * (<a_base, v> - <a_sfx, v>)
//   orthogonal_shift:  loss - lambda * ||perp(a_sfx) - perp(a_base)||
struct ActivationObjective {
    RegularizerSpec reg;
    int layer = -1;
    Vec direction;
    Vec base_activation;

    void validate(const ModelConfig& c) const {
        reg.validate();
        if (reg.kind == RegKind::none) return;
        require(layer >= 0 && layer <= c.n_layers, "ActivationObjective: layer out of range");
        require(static_cast<int>(direction.size()) == c.d_model, "ActivationObjective: direction dimension mismatch");
        require(static_cast<int>(base_activation.size()) == c.d_model, "ActivationObjective: base activation dimension mismatch");
        require(norm2(direction) > 0.0, "ActivationObjective: zero direction");
    }
};

// loss - lambda * reward; reward is the push for suffix_push, the
// orthogonal movement for orthogonal_shift
inline double combine_objective(double loss, double push, double orth, const RegularizerSpec& reg) {
    switch (reg.kind) {
        case RegKind::none: return loss;
        case RegKind::suffix_push: return loss - reg.lambda * push;
        case RegKind::orthogonal_shift: return loss - reg.lambda * orth;
    }
    return loss;
}

inline double objective_from_trace(const ForwardTrace& tr, int eoi_index,
                                   const std::vector<int>& target, const ActivationObjective& obj) {
    const double loss = nll_from_logits(tr.logits, eoi_index, target);
    if (obj.reg.kind == RegKind::none) return loss;
    const double* a = tr.residual[obj.layer].row(eoi_index);
    Vec a_sfx(a, a + obj.direction.size());
    const double push = dot(obj.base_activation, obj.direction) - dot(a_sfx, obj.direction);
    const double orth = norm2(orthogonal_component(sub(a_sfx, obj.base_activation), obj.direction));
    return combine_objective(loss, push, orth, obj.reg);
}

// objective evaluated on `seq` (suffix included, ends at EOI) + target
inline double attack_objective(const Parameters& p, const TokenSequence& seq,
                               const std::vector<int>& target, const ActivationObjective& obj) {
    seq.validate(p.config);
    obj.validate(p.config);
    require(seq.eoi_index == seq.length() - 1, "attack_objective: sequence must end at the response boundary");
    std::vector<int> full = seq.tokens;
    full.insert(full.end(), target.begin(), target.end());
    require(static_cast<int>(full.size()) <= p.config.max_seq_len, "attack_objective: sequence too long");
    ForwardTrace tr = forward_trace_tokens(p, full);
    return objective_from_trace(tr, seq.eoi_index, target, obj);
}

struct GradientReport {
    Mat d_onehot; // [suffix_len x vocab]
};

// Analytic gradient of the attack objective w.r.t. the one-hot encoding of
// the suffix tokens at positions [suffix_begin, suffix_begin + suffix_len).
inline GradientReport input_gradient(const Parameters& p, const TokenSequence& seq,
                                     int suffix_begin, int suffix_len,
                                     const std::vector<int>& target, const ActivationObjective& obj) {
    seq.validate(p.config);
    obj.validate(p.config);
    require(!target.empty(), "input_gradient: empty target");
    require(seq.eoi_index == seq.length() - 1, "input_gradient: sequence must end at the response boundary");
    require(suffix_len >= 1 && suffix_begin >= 0 && suffix_begin + suffix_len <= seq.eoi_index,
            "input_gradient: suffix span out of range");

    std::vector<int> full = seq.tokens;
    full.insert(full.end(), target.begin(), target.end());
    require(static_cast<int>(full.size()) <= p.config.max_seq_len, "input_gradient: sequence too long");

    ForwardCache cache = forward_cached(p, onehot_rows(full, p.config.vocab_size));
    Mat d_logits = dlogits_for_nll(cache.logits, seq.eoi_index, target);

    std::vector<ResidualGradSeed> seeds;
    if (obj.reg.kind == RegKind::suffix_push) {
        // d/d a_sfx of (-lambda * (<a_base,v> - <a_sfx,v>)) = +lambda * v
        seeds.push_back({obj.layer, seq.eoi_index, scaled(obj.direction, obj.reg.lambda)});
    } else if (obj.reg.kind == RegKind::orthogonal_shift) {
        const double* a = cache.residual[obj.layer].row(seq.eoi_index);
        Vec a_sfx(a, a + obj.direction.size());
        Vec perp = orthogonal_component(sub(a_sfx, obj.base_activation), obj.direction);
        const double n = norm2(perp);
        if (n > 1e-12)
            seeds.push_back({obj.layer, seq.eoi_index, scaled(perp, -obj.reg.lambda / n)});
    }

    Mat d_onehot;
    backward(p, cache, d_logits, seeds, nullptr, &d_onehot);

    GradientReport rep;
    rep.d_onehot = Mat(suffix_len, p.config.vocab_size);
    for (int i = 0; i < suffix_len; ++i)
        for (int t = 0; t < p.config.vocab_size; ++t)
            rep.d_onehot.at(i, t) = d_onehot.at(suffix_begin + i, t);
    for (double g : rep.d_onehot.data)
        if (!std::isfinite(g)) throw numeric_error("input_gradient: non-finite gradient entry");
    return rep;
}

// ----------------------------- decoding -----------------------------

// Greedy continuation of a prompt that ends at EOI. Ties pick the lowest id.
inline std::vector<int> greedy_decode(const Parameters& p, const TokenSequence& prompt,
                                      int n_tokens, const ResidualEdit& edit = {}) {
    prompt.validate(p.config);
    require(n_tokens >= 1, "greedy_decode: n_tokens must be >= 1");
    require(prompt.length() + n_tokens <= p.config.max_seq_len, "greedy_decode: decode exceeds max_seq_len");
    std::vector<int> tokens = prompt.tokens;
    std::vector<int> response;
    TraceOptions opt;
    opt.edit = edit;
    for (int step = 0; step < n_tokens; ++step) {
        ForwardTrace tr = detail::run_forward(p, onehot_rows(tokens, p.config.vocab_size), opt, nullptr);
        const double* row = tr.logits.row(tokens.size() - 1);
        int best = 0;
        for (int t = 1; t < p.config.vocab_size; ++t)
            if (row[t] > row[best]) best = t;
        response.push_back(best);
        tokens.push_back(best);
    }
    return response;
}

} // namespace suffixlab
