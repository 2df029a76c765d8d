#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "inflab/errors.hpp"
#include "inflab/rng.hpp"

// Character-level encoder-decoder transformer. Pre-layer-norm residual
// blocks, sinusoidal positional encodings, multi-head attention, ReLU
// feed-forward. Parameters live in one flat double buffer so the optimizer,
// checkpointing and finite-difference checks can treat the model as a plain
// parameter vector; Eigen maps provide the structured views.

namespace inflab {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

struct ModelConfig {
    int layers_enc = 4;
    int layers_dec = 4;
    int d_model = 256;
    int d_ff = 1024;
    int heads = 4;
    double dropout = 0.1;
    int max_len = 128;
    int vocab_size = 0;
    double label_smoothing = 0.1;

    void validate() const {
        if (layers_enc < 1 || layers_dec < 1 || d_model < 1 || d_ff < 1 || heads < 1 ||
            max_len < 1 || vocab_size < 1)
            throw ConfigError("all model dimensions must be >= 1");
        if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
        if (label_smoothing < 0.0 || label_smoothing >= 1.0)
            throw ConfigError("label_smoothing must be in [0, 1)");
    }
};

namespace detail {

enum class ParamKind { Weight, Bias, Gamma, Embedding };

struct TensorSpec {
    std::string name;
    std::size_t offset;
    int rows, cols;
    ParamKind kind;
};

struct AttnOff {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
};
struct LnOff {
    std::size_t g, b;
};
struct FfOff {
    std::size_t w1, b1, w2, b2;
};
struct EncLayerOff {
    LnOff ln1;
    AttnOff attn;
    LnOff ln2;
    FfOff ff;
};
struct DecLayerOff {
    LnOff ln1;
    AttnOff self_attn;
    LnOff ln2;
    AttnOff cross_attn;
    LnOff ln3;
    FfOff ff;
};

struct Layout {
    std::size_t src_embed = 0, tgt_embed = 0;
    std::vector<EncLayerOff> enc;
    std::vector<DecLayerOff> dec;
    LnOff enc_ln{}, dec_ln{};
    std::size_t out_w = 0, out_b = 0;
    std::size_t total = 0;
    std::vector<TensorSpec> tensors;

    static Layout build(const ModelConfig& cfg) {
        Layout lay;
        const int d = cfg.d_model;
        const int ff = cfg.d_ff;
        const int v = cfg.vocab_size;
        auto reg = [&](const std::string& name, int rows, int cols, ParamKind kind) {
            const std::size_t off = lay.total;
            lay.tensors.push_back({name, off, rows, cols, kind});
            lay.total += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
            return off;
        };
        auto reg_ln = [&](const std::string& p) {
            return LnOff{reg(p + ".g", 1, d, ParamKind::Gamma), reg(p + ".b", 1, d, ParamKind::Bias)};
        };
        auto reg_attn = [&](const std::string& p) {
            AttnOff a;
            a.wq = reg(p + ".wq", d, d, ParamKind::Weight);
            a.bq = reg(p + ".bq", 1, d, ParamKind::Bias);
            a.wk = reg(p + ".wk", d, d, ParamKind::Weight);
            a.bk = reg(p + ".bk", 1, d, ParamKind::Bias);
            a.wv = reg(p + ".wv", d, d, ParamKind::Weight);
            a.bv = reg(p + ".bv", 1, d, ParamKind::Bias);
            a.wo = reg(p + ".wo", d, d, ParamKind::Weight);
            a.bo = reg(p + ".bo", 1, d, ParamKind::Bias);
            return a;
        };
        auto reg_ff = [&](const std::string& p) {
            FfOff f;
            f.w1 = reg(p + ".w1", d, ff, ParamKind::Weight);
            f.b1 = reg(p + ".b1", 1, ff, ParamKind::Bias);
            f.w2 = reg(p + ".w2", ff, d, ParamKind::Weight);
            f.b2 = reg(p + ".b2", 1, d, ParamKind::Bias);
            return f;
        };

        lay.src_embed = reg("src_embed", v, d, ParamKind::Embedding);
        lay.tgt_embed = reg("tgt_embed", v, d, ParamKind::Embedding);
        for (int l = 0; l < cfg.layers_enc; ++l) {
            const std::string p = "enc." + std::to_string(l);
            EncLayerOff e;
            e.ln1 = reg_ln(p + ".ln1");
            e.attn = reg_attn(p + ".attn");
            e.ln2 = reg_ln(p + ".ln2");
            e.ff = reg_ff(p + ".ff");
            lay.enc.push_back(e);
        }
        for (int l = 0; l < cfg.layers_dec; ++l) {
            const std::string p = "dec." + std::to_string(l);
            DecLayerOff dl;
            dl.ln1 = reg_ln(p + ".ln1");
            dl.self_attn = reg_attn(p + ".self");
            dl.ln2 = reg_ln(p + ".ln2");
            dl.cross_attn = reg_attn(p + ".cross");
            dl.ln3 = reg_ln(p + ".ln3");
            dl.ff = reg_ff(p + ".ff");
            lay.dec.push_back(dl);
        }
        lay.enc_ln = reg_ln("enc_ln");
        lay.dec_ln = reg_ln("dec_ln");
        lay.out_w = reg("out.w", d, v, ParamKind::Weight);
        lay.out_b = reg("out.b", 1, v, ParamKind::Bias);
        return lay;
    }
};

}  // namespace detail

class Model {
public:
    explicit Model(ModelConfig cfg) : cfg_(cfg), layout_(detail::Layout::build((cfg.validate(), cfg))) {
        params_.assign(layout_.total, 0.0);
        build_positional_encoding();
    }

    const ModelConfig& config() const { return cfg_; }
    const detail::Layout& layout() const { return layout_; }
    std::size_t parameter_count() const { return layout_.total; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    const Mat& positional_encoding() const { return pos_enc_; }

    ConstMatMap view(std::size_t offset, int rows, int cols) const {
        return ConstMatMap(params_.data() + offset, rows, cols);
    }

private:
    void build_positional_encoding() {
        const int d = cfg_.d_model;
        pos_enc_.resize(cfg_.max_len, d);
        for (int pos = 0; pos < cfg_.max_len; ++pos) {
            for (int i = 0; i < d; i += 2) {
                const double angle = pos * std::exp(-std::log(10000.0) * i / d);
                pos_enc_(pos, i) = std::sin(angle);
                if (i + 1 < d) pos_enc_(pos, i + 1) = std::cos(angle);
            }
        }
    }

    ModelConfig cfg_;
    detail::Layout layout_;
    std::vector<double> params_;
    Mat pos_enc_;
};

// Scaled-uniform initialization, deterministic in the rng. Weights use the
// symmetric fan-based limit, embeddings use 1/sqrt(d) variance (they are
// rescaled by sqrt(d) at lookup), layer-norm gains start at one.
inline Model init_model(const ModelConfig& cfg, Rng& rng) {
    Model model(cfg);
    auto& p = model.params();
    for (const auto& t : model.layout().tensors) {
        const std::size_t n = static_cast<std::size_t>(t.rows) * t.cols;
        double limit = 0.0;
        switch (t.kind) {
            case detail::ParamKind::Weight:
                limit = std::sqrt(6.0 / (t.rows + t.cols));
                break;
            case detail::ParamKind::Embedding:
                limit = std::sqrt(3.0 / cfg.d_model);
                break;
            case detail::ParamKind::Bias:
            case detail::ParamKind::Gamma:
                limit = 0.0;
                break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            double value = limit == 0.0 ? 0.0 : (2.0 * rng.real() - 1.0) * limit;
            if (t.kind == detail::ParamKind::Gamma) value = 1.0;
            p[t.offset + i] = value;
        }
    }
    return model;
}

namespace detail {

struct LnCache {
    Mat xhat;
    Eigen::VectorXd inv_std;
};

struct AttnCache {
    Mat q_in, kv_in;         // sublayer inputs (post layer-norm)
    Mat q, k, v;             // projected
    std::vector<Mat> probs;  // per-head softmax rows
    Mat ctx;
};

struct FfCache {
    Mat x, h;  // input and post-relu hidden
};

struct DropCache {
    Mat mask;  // already scaled by 1/(1-p)
    bool active = false;
};

struct SublayerCache {
    LnCache ln;
    AttnCache attn;
    FfCache ff;
    DropCache drop;
};

struct SeqCache {
    std::vector<int> src, tgt_in;
    DropCache enc_drop0, dec_drop0;
    std::vector<SublayerCache> enc_sub, dec_sub;
    LnCache enc_ln, dec_ln;
    Mat enc_out, dec_out;
    Mat logits;
};

constexpr double kLnEps = 1e-5;
constexpr double kMaskValue = -1e30;

class Runner {
public:
    Runner(const Model& model, bool training, double dropout, Rng* rng)
        : m_(model), lay_(model.layout()), cfg_(model.config()),
          dropout_(training ? dropout : 0.0), rng_(rng) {}

    ConstMatMap W(std::size_t off, int r, int c) const { return m_.view(off, r, c); }
    ConstMatMap row(std::size_t off, int c) const { return m_.view(off, 1, c); }

    Mat embed(std::size_t emb_off, const std::vector<int>& ids) const {
        const int d = cfg_.d_model;
        if (static_cast<int>(ids.size()) > cfg_.max_len)
            throw TruncationError("sequence length " + std::to_string(ids.size()) +
                                  " exceeds max_len " + std::to_string(cfg_.max_len));
        Mat x(ids.size(), d);
        const auto emb = W(emb_off, cfg_.vocab_size, d);
        const double scale = std::sqrt(static_cast<double>(d));
        for (std::size_t t = 0; t < ids.size(); ++t) {
            if (ids[t] < 0 || ids[t] >= cfg_.vocab_size)
                throw ConfigError("token id out of vocabulary range");
            x.row(t) = emb.row(ids[t]) * scale + m_.positional_encoding().row(t);
        }
        return x;
    }

    Mat dropout_fwd(Mat x, DropCache& c) {
        if (dropout_ <= 0.0 || rng_ == nullptr) {
            c.active = false;
            return x;
        }
        c.active = true;
        c.mask.resize(x.rows(), x.cols());
        const double keep = 1.0 - dropout_;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < x.cols(); ++j)
                c.mask(i, j) = rng_->real() < dropout_ ? 0.0 : 1.0 / keep;
        return x.cwiseProduct(c.mask);
    }

    static Mat dropout_bwd(const Mat& dy, const DropCache& c) {
        return c.active ? dy.cwiseProduct(c.mask).eval() : dy;
    }

    Mat layer_norm_fwd(const LnOff& off, const Mat& x, LnCache& c) const {
        const int d = cfg_.d_model;
        const auto g = row(off.g, d);
        const auto b = row(off.b, d);
        c.xhat.resize(x.rows(), d);
        c.inv_std.resize(x.rows());
        Mat y(x.rows(), d);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const double mu = x.row(r).mean();
            const double var = (x.row(r).array() - mu).square().mean();
            const double inv = 1.0 / std::sqrt(var + kLnEps);
            c.inv_std(r) = inv;
            c.xhat.row(r) = ((x.row(r).array() - mu) * inv).matrix();
            y.row(r) = c.xhat.row(r).cwiseProduct(g.row(0)) + b.row(0);
        }
        return y;
    }

    Mat layer_norm_bwd(const LnOff& off, const Mat& dy, const LnCache& c,
                       std::vector<double>& grad) const {
        const int d = cfg_.d_model;
        const auto g = row(off.g, d);
        MatMap dg(grad.data() + off.g, 1, d);
        MatMap db(grad.data() + off.b, 1, d);
        Mat dx(dy.rows(), d);
        for (Eigen::Index r = 0; r < dy.rows(); ++r) {
            dg.row(0) += dy.row(r).cwiseProduct(c.xhat.row(r));
            db.row(0) += dy.row(r);
            const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(g.row(0));
            const double m1 = dxhat.mean();
            const double m2 = dxhat.cwiseProduct(c.xhat.row(r)).mean();
            dx.row(r) =
                ((dxhat.array() - m1 - c.xhat.row(r).array() * m2) * c.inv_std(r)).matrix();
        }
        return dx;
    }

    // Multi-head scaled dot-product attention. kv_in == q_in for self
    // attention; causal restricts each query row to keys at or before it.
    Mat attention_fwd(const AttnOff& off, const Mat& q_in, const Mat& kv_in, bool causal,
                      AttnCache& c) const {
        const int d = cfg_.d_model;
        const int h = cfg_.heads;
        const int dk = d / h;
        c.q_in = q_in;
        c.kv_in = kv_in;
        c.q = (q_in * W(off.wq, d, d)).rowwise() + row(off.bq, d).row(0);
        c.k = (kv_in * W(off.wk, d, d)).rowwise() + row(off.bk, d).row(0);
        c.v = (kv_in * W(off.wv, d, d)).rowwise() + row(off.bv, d).row(0);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

        c.ctx.resize(q_in.rows(), d);
        c.probs.assign(h, Mat());
        for (int head = 0; head < h; ++head) {
            const auto qh = c.q.middleCols(head * dk, dk);
            const auto kh = c.k.middleCols(head * dk, dk);
            const auto vh = c.v.middleCols(head * dk, dk);
            Mat scores = qh * kh.transpose() * scale;
            if (causal)
                for (Eigen::Index i = 0; i < scores.rows(); ++i)
                    for (Eigen::Index j = i + 1; j < scores.cols(); ++j) scores(i, j) = kMaskValue;
            Mat& p = c.probs[head];
            p.resize(scores.rows(), scores.cols());
            for (Eigen::Index i = 0; i < scores.rows(); ++i) {
                const double mx = scores.row(i).maxCoeff();
                p.row(i) = (scores.row(i).array() - mx).exp().matrix();
                p.row(i) /= p.row(i).sum();
            }
            c.ctx.middleCols(head * dk, dk) = p * vh;
        }
        return (c.ctx * W(off.wo, d, d)).rowwise() + row(off.bo, d).row(0);
    }

    // Returns dq_in; dkv_in is accumulated into the supplied matrix because
    // self attention feeds both from the same input.
    Mat attention_bwd(const AttnOff& off, const Mat& dout, const AttnCache& c, Mat& dkv_in,
                      std::vector<double>& grad) const {
        const int d = cfg_.d_model;
        const int h = cfg_.heads;
        const int dk = d / h;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

        MatMap dwo(grad.data() + off.wo, d, d);
        MatMap dbo(grad.data() + off.bo, 1, d);
        dwo += c.ctx.transpose() * dout;
        dbo.row(0) += dout.colwise().sum();
        const Mat dctx = dout * W(off.wo, d, d).transpose();

        Mat dq(c.q.rows(), d), dkm(c.k.rows(), d), dvm(c.v.rows(), d);
        for (int head = 0; head < h; ++head) {
            const auto ph = c.probs[head];
            const auto qh = c.q.middleCols(head * dk, dk);
            const auto kh = c.k.middleCols(head * dk, dk);
            const auto vh = c.v.middleCols(head * dk, dk);
            const auto dch = dctx.middleCols(head * dk, dk);
            const Mat dp = dch * vh.transpose();
            dvm.middleCols(head * dk, dk) = ph.transpose() * dch;
            // softmax backward row-wise; masked cells have p == 0 and vanish
            Mat ds(dp.rows(), dp.cols());
            for (Eigen::Index i = 0; i < dp.rows(); ++i) {
                const double dot = dp.row(i).cwiseProduct(ph.row(i)).sum();
                ds.row(i) = (ph.row(i).array() * (dp.row(i).array() - dot)).matrix();
            }
            ds *= scale;
            dq.middleCols(head * dk, dk) = ds * kh;
            dkm.middleCols(head * dk, dk) = ds.transpose() * qh;
        }

        MatMap dwq(grad.data() + off.wq, d, d);
        MatMap dbq(grad.data() + off.bq, 1, d);
        MatMap dwk(grad.data() + off.wk, d, d);
        MatMap dbk(grad.data() + off.bk, 1, d);
        MatMap dwv(grad.data() + off.wv, d, d);
        MatMap dbv(grad.data() + off.bv, 1, d);
        dwq += c.q_in.transpose() * dq;
        dbq.row(0) += dq.colwise().sum();
        dwk += c.kv_in.transpose() * dkm;
        dbk.row(0) += dkm.colwise().sum();
        dwv += c.kv_in.transpose() * dvm;
        dbv.row(0) += dvm.colwise().sum();

        dkv_in += dkm * W(off.wk, d, d).transpose();
        dkv_in += dvm * W(off.wv, d, d).transpose();
        return dq * W(off.wq, d, d).transpose();
    }

    Mat ff_fwd(const FfOff& off, const Mat& x, FfCache& c) const {
        const int d = cfg_.d_model;
        const int f = cfg_.d_ff;
        c.x = x;
        c.h = ((x * W(off.w1, d, f)).rowwise() + row(off.b1, f).row(0)).cwiseMax(0.0);
        return (c.h * W(off.w2, f, d)).rowwise() + row(off.b2, d).row(0);
    }

    Mat ff_bwd(const FfOff& off, const Mat& dy, const FfCache& c, std::vector<double>& grad) const {
        const int d = cfg_.d_model;
        const int f = cfg_.d_ff;
        MatMap dw2(grad.data() + off.w2, f, d);
        MatMap db2(grad.data() + off.b2, 1, d);
        dw2 += c.h.transpose() * dy;
        db2.row(0) += dy.colwise().sum();
        Mat dh = dy * W(off.w2, f, d).transpose();
        dh = dh.cwiseProduct((c.h.array() > 0.0).cast<double>().matrix());
        MatMap dw1(grad.data() + off.w1, d, f);
        MatMap db1(grad.data() + off.b1, 1, f);
        dw1 += c.x.transpose() * dh;
        db1.row(0) += dh.colwise().sum();
        return dh * W(off.w1, d, f).transpose();
    }

    Mat encode(const std::vector<int>& src, SeqCache& sc) {
        sc.src = src;
        Mat x = dropout_fwd(embed(lay_.src_embed, src), sc.enc_drop0);
        sc.enc_sub.assign(lay_.enc.size() * 2, {});
        for (std::size_t l = 0; l < lay_.enc.size(); ++l) {
            const auto& off = lay_.enc[l];
            auto& attn_sub = sc.enc_sub[2 * l];
            Mat a_in = layer_norm_fwd(off.ln1, x, attn_sub.ln);
            Mat sa = attention_fwd(off.attn, a_in, a_in, false, attn_sub.attn);
            x += dropout_fwd(std::move(sa), attn_sub.drop);

            auto& ff_sub = sc.enc_sub[2 * l + 1];
            Mat f_in = layer_norm_fwd(off.ln2, x, ff_sub.ln);
            Mat fo = ff_fwd(off.ff, f_in, ff_sub.ff);
            x += dropout_fwd(std::move(fo), ff_sub.drop);
        }
        sc.enc_out = layer_norm_fwd(lay_.enc_ln, x, sc.enc_ln);
        return sc.enc_out;
    }

    Mat decode(const std::vector<int>& tgt_in, const Mat& enc_out, SeqCache& sc) {
        sc.tgt_in = tgt_in;
        Mat y = dropout_fwd(embed(lay_.tgt_embed, tgt_in), sc.dec_drop0);
        sc.dec_sub.assign(lay_.dec.size() * 3, {});
        for (std::size_t l = 0; l < lay_.dec.size(); ++l) {
            const auto& off = lay_.dec[l];
            auto& self_sub = sc.dec_sub[3 * l];
            Mat a_in = layer_norm_fwd(off.ln1, y, self_sub.ln);
            Mat sa = attention_fwd(off.self_attn, a_in, a_in, true, self_sub.attn);
            y += dropout_fwd(std::move(sa), self_sub.drop);

            auto& cross_sub = sc.dec_sub[3 * l + 1];
            Mat c_in = layer_norm_fwd(off.ln2, y, cross_sub.ln);
            Mat ca = attention_fwd(off.cross_attn, c_in, enc_out, false, cross_sub.attn);
            y += dropout_fwd(std::move(ca), cross_sub.drop);

            auto& ff_sub = sc.dec_sub[3 * l + 2];
            Mat f_in = layer_norm_fwd(off.ln3, y, ff_sub.ln);
            Mat fo = ff_fwd(off.ff, f_in, ff_sub.ff);
            y += dropout_fwd(std::move(fo), ff_sub.drop);
        }
        sc.dec_out = layer_norm_fwd(lay_.dec_ln, y, sc.dec_ln);
        const int d = cfg_.d_model;
        sc.logits = (sc.dec_out * W(lay_.out_w, d, cfg_.vocab_size)).rowwise() +
                    row(lay_.out_b, cfg_.vocab_size).row(0);
        return sc.logits;
    }

    // Backward through the whole network given dlogits; accumulates grad.
    void backward(const Mat& dlogits, SeqCache& sc, std::vector<double>& grad) {
        const int d = cfg_.d_model;
        const int v = cfg_.vocab_size;
        MatMap dout_w(grad.data() + lay_.out_w, d, v);
        MatMap dout_b(grad.data() + lay_.out_b, 1, v);
        dout_w += sc.dec_out.transpose() * dlogits;
        dout_b.row(0) += dlogits.colwise().sum();
        Mat dy = dlogits * W(lay_.out_w, d, v).transpose();
        dy = layer_norm_bwd(lay_.dec_ln, dy, sc.dec_ln, grad);

        Mat denc(sc.enc_out.rows(), d);
        denc.setZero();
        for (int l = static_cast<int>(lay_.dec.size()) - 1; l >= 0; --l) {
            const auto& off = lay_.dec[l];
            {
                auto& ff_sub = sc.dec_sub[3 * l + 2];
                Mat dsub = dropout_bwd(dy, ff_sub.drop);
                Mat df_in = ff_bwd(off.ff, dsub, ff_sub.ff, grad);
                dy += layer_norm_bwd(off.ln3, df_in, ff_sub.ln, grad);
            }
            {
                auto& cross_sub = sc.dec_sub[3 * l + 1];
                Mat dsub = dropout_bwd(dy, cross_sub.drop);
                Mat dc_in = attention_bwd(off.cross_attn, dsub, cross_sub.attn, denc, grad);
                dy += layer_norm_bwd(off.ln2, dc_in, cross_sub.ln, grad);
            }
            {
                auto& self_sub = sc.dec_sub[3 * l];
                Mat dsub = dropout_bwd(dy, self_sub.drop);
                Mat dkv(dy.rows(), d);
                dkv.setZero();
                Mat da_in = attention_bwd(off.self_attn, dsub, self_sub.attn, dkv, grad);
                da_in += dkv;
                dy += layer_norm_bwd(off.ln1, da_in, self_sub.ln, grad);
            }
        }
        embed_bwd(lay_.tgt_embed, sc.tgt_in, dropout_bwd(dy, sc.dec_drop0), grad);

        Mat dx = layer_norm_bwd(lay_.enc_ln, denc, sc.enc_ln, grad);
        for (int l = static_cast<int>(lay_.enc.size()) - 1; l >= 0; --l) {
            const auto& off = lay_.enc[l];
            {
                auto& ff_sub = sc.enc_sub[2 * l + 1];
                Mat dsub = dropout_bwd(dx, ff_sub.drop);
                Mat df_in = ff_bwd(off.ff, dsub, ff_sub.ff, grad);
                dx += layer_norm_bwd(off.ln2, df_in, ff_sub.ln, grad);
            }
            {
                auto& attn_sub = sc.enc_sub[2 * l];
                Mat dsub = dropout_bwd(dx, attn_sub.drop);
                Mat dkv(dx.rows(), d);
                dkv.setZero();
                Mat da_in = attention_bwd(off.attn, dsub, attn_sub.attn, dkv, grad);
                da_in += dkv;
                dx += layer_norm_bwd(off.ln1, da_in, attn_sub.ln, grad);
            }
        }
        embed_bwd(lay_.src_embed, sc.src, dropout_bwd(dx, sc.enc_drop0), grad);
    }

private:
    void embed_bwd(std::size_t emb_off, const std::vector<int>& ids, const Mat& dx,
                   std::vector<double>& grad) const {
        MatMap demb(grad.data() + emb_off, cfg_.vocab_size, cfg_.d_model);
        const double scale = std::sqrt(static_cast<double>(cfg_.d_model));
        for (std::size_t t = 0; t < ids.size(); ++t) demb.row(ids[t]) += dx.row(t) * scale;
    }

    const Model& m_;
    const Layout& lay_;
    const ModelConfig& cfg_;
    double dropout_;
    Rng* rng_;
};

}  // namespace detail

// Smoothed cross-entropy of one logit row; returns the row loss and, when
// dlogits is non-null, writes the gradient of the summed loss.
inline double smoothed_ce_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits, int gold,
                              double smoothing, Eigen::RowVectorXd* dlogits = nullptr) {
    const int v = static_cast<int>(logits.size());
    const double mx = logits.maxCoeff();
    const Eigen::RowVectorXd shifted = (logits.array() - mx).matrix();
    const double lse = std::log(shifted.array().exp().sum());
    const Eigen::RowVectorXd logp = (shifted.array() - lse).matrix();
    const double nll_gold = -logp(gold);
    const double nll_mean = -logp.mean();
    const double loss = (1.0 - smoothing) * nll_gold + smoothing * nll_mean;
    if (dlogits) {
        *dlogits = logp.array().exp();
        dlogits->array() -= smoothing / v;
        (*dlogits)(gold) -= 1.0 - smoothing;
    }
    return loss;
}

// Mean smoothed cross-entropy over non-PAD positions.
inline double loss(const Mat& logits, const std::vector<int>& gold, double smoothing,
                   int pad_id = -1) {
    if (static_cast<std::size_t>(logits.rows()) != gold.size())
        throw ConfigError("logits/gold length mismatch");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < gold.size(); ++t) {
        if (gold[t] == pad_id) continue;
        total += smoothed_ce_row(logits.row(static_cast<Eigen::Index>(t)), gold[t], smoothing);
        ++count;
    }
    if (count == 0) return 0.0;
    return total / static_cast<double>(count);
}

// Inference-mode forward: one logit row per target-prefix position.
inline Mat forward(const Model& model, const std::vector<int>& source,
                   const std::vector<int>& target_prefix) {
    detail::Runner runner(model, /*training=*/false, 0.0, nullptr);
    detail::SeqCache sc;
    const Mat enc_out = runner.encode(source, sc);
    return runner.decode(target_prefix, enc_out, sc);
}

struct ForwardBackwardResult {
    double loss_sum = 0.0;   // summed token loss (not normalized)
    std::size_t tokens = 0;  // gold positions contributing
};

// Training-mode forward + backward for one sequence pair. `target` carries
// BOS ... EOS; the decoder consumes target[0..n-1) and is scored against
// target[1..n). Gradients of the summed token loss accumulate into `grad`.
inline ForwardBackwardResult forward_backward(const Model& model, const std::vector<int>& source,
                                              const std::vector<int>& target, double smoothing,
                                              std::vector<double>& grad, Rng* dropout_rng) {
    if (target.size() < 2) throw ConfigError("target must hold at least BOS and EOS");
    detail::Runner runner(model, /*training=*/true, model.config().dropout, dropout_rng);
    detail::SeqCache sc;
    const std::vector<int> tgt_in(target.begin(), target.end() - 1);
    const std::vector<int> gold(target.begin() + 1, target.end());
    const Mat enc_out = runner.encode(source, sc);
    const Mat logits = runner.decode(tgt_in, enc_out, sc);

    ForwardBackwardResult res;
    Mat dlogits(logits.rows(), logits.cols());
    Eigen::RowVectorXd drow;
    for (std::size_t t = 0; t < gold.size(); ++t) {
        res.loss_sum += smoothed_ce_row(logits.row(static_cast<Eigen::Index>(t)), gold[t],
                                        smoothing, &drow);
        dlogits.row(static_cast<Eigen::Index>(t)) = drow;
        ++res.tokens;
    }
    runner.backward(dlogits, sc, grad);
    return res;
}

// Encoder output for incremental decoding.
inline Mat encode_source(const Model& model, const std::vector<int>& source) {
    detail::Runner runner(model, false, 0.0, nullptr);
    detail::SeqCache sc;
    return runner.encode(source, sc);
}

// One decoder pass over a prefix against a fixed encoder output; returns
// logits for every prefix position.
inline Mat decode_prefix(const Model& model, const std::vector<int>& target_prefix,
                         const Mat& enc_out) {
    detail::Runner runner(model, false, 0.0, nullptr);
    detail::SeqCache sc;
    return runner.decode(target_prefix, enc_out, sc);
}

}  // namespace inflab
