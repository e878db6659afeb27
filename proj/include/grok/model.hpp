// Single-layer causal Transformer over the three-token context (a, op, b):
// no biases, no positional embedding, no layer norm, ReLU MLP.
//
//   x0_i   = W_E t_i                                  i = 0, 1, 2
//   A^j    = softmax_i( (W_K^j x0_i) . (W_Q^j x0_2) * s ),  s = 1/sqrt(d_head) or 1
//   x1     = x0_2 + sum_j W_O^j W_V^j sum_i A^j_i x0_i
//   mlp    = ReLU(W_in x1)
//   x2     = W_out mlp + x1
//   logits = W_U x2
//
// Batches are laid out column-wise: column n of every activation belongs to
// example n. All arithmetic is double precision and single-threaded, so a
// forward or backward pass is bit-reproducible for a fixed build.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "grok/dataset.hpp"
#include "grok/rng.hpp"

namespace grok {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class TokenOutOfRange : public std::out_of_range {
    using std::out_of_range::out_of_range;
};
class NaNGuard : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class DimMismatch : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelDims {
    int p = 97;
    int n_op = 1;
    int d_emb = 128;
    int d_mlp = 512;
    int n_heads = 4;
    int d_head = 32;
    static constexpr int context = 3;
    // Architecture switches that change the function computed or the init.
    bool scale_attention = true;
    bool fan_in_init = false;

    int vocab() const { return p + n_op; }

    void validate() const {
        if (p < 3 || n_op < 1 || d_emb < 1 || d_mlp < 1 || n_heads < 1 || d_head < 1)
            throw std::invalid_argument("model dimensions must be positive");
        if (n_heads * d_head != d_emb) throw std::invalid_argument("n_heads * d_head must equal d_emb");
    }

    bool same_shapes(const ModelDims& o) const {
        return p == o.p && n_op == o.n_op && d_emb == o.d_emb && d_mlp == o.d_mlp && n_heads == o.n_heads &&
               d_head == o.d_head;
    }
};

enum class FreezeMode { None, EmbeddingFrozen, BodyFrozen, RandomEmbeddingFrozen };

inline std::string to_string(FreezeMode m) {
    switch (m) {
        case FreezeMode::None: return "none";
        case FreezeMode::EmbeddingFrozen: return "embedding_frozen";
        case FreezeMode::BodyFrozen: return "body_frozen";
        case FreezeMode::RandomEmbeddingFrozen: return "random_embedding_frozen";
    }
    return "none";
}

inline FreezeMode freeze_mode_from_string(const std::string& s) {
    if (s == "none") return FreezeMode::None;
    if (s == "embedding_frozen" || s == "embedding") return FreezeMode::EmbeddingFrozen;
    if (s == "body_frozen" || s == "body") return FreezeMode::BodyFrozen;
    if (s == "random_embedding_frozen" || s == "random-embedding") return FreezeMode::RandomEmbeddingFrozen;
    throw std::invalid_argument("unknown freeze mode '" + s + "'");
}

struct FreezeSpec {
    FreezeMode mode = FreezeMode::None;

    // body_frozen keeps W_E and W_U trainable and freezes the rest.
    bool is_frozen(const std::string& tensor) const {
        switch (mode) {
            case FreezeMode::None: return false;
            case FreezeMode::EmbeddingFrozen:
            case FreezeMode::RandomEmbeddingFrozen: return tensor == "W_E";
            case FreezeMode::BodyFrozen: return tensor != "W_E" && tensor != "W_U";
        }
        return false;
    }
};

struct ModelParams {
    ModelDims dims;
    FreezeSpec freeze;
    Matrix W_E;                     // d_emb x vocab
    std::vector<Matrix> W_Q, W_K, W_V;  // d_head x d_emb, one per head
    std::vector<Matrix> W_O;        // d_emb x d_head
    Matrix W_in;                    // d_mlp x d_emb
    Matrix W_out;                   // d_emb x d_mlp
    Matrix W_U;                     // vocab x d_emb

    // Zero tensors of the right shapes.
    static ModelParams zeros(const ModelDims& d) {
        d.validate();
        ModelParams m;
        m.dims = d;
        m.W_E = Matrix::Zero(d.d_emb, d.vocab());
        for (int j = 0; j < d.n_heads; ++j) {
            m.W_Q.push_back(Matrix::Zero(d.d_head, d.d_emb));
            m.W_K.push_back(Matrix::Zero(d.d_head, d.d_emb));
            m.W_V.push_back(Matrix::Zero(d.d_head, d.d_emb));
            m.W_O.push_back(Matrix::Zero(d.d_emb, d.d_head));
        }
        m.W_in = Matrix::Zero(d.d_mlp, d.d_emb);
        m.W_out = Matrix::Zero(d.d_emb, d.d_mlp);
        m.W_U = Matrix::Zero(d.vocab(), d.d_emb);
        return m;
    }

    // Visits tensors in registry order: W_E, per head (W_Q.j, W_K.j, W_V.j,
    // W_O.j), W_in, W_out, W_U. Init sampling and checkpoints follow it.
    template <class F>
    void for_each(F&& f) {
        f(std::string("W_E"), W_E);
        for (std::size_t j = 0; j < W_Q.size(); ++j) {
            const std::string s = "." + std::to_string(j);
            f("W_Q" + s, W_Q[j]);
            f("W_K" + s, W_K[j]);
            f("W_V" + s, W_V[j]);
            f("W_O" + s, W_O[j]);
        }
        f(std::string("W_in"), W_in);
        f(std::string("W_out"), W_out);
        f(std::string("W_U"), W_U);
    }
    template <class F>
    void for_each(F&& f) const {
        const_cast<ModelParams*>(this)->for_each(
            [&f](const std::string& name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
    }

    // Lockstep visit of two identically shaped parameter sets.
    template <class F>
    void zip(const ModelParams& other, F&& f) {
        std::vector<const Matrix*> rhs;
        other.for_each([&rhs](const std::string&, const Matrix& m) { rhs.push_back(&m); });
        std::size_t i = 0;
        for_each([&](const std::string& name, Matrix& m) { f(name, m, *rhs.at(i++)); });
    }

    double l2_norm() const {
        double sq = 0.0;
        for_each([&sq](const std::string&, const Matrix& m) { sq += m.squaredNorm(); });
        return std::sqrt(sq);
    }

    friend bool operator==(const ModelParams& x, const ModelParams& y) {
        if (!x.dims.same_shapes(y.dims)) return false;
        std::vector<const Matrix*> a, b;
        x.for_each([&a](const std::string&, const Matrix& m) { a.push_back(&m); });
        y.for_each([&b](const std::string&, const Matrix& m) { b.push_back(&m); });
        for (std::size_t i = 0; i < a.size(); ++i)
            if (*a[i] != *b[i]) return false;
        return true;
    }
};

// Gaussian(0, 1/sqrt(d_out)) per matrix, with d_out the row count (the
// output dimension as applied) or the column count under fan_in_init. One
// generator stream fills every matrix row by row in registry order.
inline ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
    ModelParams m = ModelParams::zeros(dims);
    CounterRng rng(seed);
    m.for_each([&](const std::string&, Matrix& w) {
        const double fan = static_cast<double>(dims.fan_in_init ? w.cols() : w.rows());
        const double stddev = 1.0 / std::sqrt(fan);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = stddev * rng.normal();
    });
    return m;
}

// W_L = W_U[:p] W_out, the readout from MLP neurons to integer-token logits.
inline Matrix neuron_logit_map(const ModelParams& m) { return m.W_U.topRows(m.dims.p) * m.W_out; }

// Per-head blocks are stacked: rows [j * d_head, (j + 1) * d_head) of q, k,
// v and z belong to head j.
struct ForwardCache {
    std::array<std::vector<int>, 3> tokens;
    Matrix q;                  // d_emb x N
    std::array<Matrix, 3> k;   // d_emb x N per position
    std::array<Matrix, 3> v;
    std::vector<Matrix> attn;  // per head, 3 x N softmax weights
    Matrix z;                  // d_emb x N, per head sum_i A_i v_i
    Matrix x1;                 // d_emb x N
    Matrix pre;                // d_mlp x N, W_in x1
    Matrix mlp;                // d_mlp x N
    Matrix x2;                 // d_emb x N
};

struct ForwardResult {
    Matrix logits;  // vocab x N
    ForwardCache cache;
};

namespace detail {

inline Matrix gather_cols(const Matrix& src, const std::vector<int>& idx) {
    Matrix out(src.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t n = 0; n < idx.size(); ++n) out.col(static_cast<Eigen::Index>(n)) = src.col(idx[n]);
    return out;
}

inline void scatter_add_cols(Matrix& dst, const Matrix& src, const std::vector<int>& idx) {
    for (std::size_t n = 0; n < idx.size(); ++n) dst.col(idx[n]) += src.col(static_cast<Eigen::Index>(n));
}

inline double attention_scale(const ModelDims& d) {
    return d.scale_attention ? 1.0 / std::sqrt(static_cast<double>(d.d_head)) : 1.0;
}

inline Matrix stack_rows(const std::vector<Matrix>& blocks) {
    Matrix out(blocks.front().rows() * static_cast<Eigen::Index>(blocks.size()), blocks.front().cols());
    for (std::size_t j = 0; j < blocks.size(); ++j)
        out.middleRows(static_cast<Eigen::Index>(j) * blocks[j].rows(), blocks[j].rows()) = blocks[j];
    return out;
}

inline Matrix stack_cols(const std::vector<Matrix>& blocks) {
    Matrix out(blocks.front().rows(), blocks.front().cols() * static_cast<Eigen::Index>(blocks.size()));
    for (std::size_t j = 0; j < blocks.size(); ++j)
        out.middleCols(static_cast<Eigen::Index>(j) * blocks[j].cols(), blocks[j].cols()) = blocks[j];
    return out;
}

}  // namespace detail

inline ForwardResult forward(const ModelParams& m, const std::vector<Example>& batch) {
    const ModelDims& d = m.dims;
    const auto N = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index dh = d.d_head;
    ForwardResult out;
    ForwardCache& c = out.cache;
    for (auto& t : c.tokens) t.resize(batch.size());
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const Example& ex = batch[n];
        const int tok[3] = {static_cast<int>(ex.a), static_cast<int>(ex.op_token), static_cast<int>(ex.b)};
        for (int i = 0; i < 3; ++i) {
            // Operands are residues; the middle slot holds an operation token.
            const int lo = i == 1 ? d.p : 0;
            const int hi = i == 1 ? d.vocab() : d.p;
            if (tok[i] < lo || tok[i] >= hi)
                throw TokenOutOfRange("token " + std::to_string(tok[i]) + " at position " + std::to_string(i) +
                                      " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + ")");
            c.tokens[static_cast<std::size_t>(i)][n] = tok[i];
        }
    }

    // Projections are computed once per vocabulary entry and gathered.
    const Matrix q_vocab = detail::stack_rows(m.W_Q) * m.W_E;
    const Matrix k_vocab = detail::stack_rows(m.W_K) * m.W_E;
    const Matrix v_vocab = detail::stack_rows(m.W_V) * m.W_E;
    c.q = detail::gather_cols(q_vocab, c.tokens[2]);
    for (std::size_t i = 0; i < 3; ++i) {
        c.k[i] = detail::gather_cols(k_vocab, c.tokens[i]);
        c.v[i] = detail::gather_cols(v_vocab, c.tokens[i]);
    }

    const double scale = detail::attention_scale(d);
    c.attn.resize(static_cast<std::size_t>(d.n_heads));
    c.z = Matrix::Zero(d.d_emb, N);
    for (int j = 0; j < d.n_heads; ++j) {
        const Eigen::Index r0 = j * dh;
        Matrix scores(3, N);
        for (std::size_t i = 0; i < 3; ++i)
            scores.row(static_cast<Eigen::Index>(i)) =
                scale * c.k[i].middleRows(r0, dh).cwiseProduct(c.q.middleRows(r0, dh)).colwise().sum();
        const Eigen::RowVectorXd mx = scores.colwise().maxCoeff();
        Matrix& a = c.attn[static_cast<std::size_t>(j)];
        a = (scores.rowwise() - mx).array().exp().matrix();
        const Eigen::RowVectorXd denom = a.colwise().sum();
        a.array().rowwise() /= denom.array();
        for (std::size_t i = 0; i < 3; ++i)
            c.z.middleRows(r0, dh).array() +=
                c.v[i].middleRows(r0, dh).array().rowwise() * a.row(static_cast<Eigen::Index>(i)).array();
    }
    c.x1 = detail::gather_cols(m.W_E, c.tokens[2]);
    c.x1.noalias() += detail::stack_cols(m.W_O) * c.z;
    c.pre.noalias() = m.W_in * c.x1;
    c.mlp = c.pre.cwiseMax(0.0);
    c.x2 = c.x1;
    c.x2.noalias() += m.W_out * c.mlp;
    out.logits.noalias() = m.W_U * c.x2;
    return out;
}

// Per-column softmax with max subtraction.
inline Matrix softmax_cols(const Matrix& logits) {
    const Eigen::RowVectorXd mx = logits.colwise().maxCoeff();
    Matrix e = (logits.rowwise() - mx).array().exp().matrix();
    const Eigen::RowVectorXd s = e.colwise().sum();
    e.array().rowwise() /= s.array();
    return e;
}

// Mean cross-entropy of column-wise logits against labels; the first
// `classes` rows take part in the softmax (all rows when classes < 0).
inline double cross_entropy(const Matrix& logits, const std::vector<Example>& batch, int classes = -1) {
    const Eigen::Index rows = classes < 0 ? logits.rows() : classes;
    double total = 0.0;
    for (Eigen::Index n = 0; n < logits.cols(); ++n) {
        const auto col = logits.col(n).head(rows);
        const double mx = col.maxCoeff();
        const double lse = mx + std::log((col.array() - mx).exp().sum());
        total += lse - col(batch[static_cast<std::size_t>(n)].label);
    }
    return total / static_cast<double>(logits.cols());
}

// Fraction of columns whose argmax over the first `classes` rows equals the label.
inline double accuracy(const Matrix& logits, const std::vector<Example>& batch, int classes = -1) {
    const Eigen::Index rows = classes < 0 ? logits.rows() : classes;
    std::size_t hits = 0;
    for (Eigen::Index n = 0; n < logits.cols(); ++n) {
        Eigen::Index arg = 0;
        logits.col(n).head(rows).maxCoeff(&arg);
        if (arg == batch[static_cast<std::size_t>(n)].label) ++hits;
    }
    return logits.cols() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(logits.cols());
}

struct LossAndGrads {
    double loss = 0.0;
    ModelParams grads;
    Matrix logits;
};

// Mean cross-entropy over the full vocabulary at the final position and its
// exact gradient. Labels come from the examples.
inline LossAndGrads loss_and_grads(const ModelParams& m, const std::vector<Example>& batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const ModelDims& d = m.dims;
    for (const auto& ex : batch)
        if (ex.label >= static_cast<std::uint32_t>(d.p)) throw std::invalid_argument("label not below p");
    ForwardResult fr = forward(m, batch);
    const ForwardCache& c = fr.cache;
    if (!fr.logits.allFinite() || !c.x1.allFinite()) throw NaNGuard("non-finite activation in forward pass");

    LossAndGrads out;
    out.loss = cross_entropy(fr.logits, batch);
    if (!std::isfinite(out.loss)) throw NaNGuard("non-finite loss");
    out.grads = ModelParams::zeros(d);
    out.grads.freeze = m.freeze;
    ModelParams& g = out.grads;
    const auto N = static_cast<Eigen::Index>(batch.size());
    const double inv_n = 1.0 / static_cast<double>(N);

    Matrix dlogits = softmax_cols(fr.logits);
    for (Eigen::Index n = 0; n < N; ++n) dlogits(batch[static_cast<std::size_t>(n)].label, n) -= 1.0;
    dlogits *= inv_n;

    g.W_U.noalias() = dlogits * c.x2.transpose();
    Matrix dx2 = m.W_U.transpose() * dlogits;
    g.W_out.noalias() = dx2 * c.mlp.transpose();
    Matrix dpre = m.W_out.transpose() * dx2;
    dpre.array() *= (c.pre.array() > 0.0).cast<double>();
    g.W_in.noalias() = dpre * c.x1.transpose();
    Matrix dx1 = dx2;
    dx1.noalias() += m.W_in.transpose() * dpre;

    const double scale = detail::attention_scale(d);
    const Eigen::Index dh = d.d_head;
    const Matrix w_o = detail::stack_cols(m.W_O);
    const Matrix dw_o = dx1 * c.z.transpose();
    const Matrix dz = w_o.transpose() * dx1;
    Matrix dq = Matrix::Zero(d.d_emb, N);
    std::array<Matrix, 3> dk, dv;
    for (std::size_t i = 0; i < 3; ++i) {
        dk[i].resize(d.d_emb, N);
        dv[i].resize(d.d_emb, N);
    }
    for (int j = 0; j < d.n_heads; ++j) {
        const Eigen::Index r0 = j * dh;
        const Matrix& a = c.attn[static_cast<std::size_t>(j)];
        const auto dzj = dz.middleRows(r0, dh);
        Matrix dattn(3, N);
        for (std::size_t i = 0; i < 3; ++i)
            dattn.row(static_cast<Eigen::Index>(i)) = dzj.cwiseProduct(c.v[i].middleRows(r0, dh)).colwise().sum();
        const Eigen::RowVectorXd weighted = a.cwiseProduct(dattn).colwise().sum();
        const Matrix dscores = a.cwiseProduct(dattn.rowwise() - weighted) * scale;
        for (std::size_t i = 0; i < 3; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            dv[i].middleRows(r0, dh) = dzj.array().rowwise() * a.row(ii).array();
            dk[i].middleRows(r0, dh) = c.q.middleRows(r0, dh).array().rowwise() * dscores.row(ii).array();
            dq.middleRows(r0, dh).array() += c.k[i].middleRows(r0, dh).array().rowwise() * dscores.row(ii).array();
        }
    }
    Matrix dq_vocab = Matrix::Zero(d.d_emb, d.vocab());
    Matrix dk_vocab = Matrix::Zero(d.d_emb, d.vocab());
    Matrix dv_vocab = Matrix::Zero(d.d_emb, d.vocab());
    detail::scatter_add_cols(dq_vocab, dq, c.tokens[2]);
    for (std::size_t i = 0; i < 3; ++i) {
        detail::scatter_add_cols(dk_vocab, dk[i], c.tokens[i]);
        detail::scatter_add_cols(dv_vocab, dv[i], c.tokens[i]);
    }
    const Matrix w_q = detail::stack_rows(m.W_Q);
    const Matrix w_k = detail::stack_rows(m.W_K);
    const Matrix w_v = detail::stack_rows(m.W_V);
    const Matrix dw_q = dq_vocab * m.W_E.transpose();
    const Matrix dw_k = dk_vocab * m.W_E.transpose();
    const Matrix dw_v = dv_vocab * m.W_E.transpose();
    for (int j = 0; j < d.n_heads; ++j) {
        const Eigen::Index r0 = j * dh;
        g.W_Q[j] = dw_q.middleRows(r0, dh);
        g.W_K[j] = dw_k.middleRows(r0, dh);
        g.W_V[j] = dw_v.middleRows(r0, dh);
        g.W_O[j] = dw_o.middleCols(r0, dh);
    }
    g.W_E.noalias() = w_q.transpose() * dq_vocab;
    g.W_E.noalias() += w_k.transpose() * dk_vocab;
    g.W_E.noalias() += w_v.transpose() * dv_vocab;
    // Residual path into the embedding of the final token.
    detail::scatter_add_cols(g.W_E, dx1, c.tokens[2]);
    out.logits = std::move(fr.logits);
    return out;
}

// Builds the starting point of a run under a freeze spec. Everything not
// copied from the donor is initialized from `seed`.
inline ModelParams apply_freeze(const ModelDims& dims, FreezeSpec spec, const ModelParams* donor, std::uint64_t seed) {
    const bool needs_donor = spec.mode == FreezeMode::EmbeddingFrozen || spec.mode == FreezeMode::BodyFrozen;
    if (needs_donor != (donor != nullptr))
        throw std::invalid_argument("a donor is required exactly for embedding_frozen and body_frozen");
    if (donor && !donor->dims.same_shapes(dims))
        throw DimMismatch("donor dimensions (p=" + std::to_string(donor->dims.p) + ", n_op=" +
                          std::to_string(donor->dims.n_op) + ") do not match the run (p=" +
                          std::to_string(dims.p) + ", n_op=" + std::to_string(dims.n_op) + ")");
    ModelParams m = init_params(dims, seed);
    m.freeze = spec;
    if (donor) {
        m.zip(*donor, [&spec](const std::string& name, Matrix& w, const Matrix& dw) {
            if (spec.is_frozen(name)) w = dw;
        });
    }
    return m;
}

}  // namespace grok
