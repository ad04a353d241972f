#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mgreid/attention.hpp"
#include "mgreid/kernels.hpp"
#include "mgreid/matrix.hpp"
#include "mgreid/rng.hpp"

namespace mgreid::nn {

// A parameter tensor with its gradient accumulator. Gradients are only
// accumulated while the parameter is trainable, so per-stage freezing rules
// are visible directly in the gradients.
struct Param {
    Matrix w;
    Matrix g;
    bool trainable = true;

    void init(int r, int c) {
        w = Matrix(r, c);
        g = Matrix(r, c);
    }
    void accum(const Matrix& dg) {
        if (trainable) g += dg;
    }
    void zero_grad() { g.zero(); }
    double grad_norm() const {
        double s = 0.0;
        for (double x : g.v) s += x * x;
        return std::sqrt(s);
    }
};

using ParamVisitor = std::function<void(const std::string&, Param&)>;

struct NamedParam {
    std::string name;
    Param* p;
};

// FNV-1a over the raw value bytes; used by the freezing tests.
uint64_t hash_bytes(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL);
uint64_t hash_param(const Param& p, uint64_t h = 0xcbf29ce484222325ULL);

double gelu(double x);
double gelu_grad(double x);

// ---------------------------------------------------------------------------

struct Linear {
    Param W;  // out x in
    Param b;  // 1 x out
    bool has_bias = true;

    void init(int in, int out, Rng& rng, bool bias = true);
    void init_zero(int in, int out, bool bias = true);

    struct Ctx {
        Matrix x;
    };
    // y = x W^T + b, x: n x in
    Matrix forward(const Matrix& x, Ctx* ctx = nullptr) const;
    Matrix backward(const Ctx& ctx, const Matrix& dy);
    void visit(const std::string& prefix, const ParamVisitor& v);
};

struct LayerNorm {
    Param gamma;  // 1 x dim
    Param beta;   // 1 x dim
    double eps = 1e-5;

    void init(int dim);

    struct Ctx {
        Matrix xhat;
        Vec inv_std;
    };
    Matrix forward(const Matrix& x, Ctx* ctx = nullptr) const;
    Matrix backward(const Ctx& ctx, const Matrix& dy);
    void visit(const std::string& prefix, const ParamVisitor& v);
};

struct Mlp {
    Linear fc1, fc2;

    void init(int dim, int hidden, Rng& rng);

    struct Ctx {
        Linear::Ctx c1, c2;
        Matrix pre;  // fc1 output before activation
    };
    Matrix forward(const Matrix& x, Ctx* ctx = nullptr) const;
    Matrix backward(const Ctx& ctx, const Matrix& dy);
    void visit(const std::string& prefix, const ParamVisitor& v);
};

struct MultiHeadSelfAttention {
    Linear wq, wk, wv, wo;
    int heads = 1;

    void init(int dim, int heads, Rng& rng);

    struct Ctx {
        Linear::Ctx cq, ck, cv, co;
        ammsa::MsaCoreCtx core;
    };
    // mask: additive S x S matrix with entries in {0, mask-off}, or nullptr.
    Matrix forward(const Matrix& x, const Matrix* mask, Ctx* ctx = nullptr) const;
    Matrix backward(const Ctx& ctx, const Matrix& dy);
    void visit(const std::string& prefix, const ParamVisitor& v);
};

// Pre-LN transformer block: x + MSA(LN(x)), then x + MLP(LN(x)).
struct TransformerLayer {
    LayerNorm ln1, ln2;
    MultiHeadSelfAttention msa;
    Mlp mlp;

    void init(int dim, int heads, int mlp_hidden, Rng& rng);

    struct Ctx {
        LayerNorm::Ctx l1, l2;
        MultiHeadSelfAttention::Ctx att;
        Mlp::Ctx mlp;
    };
    Matrix forward(const Matrix& x, const Matrix* mask, Ctx* ctx = nullptr) const;
    Matrix backward(const Ctx& ctx, const Matrix& dy);
    void visit(const std::string& prefix, const ParamVisitor& v);
};

// BN neck: feature-wise batch normalization with a learnable scale and no
// shift. Training mode normalizes with batch statistics and maintains running
// statistics for inference.
struct BatchNorm {
    Param gamma;          // 1 x dim
    Matrix running_mean;  // 1 x dim
    Matrix running_var;   // 1 x dim
    double eps = 1e-5;
    double momentum = 0.1;

    void init(int dim);

    struct Ctx {
        Matrix xhat;
        Vec inv_std;
    };
    Matrix forward_train(const Matrix& x, Ctx* ctx);
    Matrix forward_eval(const Matrix& x) const;
    Matrix backward(const Ctx& ctx, const Matrix& dy);
    void visit(const std::string& prefix, const ParamVisitor& v);
};

// ---------------------------------------------------------------------------

struct AdamState {
    Matrix m, v;
    int64_t t = 0;
};

class Adam {
  public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    void step(const std::string& name, Param& p, double lr);
    void zero_state() { slots_.clear(); }

    std::map<std::string, AdamState>& slots() { return slots_; }
    const std::map<std::string, AdamState>& slots() const { return slots_; }
    double weight_decay() const { return weight_decay_; }

  private:
    double beta1_, beta2_, eps_, weight_decay_;
    std::map<std::string, AdamState> slots_;
};

}  // namespace mgreid::nn
