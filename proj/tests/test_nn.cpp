#include <doctest.h>

#include <cmath>

#include "mgreid/nn.hpp"
#include "oracles.hpp"

using namespace mgreid;
using namespace mgreid::nn;
using oracle::random_matrix;

namespace {

// Sum of elementwise product with a fixed weight matrix: a generic scalar head
// for gradient checking.
double weighted_sum(const Matrix& y, const Matrix& w) {
    double s = 0.0;
    for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * w.v[i];
    return s;
}

// Checks every named parameter's accumulated gradient against central finite
// differences of `scalar`. Probes a strided subset to keep runtime down.
// Gradients that are structurally zero (e.g. a key bias under the softmax's
// shift invariance) compare against FD noise, so tiny pairs pass outright.
template <class Module>
void check_param_grads(Module& mod, const std::function<double()>& scalar, int stride = 3) {
    std::vector<NamedParam> params;
    mod.visit("m", [&](const std::string& n, Param& p) { params.push_back({n, &p}); });
    for (auto& np : params) {
        for (size_t i = 0; i < np.p->w.v.size(); i += stride) {
            const double fd = oracle::fd_grad(np.p->w.v[i], scalar);
            const double got = np.p->g.v[i];
            if (std::abs(fd) < 1e-7 && std::abs(got) < 1e-7) continue;
            INFO("param ", np.name, " index ", i);
            CHECK(oracle::rel_err(got, fd) < 1e-4);
        }
    }
}

}  // namespace

TEST_CASE("gelu gradient matches finite differences") {
    for (double x : {-3.0, -1.0, -0.1, 0.0, 0.4, 2.5}) {
        double slot = x;
        const double fd = oracle::fd_grad(slot, [&]() { return gelu(slot); });
        CHECK(oracle::rel_err(gelu_grad(x), fd) < 1e-6);
    }
}

TEST_CASE("linear forward is x W^T + b") {
    Rng rng(1);
    Linear lin;
    lin.init(3, 2, rng);
    Matrix x = random_matrix(4, 3, rng);
    Matrix y = lin.forward(x);
    REQUIRE(y.rows == 4);
    REQUIRE(y.cols == 2);
    for (int i = 0; i < 4; ++i)
        for (int o = 0; o < 2; ++o) {
            double want = lin.b.w(0, o);
            for (int c = 0; c < 3; ++c) want += x(i, c) * lin.W.w(o, c);
            CHECK(y(i, o) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("linear backward: inputs and parameters") {
    Rng rng(2);
    Linear lin;
    lin.init(5, 3, rng);
    Matrix x = random_matrix(4, 5, rng);
    Matrix w = random_matrix(4, 3, rng);

    auto scalar = [&]() { return weighted_sum(lin.forward(x), w); };

    Linear::Ctx ctx;
    lin.forward(x, &ctx);
    Matrix dx = lin.backward(ctx, w);

    for (size_t i = 0; i < x.v.size(); i += 2) {
        const double fd = oracle::fd_grad(x.v[i], scalar);
        CHECK(oracle::rel_err(dx.v[i], fd) < 1e-4);
    }
    check_param_grads(lin, scalar, 2);
}

TEST_CASE("zero-initialized linear maps everything to zero") {
    Linear lin;
    lin.init_zero(4, 6);
    Rng rng(3);
    Matrix x = random_matrix(2, 4, rng);
    Matrix y = lin.forward(x);
    for (double v : y.v) CHECK(v == 0.0);
}

TEST_CASE("frozen params accumulate no gradient") {
    Rng rng(4);
    Linear lin;
    lin.init(3, 3, rng);
    lin.W.trainable = false;
    Matrix x = random_matrix(2, 3, rng);
    Linear::Ctx ctx;
    lin.forward(x, &ctx);
    lin.backward(ctx, Matrix(2, 3, 1.0));
    CHECK(lin.W.grad_norm() == 0.0);
    CHECK(lin.b.grad_norm() > 0.0);
}

TEST_CASE("layer norm normalizes rows and backprops exactly") {
    Rng rng(5);
    LayerNorm ln;
    ln.init(6);
    // Non-trivial affine parameters.
    for (double& g : ln.gamma.w.v) g = rng.uniform(0.5, 1.5);
    for (double& b : ln.beta.w.v) b = rng.uniform(-0.3, 0.3);
    Matrix x = random_matrix(3, 6, rng);
    Matrix w = random_matrix(3, 6, rng);

    auto scalar = [&]() { return weighted_sum(ln.forward(x), w); };

    LayerNorm::Ctx ctx;
    Matrix y = ln.forward(x, &ctx);
    // Rows have mean beta-ish: check the normalized core prior to affine.
    for (int i = 0; i < 3; ++i) {
        double mean = 0.0, var = 0.0;
        for (int c = 0; c < 6; ++c) mean += ctx.xhat(i, c);
        mean /= 6;
        for (int c = 0; c < 6; ++c) var += (ctx.xhat(i, c) - mean) * (ctx.xhat(i, c) - mean);
        CHECK(std::abs(mean) < 1e-10);
        CHECK(var / 6 == doctest::Approx(1.0).epsilon(1e-3));
    }

    Matrix dx = ln.backward(ctx, w);
    for (size_t i = 0; i < x.v.size(); i += 2) {
        const double fd = oracle::fd_grad(x.v[i], scalar);
        CHECK(oracle::rel_err(dx.v[i], fd) < 1e-4);
    }
    check_param_grads(ln, scalar, 2);
}

TEST_CASE("mlp backward matches finite differences") {
    Rng rng(6);
    Mlp mlp;
    mlp.init(4, 8, rng);
    Matrix x = random_matrix(3, 4, rng);
    Matrix w = random_matrix(3, 4, rng);

    auto scalar = [&]() { return weighted_sum(mlp.forward(x), w); };

    Mlp::Ctx ctx;
    mlp.forward(x, &ctx);
    Matrix dx = mlp.backward(ctx, w);
    for (size_t i = 0; i < x.v.size(); ++i) {
        const double fd = oracle::fd_grad(x.v[i], scalar);
        CHECK(oracle::rel_err(dx.v[i], fd) < 1e-4);
    }
    check_param_grads(mlp, scalar, 5);
}

TEST_CASE("self-attention layer backward matches finite differences") {
    Rng rng(7);
    MultiHeadSelfAttention msa;
    msa.init(8, 2, rng);
    Matrix x = random_matrix(5, 8, rng);
    Matrix w = random_matrix(5, 8, rng);
    Matrix mask(5, 5, 0.0);
    mask(0, 3) = ammsa::kMaskOff;
    mask(4, 4) = ammsa::kMaskOff;

    auto scalar = [&]() { return weighted_sum(msa.forward(x, &mask), w); };

    MultiHeadSelfAttention::Ctx ctx;
    msa.forward(x, &mask, &ctx);
    Matrix dx = msa.backward(ctx, w);
    for (size_t i = 0; i < x.v.size(); i += 3) {
        const double fd = oracle::fd_grad(x.v[i], scalar);
        CHECK(oracle::rel_err(dx.v[i], fd) < 1e-4);
    }
    check_param_grads(msa, scalar, 7);
}

TEST_CASE("transformer layer backward matches finite differences") {
    Rng rng(8);
    TransformerLayer layer;
    layer.init(6, 2, 12, rng);
    Matrix x = random_matrix(4, 6, rng);
    Matrix w = random_matrix(4, 6, rng);

    auto scalar = [&]() { return weighted_sum(layer.forward(x, nullptr), w); };

    TransformerLayer::Ctx ctx;
    layer.forward(x, nullptr, &ctx);
    Matrix dx = layer.backward(ctx, w);
    for (size_t i = 0; i < x.v.size(); i += 2) {
        const double fd = oracle::fd_grad(x.v[i], scalar);
        CHECK(oracle::rel_err(dx.v[i], fd) < 1e-4);
    }
    check_param_grads(layer, scalar, 11);
}

TEST_CASE("batch norm: identity statistics give the identity map") {
    BatchNorm bn;
    bn.init(4);
    // Fresh BN: running mean 0, var 1, scale 1.
    Rng rng(9);
    Matrix x = random_matrix(3, 4, rng);
    Matrix y = bn.forward_eval(x);
    for (size_t i = 0; i < x.v.size(); ++i)
        CHECK(y.v[i] == doctest::Approx(x.v[i]).epsilon(1e-5));
}

TEST_CASE("batch norm training normalizes the batch and freezes in eval") {
    BatchNorm bn;
    bn.init(3);
    Rng rng(10);
    Matrix x = random_matrix(16, 3, rng, -4.0, 7.0);
    BatchNorm::Ctx ctx;
    Matrix y = bn.forward_train(x, &ctx);
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int i = 0; i < 16; ++i) mean += y(i, c);
        mean /= 16;
        for (int i = 0; i < 16; ++i) var += (y(i, c) - mean) * (y(i, c) - mean);
        var /= 16;
        CHECK(std::abs(mean) < 1e-10);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }

    // Eval mode is a pure function of the running statistics.
    Matrix e1 = bn.forward_eval(x);
    Matrix e2 = bn.forward_eval(x);
    CHECK(e1.v == e2.v);
}

TEST_CASE("batch norm backward matches finite differences") {
    BatchNorm bn;
    bn.init(3);
    Rng rng(11);
    for (double& g : bn.gamma.w.v) g = rng.uniform(0.5, 1.5);
    Matrix x = random_matrix(6, 3, rng);
    Matrix w = random_matrix(6, 3, rng);

    // Running statistics update inside forward_train does not affect the
    // batch output, so the scalar is well-defined for finite differences.
    auto scalar = [&]() {
        BatchNorm saved = bn;
        BatchNorm::Ctx c;
        return weighted_sum(saved.forward_train(x, &c), w);
    };

    BatchNorm copy = bn;
    BatchNorm::Ctx ctx;
    copy.forward_train(x, &ctx);
    Matrix dx = copy.backward(ctx, w);
    for (size_t i = 0; i < x.v.size(); ++i) {
        const double fd = oracle::fd_grad(x.v[i], scalar);
        CHECK(oracle::rel_err(dx.v[i], fd) < 1e-4);
    }
    for (size_t i = 0; i < copy.gamma.w.v.size(); ++i) {
        double& slot = bn.gamma.w.v[i];
        const double fd = oracle::fd_grad(slot, scalar);
        CHECK(oracle::rel_err(copy.gamma.g.v[i], fd) < 1e-4);
    }
}

TEST_CASE("adam steps are deterministic and honor the learning rate sign") {
    Rng rng(12);
    Param p1, p2;
    p1.init(2, 2);
    p2.init(2, 2);
    for (size_t i = 0; i < 4; ++i) p1.w.v[i] = p2.w.v[i] = rng.uniform(-1.0, 1.0);
    Matrix g = random_matrix(2, 2, rng);

    Adam a1(0.9, 0.999, 1e-8, 0.0), a2(0.9, 0.999, 1e-8, 0.0);
    for (int t = 0; t < 3; ++t) {
        p1.g = g;
        p2.g = g;
        a1.step("p", p1, 1e-2);
        a2.step("p", p2, 1e-2);
    }
    CHECK(p1.w.v == p2.w.v);
    // First-step direction is -sign(gradient).
    Param q;
    q.init(1, 2);
    q.g = Matrix(1, 2);
    q.g(0, 0) = 3.0;
    q.g(0, 1) = -0.5;
    Adam a3;
    a3.step("q", q, 1e-3);
    CHECK(q.w(0, 0) < 0.0);
    CHECK(q.w(0, 1) > 0.0);
}

TEST_CASE("adam weight decay shrinks parameters without gradients") {
    Param p;
    p.init(1, 1);
    p.w(0, 0) = 1.0;
    p.g = Matrix(1, 1, 0.0);
    Adam wd(0.9, 0.999, 1e-8, 0.1);
    wd.step("p", p, 1e-2);
    CHECK(p.w(0, 0) < 1.0);
}

TEST_CASE("param hashing detects any value change") {
    Rng rng(13);
    Param p;
    p.init(3, 3);
    for (double& x : p.w.v) x = rng.uniform(-1.0, 1.0);
    const uint64_t h0 = hash_param(p);
    CHECK(hash_param(p) == h0);
    p.w(1, 1) += 1e-12;
    CHECK(hash_param(p) != h0);
}
