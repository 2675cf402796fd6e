#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "taxo/common.hpp"
#include "taxo/params.hpp"
#include "taxo/rng.hpp"
#include "taxo/tape.hpp"
#include "taxo/tensor.hpp"

using namespace taxo;
using nn::ParamSet;
using nn::Tape;
using nn::Tensor;

TEST_CASE("tensor shapes and access") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    t.at(1, 2) = 5.0;
    CHECK(t[5] == 5.0);
    CHECK(t.shape_str() == "(2,3)");
    CHECK_THROWS_AS(Tensor({0, 3}), ValidationError);
    CHECK_THROWS_AS(Tensor({2}, {1.0}), ValidationError);
    CHECK(Tensor::scalar(1.5).shape() == std::vector<int>{1});
}

TEST_CASE("rng primitives are deterministic and in range") {
    rng::Engine a(7), b(7);
    for (int i = 0; i < 100; ++i) {
        CHECK(rng::bounded(a, 10) == rng::bounded(b, 10));
    }
    rng::Engine e(123);
    for (int i = 0; i < 1000; ++i) {
        double u = rng::uniform01(e);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(rng::bounded(e, 7) < 7);
        double x = rng::uniform(e, -2.0, 3.0);
        CHECK(x >= -2.0);
        CHECK(x < 3.0);
        CHECK(std::isfinite(rng::gaussian(e)));
    }

    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    rng::Engine s(9);
    rng::shuffle(v, s);
    std::set<int> seen(v.begin(), v.end());
    CHECK(seen.size() == 8);

    rng::Engine s2(9);
    auto pick = rng::sample_without_replacement(100, 10, s2);
    CHECK(pick.size() == 10);
    CHECK(std::set<int>(pick.begin(), pick.end()).size() == 10);
    for (int k : pick) CHECK(k < 100);
}

TEST_CASE("elementwise and reduction ops match hand values") {
    Tape t;
    auto x = t.leaf(Tensor::from_vector({1.0, -2.0, 0.5}));
    auto y = t.leaf(Tensor::from_vector({4.0, 1.0, -1.0}));

    CHECK(t.value(t.add(x, y))[1] == -1.0);
    CHECK(t.value(t.sub(x, y))[0] == -3.0);
    CHECK(t.value(t.mul(x, y))[2] == -0.5);
    CHECK(t.value(t.scale(x, -2.0))[0] == -2.0);
    CHECK(t.scalar_value(t.sum(x)) == doctest::Approx(-0.5));
    CHECK(t.value(t.relu(x))[1] == 0.0);
    CHECK(t.value(t.relu(x))[0] == 1.0);
    CHECK(t.value(t.sigmoid(t.leaf(Tensor::scalar(0.0))))[0] == doctest::Approx(0.5));
    CHECK(t.value(t.tanh(x))[0] == doctest::Approx(std::tanh(1.0)));

    auto zeros4 = t.leaf(Tensor::from_vector({0.0, 0.0, 0.0, 0.0}));
    CHECK(t.scalar_value(t.logsumexp(zeros4)) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    auto d = t.sub(t.leaf(Tensor::from_vector({1.0, 0.0})), t.leaf(Tensor::from_vector({0.0, 1.0})));
    CHECK(t.scalar_value(t.l1_norm(d)) == doctest::Approx(2.0));
    CHECK(t.scalar_value(t.l2_norm(d)) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("cosine values and degenerate inputs") {
    Tape t;
    auto a = t.leaf(Tensor::from_vector({1.0, 0.0}));
    auto b = t.leaf(Tensor::from_vector({0.0, 1.0}));
    CHECK(t.scalar_value(t.cosine(a, b)) == 0.0);

    auto c = t.leaf(Tensor::from_vector({1.0, 2.0}));
    auto d = t.leaf(Tensor::from_vector({2.0, 4.0}));
    CHECK(t.scalar_value(t.cosine(c, d)) == doctest::Approx(1.0));

    auto z = t.leaf(Tensor::from_vector({0.0, 0.0}));
    auto cz = t.cosine(z, c);
    CHECK(t.scalar_value(cz) == 0.0);
    t.backward(cz);
    CHECK(t.grad(c)[0] == 0.0);  // degenerate case contributes no gradient
}

TEST_CASE("bce matches ln2 oracle with gradient -2") {
    Tape t;
    auto p = t.leaf(Tensor::scalar(0.5));
    auto loss = t.bce_loss(p, 1.0);
    CHECK(t.scalar_value(loss) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
    t.backward(loss);
    CHECK(t.grad(p)[0] == doctest::Approx(-2.0));
    CHECK_THROWS_AS(t.bce_loss(p, 0.5), ValidationError);
}

TEST_CASE("matmul forward against hand computation") {
    Tape t;
    auto A = t.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    auto B = t.leaf(Tensor({3, 2}, {7, 8, 9, 10, 11, 12}));
    auto C = t.matmul(A, B);
    CHECK(t.value(C).at(0, 0) == 58.0);
    CHECK(t.value(C).at(0, 1) == 64.0);
    CHECK(t.value(C).at(1, 0) == 139.0);
    CHECK(t.value(C).at(1, 1) == 154.0);

    auto x = t.leaf(Tensor::from_vector({1.0, 0.0, -1.0}));
    auto y = t.matmul(A, x);
    CHECK(t.value(y)[0] == -2.0);
    CHECK(t.value(y)[1] == -2.0);

    CHECK_THROWS_AS(t.matmul(x, A), ValidationError);
    CHECK_THROWS_AS(t.matmul(A, A), ValidationError);
}

TEST_CASE("concat and row round-trip with gradients") {
    Tape t;
    auto a = t.leaf(Tensor::from_vector({1.0, 2.0}));
    auto b = t.leaf(Tensor::from_vector({3.0}));
    auto c = t.concat({a, b});
    CHECK(t.value(c).size() == 3);
    CHECK(t.value(c)[2] == 3.0);

    auto M = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    auto r1 = t.row(M, 1);
    CHECK(t.value(r1)[0] == 3.0);

    auto loss = t.sum(t.mul(c, t.concat({r1, t.leaf(Tensor::from_vector({2.0}))})));
    t.backward(loss);
    CHECK(t.grad(a)[0] == 3.0);   // paired with M(1,0)
    CHECK(t.grad(a)[1] == 4.0);
    CHECK(t.grad(b)[0] == 2.0);
    CHECK(t.grad(M).at(1, 0) == 1.0);
    CHECK(t.grad(M).at(0, 0) == 0.0);
}

TEST_CASE("non-finite forward values are rejected") {
    Tape t;
    CHECK_THROWS_AS(t.leaf(Tensor::scalar(std::nan(""))), NumericError);
    auto big = t.leaf(Tensor::scalar(1e308));
    CHECK_THROWS_AS(t.add(big, big), NumericError);
}

TEST_CASE("backward only touches the active subgraph") {
    Tape t;
    auto x = t.leaf(Tensor::from_vector({2.0, 3.0}));
    auto used = t.sum(t.mul(x, x));
    auto unused = t.scale(x, 100.0);
    (void)unused;
    t.backward(used);
    CHECK(t.grad(x)[0] == 4.0);
    CHECK(t.grad(x)[1] == 6.0);
    t.zero_grads();
    CHECK(t.grad(x)[0] == 0.0);
}

namespace {

// Composes every differentiable op into one scalar and checks analytic
// gradients against central differences.
double op_soup(ParamSet& ps, bool want_grads) {
    Tape t;
    nn::ParamBinding bind(ps, t);
    auto x = bind.var("x");    // 4
    auto y = bind.var("y");    // 4
    auto W = bind.var("W");    // 3x4
    auto M = bind.var("M");    // 4x3

    auto h = t.relu(t.matmul(W, x));                 // 3
    auto prod = t.matmul(M, h);                      // 4
    auto mixed = t.mul(t.sigmoid(prod), t.tanh(y));  // 4
    auto cat = t.concat({mixed, t.row(t.matmul(W, M), 1)});
    auto diff = t.sub(x, y);
    auto parts = t.concat({
        t.l1_norm(diff), t.l2_norm(diff), t.cosine(x, y),
        t.logsumexp(cat), t.sum(t.scale(mixed, 0.5)),
    });
    auto p = t.sigmoid(t.sum(parts));
    auto loss = t.add(t.bce_loss(p, 1.0), t.bce_loss(p, 0.0));
    if (want_grads) {
        t.backward(loss);
        bind.harvest();
    }
    return t.scalar_value(loss);
}

}  // namespace

TEST_CASE("finite differences agree with every op's backward rule") {
    rng::Engine eng(2024);
    ParamSet ps;
    auto rand_tensor = [&](std::vector<int> shape) {
        Tensor t(shape);
        for (long long i = 0; i < t.size(); ++i) t[i] = rng::uniform(eng, 0.1, 1.0);
        return t;
    };
    ps.create("x", rand_tensor({4}));
    ps.create("y", rand_tensor({4}));
    ps.create("W", rand_tensor({3, 4}));
    ps.create("M", rand_tensor({4, 3}));

    auto res = nn::grad_check(op_soup, ps);
    CAPTURE(res.worst_param);
    CHECK(res.max_rel_err < 1e-6);
    CHECK(res.entries_checked == 4 + 4 + 12 + 12);
}

TEST_CASE("split-tape backward matches single-tape gradients") {
    rng::Engine eng(5);
    Tensor W0 = nn::glorot_uniform({3, 3}, 3, 3, eng);
    Tensor x0 = nn::glorot_uniform({3}, 3, 3, eng);

    // Single tape.
    Tape one;
    auto W1 = one.leaf(W0);
    auto x1 = one.leaf(x0);
    auto g1 = one.tanh(one.matmul(W1, x1));
    auto loss1 = one.sum(one.mul(g1, g1));
    one.backward(loss1);

    // Split: downstream tape seeds the upstream one.
    Tape up, down;
    auto W2 = up.leaf(W0);
    auto x2 = up.leaf(x0);
    auto g2 = up.tanh(up.matmul(W2, x2));

    auto gleaf = down.leaf(up.value(g2));
    auto loss2 = down.sum(down.mul(gleaf, gleaf));
    down.backward(loss2);
    CHECK(down.scalar_value(loss2) == doctest::Approx(one.scalar_value(loss1)));

    up.backward_from({{g2, down.grad(gleaf)}});
    for (int i = 0; i < 9; ++i)
        CHECK(up.grad(W2)[i] == doctest::Approx(one.grad(W1)[i]).epsilon(1e-14));
}

TEST_CASE("custom op backward participates in the sweep") {
    Tape t;
    auto x = t.leaf(Tensor::from_vector({1.0, 2.0}));
    // y = 3 * x as a custom node.
    Tensor y(std::vector<int>{2});
    y[0] = 3.0 * t.value(x)[0];
    y[1] = 3.0 * t.value(x)[1];
    auto yv = t.custom({x}, y, [x](Tape& tp, const Tensor& gout) {
        Tensor& gx = tp.grad_mut(x);
        for (long long i = 0; i < gout.size(); ++i) gx[i] += 3.0 * gout[i];
    });
    t.backward(t.sum(yv));
    CHECK(t.grad(x)[0] == 3.0);
    CHECK(t.grad(x)[1] == 3.0);
}

TEST_CASE("adam ignores zero grads and minimises a quadratic") {
    ParamSet ps;
    ps.create("x", Tensor::scalar(10.0));
    nn::AdamConfig cfg;
    cfg.lr = 0.1;
    ps.zero_grads();
    ps.adam_step(cfg);
    CHECK(ps.value("x")[0] == 10.0);

    for (int i = 0; i < 2000; ++i) {
        ps.zero_grads();
        ps.grad("x")[0] = 2.0 * (ps.value("x")[0] - 3.0);
        ps.adam_step(cfg);
    }
    CHECK(ps.value("x")[0] == doctest::Approx(3.0).epsilon(1e-3));
    CHECK(ps.step_count() == 2001);
}

TEST_CASE("checkpoint round-trips values, step and meta") {
    rng::Engine eng(77);
    ParamSet ps;
    ps.create("b/vec", nn::glorot_uniform({5}, 5, 5, eng));
    ps.create("a/mat", nn::glorot_uniform({2, 3}, 3, 2, eng));
    ps.grad("a/mat")[0] = 1.0;
    ps.adam_step({});

    auto path = std::filesystem::temp_directory_path() / "taxo_nn_ckpt_test.bin";
    ps.save(path.string(), {{"kind", "test"}, {"dim", 3}});

    nlohmann::json meta;
    ParamSet loaded = ParamSet::load(path.string(), &meta);
    CHECK(meta.at("kind") == "test");
    CHECK(loaded.step_count() == 1);
    CHECK(loaded.names() == ps.names());
    for (const auto& name : ps.names()) {
        const Tensor& a = ps.value(name);
        const Tensor& b = loaded.value(name);
        REQUIRE(a.shape() == b.shape());
        for (long long i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
    std::filesystem::remove(path);

    CHECK_THROWS_AS(ParamSet::load("/nonexistent/ckpt.bin"), ValidationError);
}

TEST_CASE("glorot init is bounded and seed-stable") {
    rng::Engine e1(11), e2(11);
    Tensor a = nn::glorot_uniform({10, 10}, 10, 10, e1);
    Tensor b = nn::glorot_uniform({10, 10}, 10, 10, e2);
    double bound = std::sqrt(6.0 / 20.0);
    for (long long i = 0; i < a.size(); ++i) {
        CHECK(a[i] == b[i]);
        CHECK(std::abs(a[i]) <= bound);
    }
}

TEST_CASE("param binding reuses leaves and accumulates harvests") {
    ParamSet ps;
    ps.create("w", Tensor::scalar(2.0));
    Tape t;
    nn::ParamBinding bind(ps, t);
    auto w1 = bind.var("w");
    auto w2 = bind.var("w");
    CHECK(w1 == w2);
    t.backward(t.mul(w1, w1));  // d(w^2)/dw = 4
    bind.harvest();
    bind.harvest();  // double harvest doubles the grad
    CHECK(ps.grad("w")[0] == 8.0);
}
