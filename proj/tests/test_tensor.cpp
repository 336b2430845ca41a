#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "smartedit/checkpoint.hpp"
#include "smartedit/errors.hpp"
#include "smartedit/gradcheck.hpp"
#include "smartedit/optim.hpp"
#include "smartedit/rng.hpp"
#include "smartedit/tensor.hpp"

using namespace smartedit;

namespace {

Tensor randt(Rng& rng, Shape shape, bool rg = true) { return Tensor::randn(rng, shape, 1.0, rg); }

// Keeps values away from relu's kink so finite differences stay accurate.
void push_from_zero(Tensor& t, double margin = 0.1) {
    for (double& v : t.raw())
        if (std::fabs(v) < margin) v = v < 0 ? -margin : margin;
}

}  // namespace

TEST_CASE("rng: deterministic, stream-independent, splittable") {
    Rng a(7, "alpha");
    Rng b(7, "alpha");
    Rng c(7, "beta");
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() == b.next_u64());
    Rng a2(7, "alpha");
    a2.next_u64();
    CHECK(a2.next_u64() != c.next_u64());

    Rng s1 = Rng(7, "alpha").split("x");
    Rng s2 = Rng(7, "alpha").split("x");
    Rng s3 = Rng(7, "alpha").split("y");
    CHECK(s1.next_u64() == s2.next_u64());
    CHECK(s1.next_u64() != s3.next_u64());

    Rng n(0, "normal");
    double m = 0, m2 = 0;
    const int N = 20000;
    for (int i = 0; i < N; ++i) {
        double z = n.normal();
        m += z;
        m2 += z * z;
    }
    m /= N;
    m2 /= N;
    CHECK(std::fabs(m) < 0.03);
    CHECK(std::fabs(m2 - 1.0) < 0.05);
}

TEST_CASE("matmul: identity and projection cases") {
    Tensor I({2, 2}, {1, 0, 0, 1});
    Tensor A({2, 2}, {1, 2, 3, 4});
    Tensor r = matmul(I, A);
    CHECK(r.values() == std::vector<double>{1, 2, 3, 4});

    Tensor P({2, 2}, {1, 0, 0, 0});
    Tensor v({2, 1}, {5, 7});
    Tensor pv = matmul(P, v);
    CHECK(pv.values() == std::vector<double>{5, 0});
}

TEST_CASE("matmul: shape mismatch is loud") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_AS((void)matmul(a, b), ShapeError);
}

TEST_CASE("matmul: gradient matches central differences") {
    Rng rng(0, "matmul-grad");
    Tensor a = randt(rng, {3, 4});
    Tensor b = randt(rng, {4, 2});
    Tensor target = randt(rng, {3, 2}, false);
    std::vector<Tensor> inputs{a, b};
    double err = grad_check(
        [&](const std::vector<Tensor>& in) { return mse(matmul(in[0], in[1]), target); }, inputs);
    CHECK(err < 1e-7);
}

TEST_CASE("softmax: symmetry, stabilization, row sums") {
    Tensor x({2}, {0, 0});
    auto s = softmax(x).values();
    CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-12));

    Tensor big({3}, {1000, 1000, 1000});
    auto sb = softmax(big).values();
    for (double v : sb) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Rng rng(3, "softmax-rows");
    Tensor r = randt(rng, {5, 7}, false);
    auto sv = softmax(r).values();
    for (int i = 0; i < 5; ++i) {
        double acc = 0;
        for (int j = 0; j < 7; ++j) {
            CHECK(sv[i * 7 + j] >= 0.0);
            acc += sv[i * 7 + j];
        }
        CHECK(std::fabs(acc - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax: full Jacobian matches finite differences") {
    Rng rng(1, "softmax-jac");
    Tensor x = randt(rng, {5});
    for (int i = 0; i < 5; ++i) {
        std::vector<double> sel(5, 0.0);
        sel[static_cast<size_t>(i)] = 1.0;
        Tensor w({5}, sel);
        std::vector<Tensor> inputs{x};
        double err = grad_check(
            [&](const std::vector<Tensor>& in) { return sum(mul(softmax(in[0]), w)); }, inputs);
        CHECK(err < 1e-7);
    }
}

TEST_CASE("layer_norm: constant row, already-normalized row, gradients") {
    Tensor g1({3}, {1, 1, 1});
    Tensor b1({3}, {0, 0, 0});
    Tensor c({3}, {3, 3, 3});
    Tensor ln_c = layer_norm(c, g1, b1);
    for (double v : ln_c.values()) CHECK(std::fabs(v) < 1e-12);

    Tensor g2({2}, {1, 1});
    Tensor b2({2}, {0, 0});
    Tensor x({2}, {1, -1});
    auto y = layer_norm(x, g2, b2).values();
    CHECK(std::fabs(y[0] - 1.0) < 1e-4);
    CHECK(std::fabs(y[1] + 1.0) < 1e-4);

    Rng rng(2, "ln-grad");
    Tensor xr = randt(rng, {4, 8});
    Tensor gr = randt(rng, {8});
    Tensor br = randt(rng, {8});
    std::vector<Tensor> inputs{xr, gr, br};
    double err = grad_check(
        [&](const std::vector<Tensor>& in) { return mean(layer_norm(in[0], in[1], in[2])); },
        inputs);
    CHECK(err < 1e-6);
}

TEST_CASE("conv2d: delta kernel is identity, ones kernel sums neighborhood") {
    Rng rng(5, "conv");
    Tensor x = randt(rng, {1, 5, 5}, false);
    std::vector<double> k(9, 0.0);
    k[4] = 1.0;  // center tap
    Tensor delta({1, 1, 3, 3}, k);
    CHECK(conv2d(x, delta).values() == x.values());

    Tensor ones({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor img = Tensor::full({1, 4, 4}, 2.0);
    auto out = conv2d(img, ones).values();
    // interior pixels see the full 3x3 neighborhood
    CHECK(out[1 * 4 + 1] == doctest::Approx(18.0));
    CHECK(out[2 * 4 + 2] == doctest::Approx(18.0));
    // corner sees only 2x2
    CHECK(out[0] == doctest::Approx(8.0));
}

TEST_CASE("conv2d: kernel channel mismatch throws") {
    Tensor x = Tensor::zeros({2, 4, 4});
    Tensor k = Tensor::zeros({3, 1, 3, 3});
    CHECK_THROWS_AS((void)conv2d(x, k), ShapeError);
}

TEST_CASE("conv2d: gradients match central differences") {
    Rng rng(6, "conv-grad");
    Tensor x = randt(rng, {2, 5, 5});
    Tensor k = randt(rng, {3, 2, 3, 3});
    std::vector<Tensor> inputs{x, k};
    double err = grad_check(
        [&](const std::vector<Tensor>& in) { return mean(gelu(conv2d(in[0], in[1]))); }, inputs);
    CHECK(err < 1e-6);
}

TEST_CASE("grad_check: quadratic is exact to rounding") {
    Tensor x({2}, {1, 2}, true);
    std::vector<Tensor> inputs{x};
    double err =
        grad_check([](const std::vector<Tensor>& in) { return sum(mul(in[0], in[0])); }, inputs);
    CHECK(err < 1e-9);
    // analytic gradient is [2, 4]
    Tensor y = sum(mul(x, x));
    x.zero_grad();
    y.backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("grad_check: mse against zero target") {
    Rng rng(4, "gc-mse");
    Tensor x = randt(rng, {8});
    Tensor zero = Tensor::zeros({8});
    std::vector<Tensor> inputs{x};
    double err =
        grad_check([&](const std::vector<Tensor>& in) { return mse(in[0], zero); }, inputs);
    CHECK(err < 1e-7);
}

TEST_CASE("grad_check: non-finite forward reports failure") {
    Tensor x({1}, {1.0}, true);
    std::vector<Tensor> inputs{x};
    set_finite_checks(false);
    double err = grad_check(
        [](const std::vector<Tensor>& in) {
            return scale(in[0], std::numeric_limits<double>::infinity());
        },
        inputs);
    set_finite_checks(true);
    CHECK(std::isinf(err));
}

TEST_CASE("ops produce an error on non-finite results") {
    Tensor x({1}, {1e308}, true);
    CHECK_THROWS_AS((void)scale(x, 1e10), InvariantViolation);
}

TEST_CASE("property: every differentiable op passes grad_check over seeds 0-9") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed, "op-property");
        const int64_t n = rng.uniform_int(2, 5);
        const int64_t d = rng.uniform_int(2, 6);

        auto check = [&](const char* name, auto&& fn, std::vector<Tensor> inputs) {
            std::vector<Tensor> ins = std::move(inputs);
            double err = grad_check(fn, ins);
            INFO("op=" << name << " seed=" << seed);
            CHECK(err <= 1e-5);
        };

        Tensor a = randt(rng, {n, d});
        Tensor b = randt(rng, {n, d});
        check("add", [](const std::vector<Tensor>& in) { return sum(add(in[0], in[1])); }, {a, b});
        check("sub", [](const std::vector<Tensor>& in) { return mean(sub(in[0], in[1])); }, {a, b});
        check("mul", [](const std::vector<Tensor>& in) { return sum(mul(in[0], in[1])); }, {a, b});
        check("scale", [](const std::vector<Tensor>& in) { return sum(scale(in[0], -1.7)); }, {a});
        check("add_scalar", [](const std::vector<Tensor>& in) { return sum(add_scalar(in[0], 0.3)); },
              {a});
        check("gelu", [](const std::vector<Tensor>& in) { return sum(gelu(in[0])); }, {a});

        Tensor ar = a.detach(true);
        push_from_zero(ar);
        check("relu", [](const std::vector<Tensor>& in) { return sum(relu(in[0])); }, {ar});

        Tensor m1 = randt(rng, {n, d});
        Tensor m2 = randt(rng, {d, n});
        check("matmul", [](const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])); },
              {m1, m2});
        check("transpose",
              [](const std::vector<Tensor>& in) { return sum(mul(transpose(in[0]), transpose(in[0]))); },
              {a});

        Tensor bias = randt(rng, {d});
        check("add_rowwise",
              [](const std::vector<Tensor>& in) { return sum(gelu(add_rowwise(in[0], in[1]))); },
              {a, bias});

        Tensor x3 = randt(rng, {2, 4, 4});
        Tensor cb = randt(rng, {2});
        check("add_channelwise",
              [](const std::vector<Tensor>& in) { return sum(gelu(add_channelwise(in[0], in[1]))); },
              {x3, cb});
        check("avg_pool_2x2",
              [](const std::vector<Tensor>& in) { return sum(gelu(avg_pool_2x2(in[0]))); }, {x3});
        check("upsample_nearest_2x",
              [](const std::vector<Tensor>& in) { return sum(gelu(upsample_nearest_2x(in[0]))); },
              {x3});

        check("reshape",
              [n, d](const std::vector<Tensor>& in) { return sum(gelu(reshape(in[0], {d, n}))); },
              {a});
        check("slice_rows",
              [n](const std::vector<Tensor>& in) { return sum(gelu(slice_rows(in[0], 0, n - 1))); },
              {a});
        check("slice_cols",
              [d](const std::vector<Tensor>& in) { return sum(gelu(slice_cols(in[0], 1, d))); }, {a});
        check("concat_rows",
              [](const std::vector<Tensor>& in) { return sum(gelu(concat_rows({in[0], in[1]}))); },
              {a, b});
        check("concat_cols",
              [](const std::vector<Tensor>& in) { return sum(gelu(concat_cols({in[0], in[1]}))); },
              {a, b});
        Tensor y3 = randt(rng, {3, 4, 4});
        check("concat_channels",
              [](const std::vector<Tensor>& in) { return sum(gelu(concat_channels({in[0], in[1]}))); },
              {x3, y3});

        std::vector<int> ids;
        for (int i = 0; i < 4; ++i) ids.push_back(static_cast<int>(rng.uniform_int(0, n - 1)));
        check("gather_rows",
              [ids](const std::vector<Tensor>& in) { return sum(gelu(gather_rows(in[0], ids))); },
              {a});

        check("softmax", [](const std::vector<Tensor>& in) { return mean(mul(softmax(in[0]), in[0])); },
              {a});
        Tensor g = randt(rng, {d});
        Tensor bb = randt(rng, {d});
        check("layer_norm",
              [](const std::vector<Tensor>& in) { return mean(layer_norm(in[0], in[1], in[2])); },
              {a, g, bb});

        Tensor cx = randt(rng, {2, 4, 4});
        Tensor ck = randt(rng, {2, 2, 3, 3});
        check("conv2d", [](const std::vector<Tensor>& in) { return mean(conv2d(in[0], in[1])); },
              {cx, ck});

        check("mse", [](const std::vector<Tensor>& in) { return mse(in[0], in[1]); }, {a, b});
        std::vector<int> cls;
        for (int64_t i = 0; i < n; ++i) cls.push_back(static_cast<int>(rng.uniform_int(0, d - 1)));
        check("cross_entropy_rows",
              [cls](const std::vector<Tensor>& in) { return cross_entropy_rows(in[0], cls); }, {a});
    }
}

TEST_CASE("backward accumulates additively on shared subexpressions") {
    Rng rng(9, "shared");
    Tensor x = randt(rng, {4});

    // shared: s used twice
    Tensor s = add(x, x);
    Tensor y = sum(mul(s, s));
    x.zero_grad();
    y.backward();
    auto g_shared = x.grad();

    // duplicated-subgraph oracle: two separate adds
    Tensor x2 = x.detach(true);
    Tensor s1 = add(x2, x2);
    Tensor s2 = add(x2, x2);
    Tensor y2 = sum(mul(s1, s2));
    y2.backward();
    auto g_dup = x2.grad();

    for (size_t i = 0; i < g_shared.size(); ++i)
        CHECK(g_shared[i] == doctest::Approx(g_dup[i]).epsilon(1e-14));
}

TEST_CASE("adamw: zero gradient with zero weight decay is an exact fixpoint") {
    Tensor p({3}, {1.0, -2.0, 3.0}, true);
    AdamW opt({{"p", p}}, {.lr = 0.1, .weight_decay = 0.0});
    // simulate a zero gradient
    Tensor loss = scale(sum(mul(p, p)), 0.0);
    opt.zero_grad();
    loss.backward();
    auto before = p.values();
    opt.step();
    CHECK(p.values() == before);
}

TEST_CASE("adamw: first step moves by ~lr when g=1") {
    Tensor p({1}, {0.5}, true);
    std::vector<double> m{0.0}, v{0.0}, g{1.0};
    adamw_step(p.raw(), g, m, v, 0.1, 0.0, 0.9, 0.999, 1e-8, 1);
    CHECK(p.values()[0] == doctest::Approx(0.5 - 0.1).epsilon(1e-6));
}

TEST_CASE("adamw: rejects step_index < 1") {
    std::vector<double> p{1.0}, m{0.0}, v{0.0}, g{1.0};
    CHECK_THROWS_AS(adamw_step(p, g, m, v, 0.1, 0.0, 0.9, 0.999, 1e-8, 0), InvariantViolation);
}

TEST_CASE("adamw: drives x^2 toward zero with monotone loss decrease") {
    Tensor x({1}, {5.0}, true);
    AdamW opt({{"x", x}}, {.lr = 0.1});
    double prev = 1e300;
    for (int i = 0; i < 100; ++i) {
        Tensor loss = sum(mul(x, x));
        // monotone during descent; near the floor Adam's momentum oscillates
        if (prev > 1e-2) CHECK(loss.item() <= prev + 1e-12);
        prev = loss.item();
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
    CHECK(std::fabs(x.values()[0]) < 0.5);
}

TEST_CASE("adamw: linear warm-up schedule") {
    Tensor p({1}, {0.0}, true);
    AdamW opt({{"p", p}}, {.lr = 1.0, .warmup_ratio = 0.1, .total_steps = 100});
    CHECK(opt.current_lr() == doctest::Approx(0.1));
    for (int i = 0; i < 9; ++i) {
        Tensor loss = sum(mul(p, p));
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
    CHECK(opt.current_lr() == doctest::Approx(1.0));
}

TEST_CASE("checkpoint: bit-exact round trip") {
    Rng rng(11, "ckpt");
    Tensor a = randt(rng, {3, 4}, false);
    Tensor b = randt(rng, {2, 2, 3, 3}, false);
    Tensor c = Tensor::scalar(-0.0);
    auto path = std::filesystem::temp_directory_path() / "smartedit_ckpt_test.bin";
    save_checkpoint(path.string(), {{"a", a}, {"model.b", b}, {"c", c}});
    auto loaded = load_checkpoint(path.string());
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].first == "a");
    CHECK(loaded[1].first == "model.b");
    CHECK(loaded[0].second.shape() == a.shape());
    CHECK(loaded[1].second.shape() == b.shape());
    CHECK(loaded[0].second.values() == a.values());
    CHECK(loaded[1].second.values() == b.values());
    // -0.0 must survive bit-exactly
    CHECK(std::signbit(loaded[2].second.values()[0]));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: magic is validated") {
    auto path = std::filesystem::temp_directory_path() / "smartedit_ckpt_bad.bin";
    atomic_write_file(path.string(), "NOTMAGIC garbage");
    CHECK_THROWS_AS((void)load_checkpoint(path.string()), ConfigError);
    std::filesystem::remove(path);
}

TEST_CASE("tensor invariants: shape/data agreement and grad shape") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
    Tensor t({2}, {1.0, 2.0}, true);
    Tensor y = sum(mul(t, t));
    y.backward();
    CHECK(t.grad().size() == 2);
}
