#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "smartedit/errors.hpp"
#include "smartedit/gradcheck.hpp"
#include "smartedit/qformer.hpp"
#include "smartedit/rng.hpp"

using namespace smartedit;

namespace {

void zero_cross_attention_vo(QFormer& qf) {
    for (auto& [name, t] : qf.params().items) {
        if (name.find("cross_attn.wv") != std::string::npos ||
            name.find("cross_attn.wo") != std::string::npos)
            std::fill(t.raw().begin(), t.raw().end(), 0.0);
    }
}

}  // namespace

TEST_CASE("qformer_forward: output shape is n_queries x d regardless of r") {
    QFormerConfig cfg{2, 8, 64, 4};
    QFormer qf(cfg, Rng(0, "init"));
    for (int r : {1, 8, 32}) {
        Rng rng(static_cast<uint64_t>(r), "qf-h");
        Tensor h = Tensor::randn(rng, {r, 64});
        Tensor f = qf.forward(h);
        CHECK(f.shape() == Shape{8, 64});
    }
    Rng rng(9, "qf-h");
    Tensor bad = Tensor::randn(rng, {4, 32});
    CHECK_THROWS_AS((void)qf.forward(bad), ShapeError);
}

TEST_CASE("qformer: zero cross-attention value/output projections erase h's influence") {
    QFormerConfig cfg{2, 4, 32, 4};
    QFormer qf(cfg, Rng(1, "init"));
    zero_cross_attention_vo(qf);
    Rng rng(2, "qf-h");
    Tensor h1 = Tensor::randn(rng, {8, 32});
    Tensor h2 = Tensor::randn(rng, {8, 32});
    CHECK(qf.forward(h1).values() == qf.forward(h2).values());

    // permuting rows of h changes nothing either (queries keep their identity)
    std::vector<double> hv = h1.values();
    std::rotate(hv.begin(), hv.begin() + 32, hv.end());
    Tensor h1_perm({8, 32}, std::move(hv));
    CHECK(qf.forward(h1).values() == qf.forward(h1_perm).values());
}

TEST_CASE("qformer: permuting h rows preserves the output shape and query count") {
    QFormerConfig cfg{2, 4, 32, 4};
    QFormer qf(cfg, Rng(3, "init"));
    Rng rng(4, "qf-h");
    Tensor h = Tensor::randn(rng, {6, 32});
    std::vector<double> hv = h.values();
    std::rotate(hv.begin(), hv.begin() + 32, hv.end());
    Tensor hp({6, 32}, std::move(hv));
    Tensor f = qf.forward(h);
    Tensor fp = qf.forward(hp);
    CHECK(f.shape() == fp.shape());
    // content does change through cross-attention
    CHECK(f.values() != fp.values());
}

TEST_CASE("qformer: gradients match finite differences on a 2-layer instance") {
    QFormerConfig cfg{2, 3, 8, 2};
    QFormer qf(cfg, Rng(5, "init"));
    Rng rng(6, "qf-h");
    Tensor h = Tensor::randn(rng, {4, 8}, 1.0, true);

    std::vector<Tensor> inputs{h};
    for (auto& [name, t] : qf.params().items) inputs.push_back(t);
    GradCheckOptions opts;
    opts.max_coords_per_input = 10;
    double err = grad_check(
        [&](const std::vector<Tensor>& in) { return mean(qf.forward(in[0])); }, inputs, opts);
    CHECK(err < 1e-5);
}

TEST_CASE("stage1_alignment_loss: fixpoint, arithmetic, elementwise oracle") {
    Rng rng(7, "s1");
    Tensor f = Tensor::randn(rng, {4, 8});
    CHECK(stage1_alignment_loss(f, f, Tensor::scalar(0.0)).item() == 0.0);

    Tensor target = add_scalar(f, -0.5);
    Tensor loss = stage1_alignment_loss(f, target, Tensor::scalar(2.0));
    CHECK(loss.item() == doctest::Approx(0.25 + 2.0).epsilon(1e-12));

    Tensor g = Tensor::randn(rng, {4, 8});
    Tensor lm = Tensor::scalar(0.7);
    double expect = 0.0;
    for (size_t i = 0; i < f.values().size(); ++i)
        expect += std::pow(f.values()[i] - g.values()[i], 2.0);
    expect = expect / static_cast<double>(f.size()) + 0.7;
    CHECK(std::fabs(stage1_alignment_loss(f, g, lm).item() - expect) < 1e-12);

    Tensor wrong = Tensor::randn(rng, {2, 8});
    CHECK_THROWS_AS((void)stage1_alignment_loss(f, wrong, lm), ShapeError);
}

TEST_CASE("reference text encoder: frozen, deterministic, tiled") {
    Vocabulary vocab = Vocabulary::build(128, 8);
    ReferenceTextEncoder a(vocab, 16);
    ReferenceTextEncoder b(vocab, 16);
    auto ids = vocab.encode_words("a red circle and a blue square");
    Tensor ta = a.encode_tiled(ids, 4);
    Tensor tb = b.encode_tiled(ids, 4);
    CHECK(ta.shape() == Shape{4, 16});
    CHECK(ta.values() == tb.values());
    // every row is the same pooled vector
    for (int q = 1; q < 4; ++q)
        for (int j = 0; j < 16; ++j)
            CHECK(ta.values()[static_cast<size_t>(q) * 16 + j] == ta.values()[static_cast<size_t>(j)]);
}

TEST_CASE("qformer config validation") {
    CHECK_THROWS_AS(QFormer(QFormerConfig{0, 4, 32, 4}, Rng(0, "init")), ConfigError);
    CHECK_THROWS_AS(QFormer(QFormerConfig{2, 0, 32, 4}, Rng(0, "init")), ConfigError);
    CHECK_THROWS_AS(QFormer(QFormerConfig{2, 4, 30, 4}, Rng(0, "init")), ConfigError);
}
