#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "smartedit/dataset.hpp"
#include "smartedit/errors.hpp"
#include "smartedit/gradcheck.hpp"
#include "smartedit/lm.hpp"
#include "smartedit/optim.hpp"
#include "smartedit/rng.hpp"

using namespace smartedit;

namespace {

LmConfig tiny_config() {
    LmConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.context = 64;
    cfg.base_vocab = 80;
    cfg.img_tokens = 4;
    cfg.lora_rank = 2;
    cfg.lora_alpha = 4.0;
    return cfg;
}

Image random_image(uint64_t seed, int n = 32) {
    Rng rng(seed, "lm-test-image");
    Image img(n, n);
    for (double& v : img.pix) v = rng.uniform();
    return img;
}

Tensor find_param(const ParamMap& params, const std::string& name) {
    for (const auto& [n, t] : params.items)
        if (n == name) return t;
    throw std::runtime_error("missing param " + name);
}

}  // namespace

TEST_CASE("vocabulary: IMG ids contiguous above base, serialization round trip") {
    Vocabulary v = Vocabulary::build(128, 32);
    CHECK(v.base_size() == 128);
    CHECK(v.img_tokens() == 32);
    CHECK(v.total_size() == 160);
    for (int i = 0; i < 32; ++i) {
        CHECK(v.img_id(i) == 128 + i);
        CHECK(v.is_img_id(v.img_id(i)));
    }
    CHECK_FALSE(v.is_img_id(127));
    CHECK(v.token_text(v.img_id(0)) == "[IMG_1]");
    CHECK(v.token_text(v.img_id(31)) == "[IMG_32]");

    Vocabulary parsed = Vocabulary::parse(v.serialize());
    CHECK(parsed.base_size() == v.base_size());
    CHECK(parsed.img_tokens() == v.img_tokens());

    auto ids = v.encode_words("Remove the red circle.");
    for (int id : ids) CHECK(id < v.base_size());
    CHECK(v.encode_words("zzyzx")[0] == v.unk_id());
}

TEST_CASE("vocabulary: lexicon must fit the base size") {
    CHECK_THROWS_AS((void)Vocabulary::build(10, 4), ConfigError);
}

TEST_CASE("patch_embed: shape arithmetic and linearity") {
    LmConfig cfg;  // defaults: d_model 64, patch 8
    LanguageModel lm(cfg, Rng(0, "init"));
    Image img = random_image(1);
    Tensor pe = lm.patch_embed(img);
    CHECK(pe.shape() == Shape{16, 64});

    Image zero(32, 32);
    Tensor pz = lm.patch_embed(zero);
    for (double v : pz.values()) CHECK(v == 0.0);  // zero image, zero bias

    Image odd(30, 30);
    CHECK_THROWS_AS((void)lm.patch_embed(odd), ShapeError);
}

TEST_CASE("patch_embed: gradient w.r.t. the FC weights matches finite differences") {
    LmConfig cfg = tiny_config();
    LanguageModel lm(cfg, Rng(2, "init"));
    Image img = random_image(3, 16);
    Tensor w = find_param(lm.params(), "lm.patch_fc.w");
    w.set_requires_grad(true);
    std::vector<Tensor> inputs{w};
    double err = grad_check(
        [&](const std::vector<Tensor>&) { return sum(gelu(lm.patch_embed(img))); }, inputs);
    CHECK(err < 1e-6);
    w.set_requires_grad(false);
}

TEST_CASE("lm_forward: logits shape contract and causality") {
    LmConfig cfg = tiny_config();
    LanguageModel lm(cfg, Rng(4, "init"));
    Image img = random_image(5, 16);  // 4 patches

    TokenSequence a = make_sequence(lm.vocab(), "remove the red circle", lm.n_patches(img));
    auto fa = lm.forward(a, img);
    Tensor logits_a = lm.logits(fa.states);
    CHECK(logits_a.shape() == Shape{a.length(), lm.vocab().total_size()});
    CHECK(fa.hidden.shape() == Shape{cfg.img_tokens, cfg.d_model});

    // differ only in the final text token
    TokenSequence b = make_sequence(lm.vocab(), "remove the red square", lm.n_patches(img));
    REQUIRE(a.text_ids.size() == b.text_ids.size());
    const int k = a.n_patches + static_cast<int>(a.text_ids.size()) - 1;  // first differing row
    auto fb = lm.forward(b, img);
    Tensor logits_b = lm.logits(fb.states);
    for (int64_t row = 0; row < k; ++row)
        for (int64_t col = 0; col < logits_a.dim(1); ++col)
            CHECK(logits_a.values()[row * logits_a.dim(1) + col] ==
                  logits_b.values()[row * logits_b.dim(1) + col]);
    // and the differing suffix does change later rows
    bool any_diff = false;
    for (int64_t col = 0; col < logits_a.dim(1); ++col)
        any_diff = any_diff || logits_a.values()[k * logits_a.dim(1) + col] !=
                                   logits_b.values()[k * logits_b.dim(1) + col];
    CHECK(any_diff);
}

TEST_CASE("lm_forward: context overflow is loud") {
    LmConfig cfg = tiny_config();
    cfg.context = 10;
    LanguageModel lm(cfg, Rng(6, "init"));
    Image img = random_image(7, 16);
    TokenSequence seq = make_sequence(lm.vocab(), "remove the red circle", lm.n_patches(img));
    CHECK_THROWS_AS((void)lm.forward(seq, img), InvariantViolation);
}

TEST_CASE("lm_forward: gradient through the full stack matches finite differences") {
    LmConfig cfg = tiny_config();
    LanguageModel lm(cfg, Rng(8, "init"));
    Image img = random_image(9, 16);
    TokenSequence seq = make_sequence(lm.vocab(), "turn the circle blue", lm.n_patches(img));

    std::vector<Tensor> inputs;
    ParamMap trainable;
    trainable.merge("", lm.img_embedding_params());
    trainable.merge("", lm.lora_params());
    for (auto& [name, t] : trainable.items) inputs.push_back(t);

    GradCheckOptions opts;
    opts.max_coords_per_input = 12;
    double err = grad_check(
        [&](const std::vector<Tensor>&) {
            auto fwd = lm.forward(seq, img);
            return lm.img_token_nll_from_states(fwd.states, seq);
        },
        inputs, opts);
    CHECK(err < 1e-5);
}

TEST_CASE("img_token_nll: uniform logits give r*ln(V)") {
    LmConfig cfg = tiny_config();
    LanguageModel lm(cfg, Rng(10, "init"));
    Image img = random_image(11, 16);
    TokenSequence seq = make_sequence(lm.vocab(), "remove the circle", lm.n_patches(img));
    const int L = seq.length();
    const int V = lm.vocab().total_size();
    Tensor logits = Tensor::zeros({L, V});
    Tensor nll = lm.img_token_nll(logits, seq);
    CHECK(nll.item() ==
          doctest::Approx(cfg.img_tokens * std::log(static_cast<double>(V))).epsilon(1e-12));
}

TEST_CASE("img_token_nll: saturated one-hot logits give near-zero loss") {
    LmConfig cfg = tiny_config();
    LanguageModel lm(cfg, Rng(12, "init"));
    Image img = random_image(13, 16);
    TokenSequence seq = make_sequence(lm.vocab(), "remove the circle", lm.n_patches(img));
    const int L = seq.length();
    const int V = lm.vocab().total_size();
    std::vector<double> lv(static_cast<size_t>(L) * V, 0.0);
    for (int i = 0; i < seq.r; ++i) {
        const int row = L - seq.r - 1 + i;
        lv[static_cast<size_t>(row) * V + lm.vocab().img_id(i)] = 100.0;  // logit margin 100
    }
    Tensor nll = lm.img_token_nll(Tensor({L, V}, std::move(lv)), seq);
    CHECK(nll.item() < 1e-10);
    CHECK(nll.item() >= 0.0);
}

TEST_CASE("img_token_nll: matches an independent log-softmax-and-gather oracle") {
    LmConfig cfg = tiny_config();
    LanguageModel lm(cfg, Rng(14, "init"));
    Image img = random_image(15, 16);
    TokenSequence seq = make_sequence(lm.vocab(), "segment the square", lm.n_patches(img));
    const int L = seq.length();
    const int V = lm.vocab().total_size();
    Rng rng(16, "nll-oracle");
    Tensor logits = Tensor::randn(rng, {L, V});

    double expected = 0.0;
    for (int i = 0; i < seq.r; ++i) {
        const int row = L - seq.r - 1 + i;
        const double* rv = logits.values().data() + static_cast<int64_t>(row) * V;
        double mx = rv[0];
        for (int j = 1; j < V; ++j) mx = std::max(mx, rv[j]);
        double lse = 0.0;
        for (int j = 0; j < V; ++j) lse += std::exp(rv[j] - mx);
        expected += mx + std::log(lse) - rv[lm.vocab().img_id(i)];
    }
    CHECK(std::fabs(lm.img_token_nll(logits, seq).item() - expected) < 1e-10);
    // the states-based fast path computes the same quantity
    auto fwd = lm.forward(seq, img);
    CHECK(std::fabs(lm.img_token_nll(lm.logits(fwd.states), seq).item() -
                    lm.img_token_nll_from_states(fwd.states, seq).item()) < 1e-10);
}

TEST_CASE("img_token_nll: missing IMG suffix is an error") {
    LmConfig cfg = tiny_config();
    LanguageModel lm(cfg, Rng(18, "init"));
    TokenSequence bad;
    bad.n_patches = 4;
    bad.text_ids = {1, 5, 6};
    bad.r = 0;
    Tensor logits = Tensor::zeros({7, lm.vocab().total_size()});
    CHECK_THROWS_AS((void)lm.img_token_nll(logits, bad), InvariantViolation);
}

TEST_CASE("lora: zero-initialized B leaves the frozen base output unchanged") {
    Rng rng(20, "lora");
    LoraLinear lora(rng, 8, 6, 2, 4.0);
    Tensor x = Tensor::randn(rng, {3, 8});
    Tensor with_adapter = lora.forward(x);
    Tensor base_only = add_rowwise(matmul(x, lora.w), lora.b);
    CHECK(with_adapter.values() == base_only.values());
}

TEST_CASE("lora: scaling identity with zero base and identity-padded A") {
    Rng rng(22, "lora2");
    const int d_in = 6, d_out = 4, rank = 3;
    Tensor base_w = Tensor::zeros({d_in, d_out});
    std::vector<double> av(static_cast<size_t>(rank) * d_in, 0.0);
    for (int i = 0; i < rank; ++i) av[static_cast<size_t>(i) * d_in + i] = 1.0;  // [I | 0]
    Tensor a({rank, d_in}, std::move(av));
    Tensor b = Tensor::randn(rng, {d_out, rank});
    Tensor x = Tensor::randn(rng, {2, d_in});
    Tensor y = lora_linear(x, base_w, a, b, /*alpha=*/rank, rank);
    // y = x[:, :rank] B^T
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < d_out; ++j) {
            double want = 0.0;
            for (int k = 0; k < rank; ++k)
                want += x.values()[static_cast<size_t>(i) * d_in + k] *
                        b.values()[static_cast<size_t>(j) * rank + k];
            CHECK(y.values()[static_cast<size_t>(i) * d_out + j] ==
                  doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("lora: rank bound and gradient routing") {
    Rng rng(24, "lora3");
    CHECK_THROWS_AS(LoraLinear(rng, 4, 4, 8, 1.0), ConfigError);

    LoraLinear lora(rng, 8, 8, 2, 4.0);
    Tensor x = Tensor::randn(rng, {3, 8});
    Tensor loss = sum(gelu(lora.forward(x)));
    loss.backward();
    CHECK(lora.lora_a.has_grad());
    CHECK(lora.lora_b.has_grad());
    CHECK_FALSE(lora.w.has_grad());  // frozen base never accumulates
}

TEST_CASE("freezing contract: optimizer steps leave every LM base weight bit-identical") {
    LmConfig cfg = tiny_config();
    LanguageModel lm(cfg, Rng(26, "init"));
    Image img = random_image(27, 16);
    TokenSequence seq = make_sequence(lm.vocab(), "remove the triangle", lm.n_patches(img));

    std::vector<std::vector<double>> baseline;
    for (const auto& [name, t] : lm.base_params().items) baseline.push_back(t.values());

    ParamMap trainable;
    trainable.merge("", lm.img_embedding_params());
    trainable.merge("", lm.lora_params());
    AdamW opt(trainable.items, {.lr = 1e-2});
    for (int step = 0; step < 3; ++step) {
        opt.zero_grad();
        auto fwd = lm.forward(seq, img);
        lm.img_token_nll_from_states(fwd.states, seq).backward();
        opt.step();
    }
    auto base = lm.base_params();
    for (size_t i = 0; i < base.items.size(); ++i)
        CHECK(base.items[i].second.values() == baseline[i]);
}

TEST_CASE("img_token_nll decreases over training on a fixed toy batch") {
    LmConfig cfg = tiny_config();
    cfg.n_layers = 1;
    LanguageModel lm(cfg, Rng(28, "init"));
    std::vector<std::pair<Image, TokenSequence>> batch;
    for (uint64_t i = 0; i < 8; ++i) {
        Image img = random_image(100 + i, 16);
        Scene sc = generate_scene(400 + i, 2);
        batch.emplace_back(img, make_sequence(lm.vocab(), scene_caption(sc), lm.n_patches(img)));
    }
    ParamMap trainable;
    trainable.merge("", lm.img_embedding_params());
    trainable.merge("", lm.lora_params());
    AdamW opt(trainable.items, {.lr = 1e-3});

    std::vector<double> losses;
    for (int step = 0; step < 500; ++step) {
        opt.zero_grad();
        double total = 0.0;
        for (auto& [img, seq] : batch) {
            auto fwd = lm.forward(seq, img);
            Tensor nll = scale(lm.img_token_nll_from_states(fwd.states, seq), 1.0 / 8.0);
            nll.backward();
            total += nll.item();
        }
        opt.step();
        losses.push_back(total);
    }
    // 5-step moving average decreases monotonically
    auto ma = [&](size_t i) {
        double s = 0;
        for (size_t j = i; j < i + 5; ++j) s += losses[j];
        return s / 5.0;
    };
    for (size_t i = 0; i + 10 < losses.size(); i += 5) CHECK(ma(i + 5) < ma(i) + 1e-9);
    CHECK(losses.back() < 0.5 * losses.front());
}

TEST_CASE("hidden states depend on the image") {
    LmConfig cfg = tiny_config();
    LanguageModel lm(cfg, Rng(30, "init"));
    Image a = random_image(31, 16);
    Image b = random_image(32, 16);
    TokenSequence seq = make_sequence(lm.vocab(), "remove the circle", lm.n_patches(a));
    Tensor ha = lm.forward(seq, a).hidden;
    Tensor hb = lm.forward(seq, b).hidden;
    double gap = 0.0;
    for (size_t i = 0; i < ha.values().size(); ++i)
        gap += std::pow(ha.values()[i] - hb.values()[i], 2.0);
    CHECK(gap > 0.0);
}
