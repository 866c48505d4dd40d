#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "flowvoc/gradcheck.hpp"
#include "flowvoc/corpus.hpp"
#include "flowvoc/dit.hpp"
#include "flowvoc/error.hpp"
#include "flowvoc/rng.hpp"

using namespace flowvoc;

namespace {

DitConfig small_cfg() {
    DitConfig cfg;
    cfg.latent_dim = 8;
    cfg.frames = 10;
    cfg.frame_rate = 80;
    cfg.width = 32;
    cfg.blocks = 2;
    cfg.heads = 4;
    cfg.time_dim = 16;
    cfg.max_tokens = 4;
    cfg.vocab = Vocabulary::build({"sine mid", "chirp-up low", "square high"});
    return cfg;
}

// nudge every parameter so gates and output projection are active
template <class T>
void perturb_params(Dit<T>& dit, std::uint64_t seed) {
    Rng rng(seed, 0x9e37);
    for (auto& p : dit.ps.vars())
        for (auto& v : p->value) v += T(0.05 * rng.normal());
}

std::vector<float> random_latents(int batch, int dim, int frames, std::uint64_t seed) {
    Rng rng(seed, 0x11);
    std::vector<float> x(std::size_t(batch) * dim * frames);
    for (auto& v : x) v = float(rng.normal());
    return x;
}

std::vector<LatentSeq> toy_latents(int n, int dim, int frames, std::uint64_t seed,
                                   const std::string& provider = "semantic-oracle") {
    std::vector<LatentSeq> ls;
    for (int i = 0; i < n; ++i) {
        LatentSeq l;
        l.batch = 1;
        l.dim = dim;
        l.frames = frames;
        l.frame_rate = 80;
        l.provider = provider;
        l.data = random_latents(1, dim, frames, seed + std::uint64_t(i));
        // spread the channels so standardization has real work to do
        for (int d = 0; d < dim; ++d)
            for (int f = 0; f < frames; ++f) l.at(0, d, f) = l.at(0, d, f) * float(1 + d) - 3.0f;
        ls.push_back(std::move(l));
    }
    return ls;
}

bool same_checkpoint(const Checkpoint& a, const Checkpoint& b) {
    if (a.entries().size() != b.entries().size()) return false;
    for (std::size_t i = 0; i < a.entries().size(); ++i) {
        const auto& [na, ea] = a.entries()[i];
        const auto& [nb, eb] = b.entries()[i];
        if (na != nb || ea.shape != eb.shape || ea.values.size() != eb.values.size()) return false;
        if (std::memcmp(ea.values.data(), eb.values.data(), ea.values.size() * 4) != 0)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("vocabulary ids and caption tokenization") {
    Vocabulary v = Vocabulary::build({"sine mid", "chirp-up low"});
    // reserved pad/unk first, then the unique words sorted
    REQUIRE(v.size() == 6);
    CHECK(v.words[0] == "<pad>");
    CHECK(v.words[1] == "<unk>");
    CHECK(v.id_of("chirp-up") == 2);
    CHECK(v.id_of("low") == 3);
    CHECK(v.id_of("mid") == 4);
    CHECK(v.id_of("sine") == 5);
    CHECK(v.id_of("zzz") == v.unk_id());

    CaptionTokens t = tokenize_caption("sine mid", v, 4);
    CHECK(t.ids == std::vector<int>{5, 4, 0, 0});
    CHECK(t.mask == std::vector<int>{1, 1, 0, 0});

    // out-of-vocabulary word lands on unk at its own position only
    CaptionTokens lo = tokenize_caption("sine low", v, 4);
    CaptionTokens hi = tokenize_caption("sine high", v, 4);
    CHECK(lo.ids[0] == hi.ids[0]);
    CHECK(lo.ids[1] == 3);
    CHECK(hi.ids[1] == v.unk_id());

    CaptionTokens un = tokenize_caption("", v, 4);
    CHECK(un.ids == std::vector<int>{1, 0, 0, 0});
    CHECK(un.mask == std::vector<int>{1, 0, 0, 0});

    CHECK_THROWS_AS(tokenize_caption("a b c d e", v, 4), Error);
}

TEST_CASE("same caption gives the same embedding") {
    DitConfig cfg = small_cfg();
    auto dit = make_dit<float>(cfg, 5);
    std::vector<CaptionTokens> toks{tokenize_caption("sine mid", cfg.vocab, cfg.max_tokens)};
    std::vector<int> m1, m2;
    auto a = embed_tokens(dit, toks, &m1);
    auto b = embed_tokens(dit, toks, &m2);
    CHECK(m1 == m2);
    REQUIRE(a->value.size() == b->value.size());
    for (std::size_t i = 0; i < a->value.size(); ++i) CHECK(a->value[i] == b->value[i]);
}

TEST_CASE("freshly initialized network outputs exact zeros") {
    DitConfig cfg = small_cfg();
    auto dit = make_dit<float>(cfg, 3);
    std::vector<CaptionTokens> toks{tokenize_caption("sine mid", cfg.vocab, cfg.max_tokens),
                                    tokenize_caption("", cfg.vocab, cfg.max_tokens)};
    auto x = random_latents(2, cfg.latent_dim, cfg.frames, 99);
    auto out = dit_forward(dit, x, 2, 0.37, toks);
    for (float v : out->value) CHECK(v == 0.0f);
}

TEST_CASE("output shape tracks input shape") {
    DitConfig cfg = small_cfg();
    auto dit = make_dit<float>(cfg, 3);
    std::vector<CaptionTokens> toks(3, tokenize_caption("square high", cfg.vocab, cfg.max_tokens));
    int frames = 11;  // not the configured training length
    auto x = random_latents(3, cfg.latent_dim, frames, 7);
    auto out = dit_forward(dit, x, 3, 0.5, toks);
    CHECK(out->shape == ad::Shape{3, cfg.latent_dim, frames});

    CHECK_THROWS_AS(dit_forward(dit, x, 2, 0.5, toks), Error);  // size mismatch
    std::vector<CaptionTokens> two(toks.begin(), toks.begin() + 2);
    CHECK_THROWS_AS(dit_forward(dit, x, 3, 0.5, two), Error);  // caption count
    std::vector<CaptionTokens> bad(3, tokenize_caption("sine mid", cfg.vocab, 3));
    CHECK_THROWS_AS(dit_forward(dit, x, 3, 0.5, bad), Error);  // mask length
}

TEST_CASE("padded caption positions are fully masked") {
    DitConfig cfg = small_cfg();
    auto dit = make_dit<float>(cfg, 21);
    perturb_params(dit, 22);
    std::vector<CaptionTokens> toks{tokenize_caption("sine mid", cfg.vocab, cfg.max_tokens)};
    auto x = random_latents(1, cfg.latent_dim, cfg.frames, 1);
    auto before = dit_forward(dit, x, 1, 0.4, toks)->value;

    // rewrite the pad embedding row; only padded (masked) positions use it
    for (int j = 0; j < cfg.width; ++j) dit.token_table->value[std::size_t(j)] += 7.5f;
    auto after = dit_forward(dit, x, 1, 0.4, toks)->value;
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);

    // a live token's row does change the output
    int live_row = cfg.vocab.id_of("sine");
    for (int j = 0; j < cfg.width; ++j)
        dit.token_table->value[std::size_t(live_row) * cfg.width + j] += 7.5f;
    auto changed = dit_forward(dit, x, 1, 0.4, toks)->value;
    bool any = false;
    for (std::size_t i = 0; i < before.size(); ++i) any = any || changed[i] != before[i];
    CHECK(any);
}

TEST_CASE("attention weights: rows sum to one, masked keys get exactly zero") {
    Rng rng(4, 4);
    int b = 2, tq = 3, tk = 5;
    std::vector<float> scores(std::size_t(b) * tq * tk);
    for (auto& v : scores) v = float(rng.normal());
    std::vector<int> mask{1, 1, 0, 1, 0, 0, 1, 1, 1, 0};  // per (b, tk)
    std::vector<float> biased = scores;
    for (int bi = 0; bi < b; ++bi)
        for (int q = 0; q < tq; ++q)
            for (int k = 0; k < tk; ++k)
                if (!mask[std::size_t(bi) * tk + k])
                    biased[(std::size_t(bi) * tq + q) * tk + k] += -1e9f;
    auto probs = ad::softmax_last(ad::constant<float>({b, tq, tk}, biased));
    for (int bi = 0; bi < b; ++bi)
        for (int q = 0; q < tq; ++q) {
            double row = 0;
            for (int k = 0; k < tk; ++k) {
                float p = probs->value[(std::size_t(bi) * tq + q) * tk + k];
                row += p;
                if (!mask[std::size_t(bi) * tk + k]) CHECK(p == 0.0f);
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
        }
}

TEST_CASE("permuting the batch permutes outputs identically") {
    DitConfig cfg = small_cfg();
    auto dit = make_dit<float>(cfg, 17);
    perturb_params(dit, 18);
    std::vector<std::string> caps{"sine mid", "chirp-up low", "square high"};
    std::vector<CaptionTokens> toks;
    for (const auto& c : caps) toks.push_back(tokenize_caption(c, cfg.vocab, cfg.max_tokens));
    std::size_t per = std::size_t(cfg.latent_dim) * cfg.frames;
    auto x = random_latents(3, cfg.latent_dim, cfg.frames, 55);
    auto out = dit_forward(dit, x, 3, 0.6, toks)->value;

    std::vector<int> perm{2, 0, 1};
    std::vector<float> xp(x.size());
    std::vector<CaptionTokens> tp;
    for (int i = 0; i < 3; ++i) {
        std::copy(x.begin() + long(perm[std::size_t(i)] * per),
                  x.begin() + long((perm[std::size_t(i)] + 1) * per), xp.begin() + long(i * per));
        tp.push_back(toks[std::size_t(perm[std::size_t(i)])]);
    }
    auto outp = dit_forward(dit, xp, 3, 0.6, tp)->value;
    for (int i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < per; ++j)
            CHECK(outp[std::size_t(i) * per + j] == out[std::size_t(perm[std::size_t(i)]) * per + j]);
}

TEST_CASE("gradients match finite differences on a one-block width-16 model") {
    DitConfig cfg;
    cfg.latent_dim = 4;
    cfg.frames = 6;
    cfg.width = 16;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.time_dim = 8;
    cfg.max_tokens = 3;
    cfg.vocab = Vocabulary::build({"sine mid"});
    auto dit = make_dit<double>(cfg, 11);
    perturb_params(dit, 12);

    std::vector<CaptionTokens> toks{tokenize_caption("sine mid", cfg.vocab, cfg.max_tokens),
                                    tokenize_caption("", cfg.vocab, cfg.max_tokens)};
    std::vector<double> x1(std::size_t(2) * cfg.latent_dim * cfg.frames);
    Rng rng(6, 6);
    for (auto& v : x1) v = rng.normal();
    FlowSample<double> fs;
    {
        Rng prng(7, 7);
        fs = make_path_sample(x1, prng, 0.43);
    }
    auto build = [&]() {
        auto v_hat = dit_forward(dit, fs.xt, 2, fs.t, toks);
        return fm_velocity_loss(v_hat, fs);
    };
    double err = flowvoc::gradcheck::fd_max_rel_err(dit.ps.vars(), build);
    CHECK(err < 1e-2);
}

TEST_CASE("training is deterministic and rejects inconsistent inputs") {
    CHECK(DitTrainConfig{}.drop_prob == 0.1);

    DitConfig cfg = small_cfg();
    cfg.vocab = Vocabulary();  // let training build it from the captions
    auto latents = toy_latents(4, cfg.latent_dim, cfg.frames, 31);
    std::vector<std::string> caps{"sine mid", "chirp-up low", "square high", "sine mid"};
    DitTrainConfig tcfg;
    tcfg.steps = 3;
    tcfg.batch = 2;
    tcfg.seed = 9;

    auto a = train_dit(latents, caps, cfg, tcfg);
    auto b = train_dit(latents, caps, cfg, tcfg);
    CHECK(a.loss_history == b.loss_history);
    CHECK(same_checkpoint(a.ckpt, b.ckpt));
    CHECK(a.ckpt.get_string("provider") == "semantic-oracle");
    CHECK(a.ckpt.get_scalar("dit.cfg.frames") == float(cfg.frames));

    auto mixed = latents;
    mixed[1].provider = "acoustic-mel";
    CHECK_THROWS_WITH_AS(train_dit(mixed, caps, cfg, tcfg), doctest::Contains("provider"), Error);

    auto wrong = latents;
    wrong[2].dim += 1;
    wrong[2].data.resize(std::size_t(wrong[2].dim) * wrong[2].frames);
    CHECK_THROWS_AS(train_dit(wrong, caps, cfg, tcfg), Error);

    auto ragged = toy_latents(4, cfg.latent_dim, cfg.frames, 31);
    ragged[3].frames -= 1;
    ragged[3].data.resize(std::size_t(ragged[3].dim) * ragged[3].frames);
    CHECK_THROWS_AS(train_dit(ragged, caps, cfg, tcfg), Error);
}

TEST_CASE("standardization stats land in the checkpoint and invert cleanly") {
    DitConfig cfg = small_cfg();
    auto latents = toy_latents(6, cfg.latent_dim, cfg.frames, 77);
    std::vector<std::string> caps(6, "sine mid");
    DitTrainConfig tcfg;
    tcfg.steps = 1;
    auto res = train_dit(latents, caps, cfg, tcfg);

    const auto& mean = res.ckpt.get("dit.stats.mean").values;
    const auto& sdev = res.ckpt.get("dit.stats.std").values;
    REQUIRE(int(mean.size()) == cfg.latent_dim);
    REQUIRE(int(sdev.size()) == cfg.latent_dim);
    for (int d = 0; d < cfg.latent_dim; ++d) {
        double m = 0, v = 0, n = double(latents.size()) * cfg.frames;
        for (const auto& l : latents)
            for (int f = 0; f < cfg.frames; ++f) m += l.at(0, d, f) / n;
        for (const auto& l : latents)
            for (int f = 0; f < cfg.frames; ++f)
                v += (l.at(0, d, f) - m) * (l.at(0, d, f) - m) / n;
        CHECK(mean[std::size_t(d)] == doctest::Approx(m).epsilon(1e-4));
        CHECK(sdev[std::size_t(d)] == doctest::Approx(std::sqrt(v)).epsilon(1e-4));
        CHECK(sdev[std::size_t(d)] > 0.0f);
    }
}

TEST_CASE("generation: defaults, determinism, guidance behavior") {
    SamplerConfig defs = dit_sampler_defaults();
    CHECK(defs.steps == 100);
    CHECK(defs.guidance_scale == 3.5);
    CHECK(defs.prediction == SamplerConfig::Prediction::Velocity);

    DitConfig cfg = small_cfg();
    auto latents = toy_latents(6, cfg.latent_dim, cfg.frames, 41);
    std::vector<std::string> caps{"sine mid",   "chirp-up low", "square high",
                                  "chirp-up low", "sine mid",   "square high"};
    DitTrainConfig tcfg;
    tcfg.steps = 40;
    tcfg.batch = 2;
    auto res = train_dit(latents, caps, cfg, tcfg);

    SamplerConfig scfg = dit_sampler_defaults();
    scfg.steps = 6;
    scfg.seed = 3;
    LatentSeq g = generate_latents("sine mid", res.ckpt, scfg);
    CHECK(g.dim == cfg.latent_dim);
    CHECK(g.frames == cfg.frames);
    CHECK(g.frame_rate == doctest::Approx(80.0));
    CHECK(g.provider == "semantic-oracle");

    LatentSeq g2 = generate_latents("sine mid", res.ckpt, scfg);
    CHECK(g.data == g2.data);

    LatentSeq other = generate_latents("square high", res.ckpt, scfg);
    bool differs = false;
    for (std::size_t i = 0; i < g.data.size(); ++i) differs = differs || g.data[i] != other.data[i];
    CHECK(differs);

    // guidance 0 ignores the caption entirely
    scfg.guidance_scale = 0.0;
    LatentSeq u1 = generate_latents("sine mid", res.ckpt, scfg);
    LatentSeq u2 = generate_latents("square high", res.ckpt, scfg);
    CHECK(u1.data == u2.data);

    SamplerConfig bad = scfg;
    bad.prediction = SamplerConfig::Prediction::Data;
    CHECK_THROWS_AS(generate_latents("sine mid", res.ckpt, bad), Error);
}

TEST_CASE("checkpoint round trip preserves the forward pass") {
    DitConfig cfg = small_cfg();
    auto latents = toy_latents(4, cfg.latent_dim, cfg.frames, 13);
    std::vector<std::string> caps{"sine mid", "chirp-up low", "square high", "sine mid"};
    DitTrainConfig tcfg;
    tcfg.steps = 5;
    auto res = train_dit(latents, caps, cfg, tcfg);

    Dit<float> loaded = load_dit(res.ckpt);
    CHECK(loaded.cfg.vocab.words == Vocabulary::build(caps).words);

    std::vector<CaptionTokens> toks{
        tokenize_caption("chirp-up low", loaded.cfg.vocab, loaded.cfg.max_tokens)};
    auto x = random_latents(1, cfg.latent_dim, cfg.frames, 2);

    // rebuild from the trained store vs the loaded one: identical outputs
    Dit<float> trained = make_dit<float>(loaded.cfg, tcfg.seed);
    trained.ps.from_checkpoint(res.ckpt, "dit.p.");
    auto y1 = dit_forward(trained, x, 1, 0.8, toks)->value;
    auto y2 = dit_forward(loaded, x, 1, 0.8, toks)->value;
    CHECK(y1 == y2);
}

TEST_CASE("desk-scale training curve: loss falls below 60% of its opening average") {
    CorpusSpec spec = CorpusSpec::defaults();
    std::vector<LatentSeq> ls;
    std::vector<std::string> caps;
    for (const auto& cls : spec.classes) {
        AudioClip clip = synth_clip(cls, spec.clip_seconds, spec.sample_rate, spec.snr_db, 42);
        clip.label = cls.name + " " + cls.bucket;
        ls.push_back(encode_semantic_oracle(clip));
        caps.push_back(clip.label);
    }
    DitTrainConfig tcfg;
    tcfg.steps = 5000;
    auto res = train_dit(ls, caps, DitConfig::desk(), tcfg);
    double head = 0, tail = 0;
    for (int i = 0; i < 100; ++i) {
        head += res.loss_history[std::size_t(i)] / 100.0;
        tail += res.loss_history[res.loss_history.size() - 100 + std::size_t(i)] / 100.0;
    }
    CHECK(tail < 0.6 * head);
}
