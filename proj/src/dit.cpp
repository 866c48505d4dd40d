#include "flowvoc/dit.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <sstream>
#include <utility>

#include "flowvoc/error.hpp"
#include "flowvoc/optim.hpp"
#include "flowvoc/rng.hpp"

namespace flowvoc {

using ad::Var;

namespace {

std::vector<std::string> split_words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

}  // namespace

int Vocabulary::id_of(const std::string& word) const {
    for (std::size_t i = 2; i < words.size(); ++i)
        if (words[i] == word) return int(i);
    return unk_id();
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions) {
    std::set<std::string> uniq;
    for (const auto& c : captions)
        for (const auto& w : split_words(c)) uniq.insert(w);
    Vocabulary v;
    v.words = {"<pad>", "<unk>"};
    v.words.insert(v.words.end(), uniq.begin(), uniq.end());
    return v;
}

CaptionTokens tokenize_caption(const std::string& caption, const Vocabulary& vocab,
                               int max_tokens) {
    require(max_tokens >= 1, ErrorKind::Config, "max_tokens must be positive");
    std::vector<std::string> ws = split_words(caption);
    if (ws.empty()) ws.push_back("<unk>");  // unconditional branch
    require(int(ws.size()) <= max_tokens, ErrorKind::Config,
            "caption has " + std::to_string(ws.size()) + " words, limit is " +
                std::to_string(max_tokens));
    CaptionTokens t;
    t.ids.assign(std::size_t(max_tokens), 0);
    t.mask.assign(std::size_t(max_tokens), 0);
    for (std::size_t i = 0; i < ws.size(); ++i) {
        t.ids[i] = ws[i] == "<unk>" ? vocab.unk_id() : vocab.id_of(ws[i]);
        t.mask[i] = 1;
    }
    return t;
}

DitConfig DitConfig::paper() {
    DitConfig c;
    c.latent_dim = 768;
    c.frames = 500;
    c.frame_rate = 50;
    c.width = 1024;
    c.blocks = 24;
    c.heads = 16;
    c.time_dim = 256;
    c.max_tokens = 16;
    return c;
}

template <class T>
Dit<T> make_dit(const DitConfig& cfg, std::uint64_t seed) {
    require(cfg.latent_dim > 0 && cfg.width > 0 && cfg.blocks > 0, ErrorKind::Config,
            "latent_dim, width and blocks must be positive");
    require(cfg.width % cfg.heads == 0, ErrorKind::Config, "width must divide into heads");
    require(cfg.vocab.size() >= 2, ErrorKind::Config, "vocabulary is missing");

    Dit<T> d{cfg, nn::ParamStore<T>(seed), {}, {}, {}, {}, {}, {}, {}};
    d.token_table = d.ps.param("tok.table", {cfg.vocab.size(), cfg.width}, 0.02);
    d.lat_in = nn::make_linear(d.ps, "in", cfg.latent_dim, cfg.width);
    d.time1 = nn::make_linear(d.ps, "t1", cfg.time_dim, cfg.width);
    d.time2 = nn::make_linear(d.ps, "t2", cfg.width, cfg.width);
    for (int i = 0; i < cfg.blocks; ++i) {
        std::string p = "b" + std::to_string(i) + ".";
        DitBlock<T> b;
        b.adaln = nn::make_linear(d.ps, p + "adaln", cfg.width, 6 * cfg.width, 0.0);
        b.self_attn = nn::make_attention(d.ps, p + "sa", cfg.width, cfg.heads);
        b.cross_attn = nn::make_attention(d.ps, p + "ca", cfg.width, cfg.heads);
        b.m1 = nn::make_linear(d.ps, p + "m1", cfg.width, 2 * cfg.width);
        b.m2 = nn::make_linear(d.ps, p + "m2", 2 * cfg.width, cfg.width);
        d.blocks.push_back(std::move(b));
    }
    d.final_mod = nn::make_linear(d.ps, "final.mod", cfg.width, 2 * cfg.width, 0.0);
    d.final_out = nn::make_linear(d.ps, "final.out", cfg.width, cfg.latent_dim, 0.0);
    return d;
}

template <class T>
Var<T> embed_tokens(const Dit<T>& dit, const std::vector<CaptionTokens>& tokens,
                    std::vector<int>* key_mask) {
    int b = int(tokens.size());
    int s = dit.cfg.max_tokens;
    std::vector<int> rows;
    rows.reserve(std::size_t(b) * s);
    if (key_mask) key_mask->clear();
    for (const CaptionTokens& t : tokens) {
        require(int(t.ids.size()) == s && int(t.mask.size()) == s, ErrorKind::Contract,
                "caption token length != max_tokens");
        rows.insert(rows.end(), t.ids.begin(), t.ids.end());
        if (key_mask) key_mask->insert(key_mask->end(), t.mask.begin(), t.mask.end());
    }
    auto emb = ad::gather_rows(dit.token_table, rows);
    return ad::reshape(emb, {b, s, dit.cfg.width});
}

namespace {

// shifted/scaled layernorm: norm(x) * (1 + scale) + shift, per batch row
template <class T>
Var<T> modulate(const Var<T>& x, const Var<T>& scale, const Var<T>& shift) {
    auto h = ad::layernorm_last(x, T(1e-5));
    h = ad::mul_bcast(h, ad::add_scalar(scale, T(1)), 1);
    return ad::add_bcast(h, shift, 1);
}

template <class T>
Var<T> time_vector(const Dit<T>& dit, int batch, double t) {
    std::vector<double> pe = nn::sin_embedding(1000.0 * t, dit.cfg.time_dim);
    std::vector<T> row(pe.begin(), pe.end());
    std::vector<T> vals;
    vals.reserve(std::size_t(batch) * row.size());
    for (int b = 0; b < batch; ++b) vals.insert(vals.end(), row.begin(), row.end());
    auto x = ad::constant<T>({batch, dit.cfg.time_dim}, std::move(vals));
    return dit.time2(ad::gelu(dit.time1(x)));
}

}  // namespace

template <class T>
Var<T> dit_forward(const Dit<T>& dit, const std::vector<T>& latents, int batch, double t,
                   const std::vector<CaptionTokens>& tokens) {
    const DitConfig& cfg = dit.cfg;
    require(batch >= 1 && int(tokens.size()) == batch, ErrorKind::Contract,
            "need one caption per batch row");
    require(latents.size() % (std::size_t(batch) * cfg.latent_dim) == 0, ErrorKind::Contract,
            "latent size is not batch * dim * frames");
    int frames = int(latents.size() / (std::size_t(batch) * cfg.latent_dim));
    require(frames > 0, ErrorKind::Contract, "empty latent sequence");

    auto x = ad::constant<T>({batch, cfg.latent_dim, frames}, std::vector<T>(latents));
    auto h = dit.lat_in(ad::permute(x, {0, 2, 1}));  // (B, frames, W)

    std::vector<T> pos;
    pos.reserve(std::size_t(frames) * cfg.width);
    for (int f = 0; f < frames; ++f) {
        std::vector<double> pe = nn::sin_embedding(double(f), cfg.width);
        pos.insert(pos.end(), pe.begin(), pe.end());
    }
    h = ad::add_bcast(h, ad::constant<T>({frames, cfg.width}, std::move(pos)), 0);

    auto tv = time_vector(dit, batch, t);
    std::vector<int> key_mask;
    auto c_emb = embed_tokens(dit, tokens, &key_mask);

    int w = cfg.width;
    for (const DitBlock<T>& blk : dit.blocks) {
        auto mod = blk.adaln(ad::gelu(tv));  // (B, 6W)
        auto shift_a = ad::slice(mod, 1, 0 * w, w);
        auto scale_a = ad::slice(mod, 1, 1 * w, w);
        auto gate_a = ad::slice(mod, 1, 2 * w, w);
        auto shift_m = ad::slice(mod, 1, 3 * w, w);
        auto scale_m = ad::slice(mod, 1, 4 * w, w);
        auto gate_m = ad::slice(mod, 1, 5 * w, w);

        auto hm = modulate(h, scale_a, shift_a);
        h = ad::add(h, ad::mul_bcast(blk.self_attn(hm, hm), gate_a, 1));
        h = ad::add(blk.cross_attn(h, c_emb, key_mask), h);
        auto m = blk.m2(ad::gelu(blk.m1(modulate(h, scale_m, shift_m))));
        h = ad::add(h, ad::mul_bcast(m, gate_m, 1));
    }

    auto fmod = dit.final_mod(ad::gelu(tv));  // (B, 2W)
    auto out = dit.final_out(
        modulate(h, ad::slice(fmod, 1, 0, w), ad::slice(fmod, 1, w, w)));
    return ad::permute(out, {0, 2, 1});  // (B, D, frames)
}

namespace {

void put_dit_config(Checkpoint& ck, const DitConfig& cfg) {
    ck.put_scalar("dit.cfg.latent_dim", float(cfg.latent_dim));
    ck.put_scalar("dit.cfg.frames", float(cfg.frames));
    ck.put_scalar("dit.cfg.frame_rate", float(cfg.frame_rate));
    ck.put_scalar("dit.cfg.width", float(cfg.width));
    ck.put_scalar("dit.cfg.blocks", float(cfg.blocks));
    ck.put_scalar("dit.cfg.heads", float(cfg.heads));
    ck.put_scalar("dit.cfg.time_dim", float(cfg.time_dim));
    ck.put_scalar("dit.cfg.max_tokens", float(cfg.max_tokens));
    std::string joined;
    for (std::size_t i = 0; i < cfg.vocab.words.size(); ++i) {
        if (i) joined += ' ';
        joined += cfg.vocab.words[i];
    }
    ck.put_string("dit.cfg.vocab", joined);
}

DitConfig dit_config_from(const Checkpoint& ck) {
    DitConfig cfg;
    cfg.latent_dim = int(ck.get_scalar("dit.cfg.latent_dim"));
    cfg.frames = int(ck.get_scalar("dit.cfg.frames"));
    cfg.frame_rate = ck.get_scalar("dit.cfg.frame_rate");
    cfg.width = int(ck.get_scalar("dit.cfg.width"));
    cfg.blocks = int(ck.get_scalar("dit.cfg.blocks"));
    cfg.heads = int(ck.get_scalar("dit.cfg.heads"));
    cfg.time_dim = int(ck.get_scalar("dit.cfg.time_dim"));
    cfg.max_tokens = int(ck.get_scalar("dit.cfg.max_tokens"));
    cfg.vocab.words = split_words(ck.get_string("dit.cfg.vocab"));
    return cfg;
}

}  // namespace

DitTrainResult train_dit(const std::vector<LatentSeq>& latents,
                         const std::vector<std::string>& captions, const DitConfig& cfg,
                         const DitTrainConfig& tcfg) {
    require(!latents.empty() && latents.size() == captions.size(), ErrorKind::Contract,
            "need one caption per latent sequence");
    require(tcfg.batch >= 1, ErrorKind::Config, "batch must be positive");

    const std::string provider = latents[0].provider;
    for (const LatentSeq& l : latents) {
        require(l.provider == provider, ErrorKind::Contract, "mixed latent providers");
        require(l.batch == 1, ErrorKind::Contract, "one sequence per caption");
        require(l.dim == cfg.latent_dim, ErrorKind::Config,
                "latent dim " + std::to_string(l.dim) + " != configured " +
                    std::to_string(cfg.latent_dim));
        require(l.frames == latents[0].frames, ErrorKind::Config,
                "latent sequences must share a frame count");
        require(std::abs(l.frame_rate - latents[0].frame_rate) < 1e-9, ErrorKind::Config,
                "latent sequences must share a frame rate");
    }

    DitConfig rcfg = cfg;
    rcfg.frames = latents[0].frames;
    rcfg.frame_rate = latents[0].frame_rate;
    if (rcfg.vocab.size() < 2) rcfg.vocab = Vocabulary::build(captions);

    int dim = rcfg.latent_dim, frames = rcfg.frames;
    std::size_t per_item = std::size_t(dim) * frames;

    // per-channel stats over the whole corpus; training runs in standardized
    // units, generation maps back
    std::vector<double> mean(dim, 0.0), var(dim, 0.0);
    double denom = double(latents.size()) * frames;
    for (const LatentSeq& l : latents)
        for (int d = 0; d < dim; ++d)
            for (int f = 0; f < frames; ++f) mean[std::size_t(d)] += l.at(0, d, f) / denom;
    for (const LatentSeq& l : latents)
        for (int d = 0; d < dim; ++d)
            for (int f = 0; f < frames; ++f) {
                double c = l.at(0, d, f) - mean[std::size_t(d)];
                var[std::size_t(d)] += c * c / denom;
            }
    std::vector<double> sdev(dim);
    for (int d = 0; d < dim; ++d) sdev[std::size_t(d)] = std::max(std::sqrt(var[std::size_t(d)]), 1e-6);

    std::vector<std::vector<float>> z(latents.size());
    for (std::size_t i = 0; i < latents.size(); ++i) {
        z[i].resize(per_item);
        for (int d = 0; d < dim; ++d)
            for (int f = 0; f < frames; ++f)
                z[i][std::size_t(d) * frames + f] =
                    float((latents[i].at(0, d, f) - mean[std::size_t(d)]) / sdev[std::size_t(d)]);
    }

    std::vector<CaptionTokens> cond_toks;
    for (const std::string& c : captions)
        cond_toks.push_back(tokenize_caption(c, rcfg.vocab, rcfg.max_tokens));
    CaptionTokens uncond = tokenize_caption("", rcfg.vocab, rcfg.max_tokens);

    Dit<float> dit = make_dit<float>(rcfg, tcfg.seed);
    auto params = dit.ps.vars();
    AdamW<float> opt(float(tcfg.lr), float(tcfg.weight_decay));

    DitTrainResult res;
    res.loss_history.reserve(tcfg.steps);
    for (int step = 0; step < tcfg.steps; ++step) {
        Rng rng(tcfg.seed, 0xd1700000ull + std::uint64_t(step));
        std::vector<float> x1;
        x1.reserve(std::size_t(tcfg.batch) * per_item);
        std::vector<CaptionTokens> toks;
        for (int b = 0; b < tcfg.batch; ++b) {
            std::size_t i = std::size_t(rng.uniform_int(0, int64_t(latents.size()) - 1));
            x1.insert(x1.end(), z[i].begin(), z[i].end());
            toks.push_back(rng.uniform() < tcfg.drop_prob ? uncond : cond_toks[i]);
        }
        double t = rng.uniform();
        FlowSample<float> fs = make_path_sample(x1, rng, t, tcfg.sigma);
        auto v_hat = dit_forward(dit, fs.xt, tcfg.batch, fs.t, toks);
        auto loss = fm_velocity_loss(v_hat, fs);

        AdamW<float>::zero_grad(params);
        ad::backward(loss);
        opt.step(params);
        res.loss_history.push_back(loss->value[0]);
    }

    put_dit_config(res.ckpt, rcfg);
    res.ckpt.put_string("provider", provider);
    std::vector<float> mf(mean.begin(), mean.end()), sf(sdev.begin(), sdev.end());
    res.ckpt.put("dit.stats.mean", {dim}, std::move(mf));
    res.ckpt.put("dit.stats.std", {dim}, std::move(sf));
    dit.ps.to_checkpoint(res.ckpt, "dit.p.");
    return res;
}

Dit<float> load_dit(const Checkpoint& ck) {
    Dit<float> dit = make_dit<float>(dit_config_from(ck), 0);
    dit.ps.from_checkpoint(ck, "dit.p.");
    return dit;
}

SamplerConfig dit_sampler_defaults() {
    SamplerConfig s;
    s.steps = 100;
    s.guidance_scale = 3.5;
    s.prediction = SamplerConfig::Prediction::Velocity;
    return s;
}

LatentSeq generate_latents(const std::string& caption, const Checkpoint& ck,
                           const SamplerConfig& scfg) {
    require(scfg.prediction == SamplerConfig::Prediction::Velocity, ErrorKind::Config,
            "latent sampling predicts velocity");
    Dit<float> dit = load_dit(ck);
    const DitConfig& cfg = dit.cfg;

    CaptionTokens toks_c = tokenize_caption(caption, cfg.vocab, cfg.max_tokens);
    CaptionTokens toks_u = tokenize_caption("", cfg.vocab, cfg.max_tokens);
    FlowModel<float> cond = [&](const std::vector<float>& x, double t) {
        return dit_forward(dit, x, 1, t, {toks_c})->value;
    };
    FlowModel<float> uncond = [&](const std::vector<float>& x, double t) {
        return dit_forward(dit, x, 1, t, {toks_u})->value;
    };

    Rng rng(scfg.seed, 0xd17ca110ull);
    auto x0 = draw_noise<float>(std::size_t(cfg.latent_dim) * cfg.frames, scfg.sigma, rng);
    std::vector<float> xs = euler_sample(cond, uncond, std::move(x0), scfg);

    const auto& mean = ck.get("dit.stats.mean").values;
    const auto& sdev = ck.get("dit.stats.std").values;
    LatentSeq out;
    out.batch = 1;
    out.dim = cfg.latent_dim;
    out.frames = cfg.frames;
    out.frame_rate = cfg.frame_rate;
    out.provider = ck.get_string("provider");
    out.data.resize(xs.size());
    for (int d = 0; d < cfg.latent_dim; ++d)
        for (int f = 0; f < cfg.frames; ++f)
            out.at(0, d, f) =
                xs[std::size_t(d) * cfg.frames + f] * sdev[std::size_t(d)] + mean[std::size_t(d)];
    return out;
}

#define FLOWVOC_DIT_INSTANTIATE(T)                                                              \
    template Dit<T> make_dit<T>(const DitConfig&, std::uint64_t);                               \
    template Var<T> embed_tokens<T>(const Dit<T>&, const std::vector<CaptionTokens>&,           \
                                    std::vector<int>*);                                         \
    template Var<T> dit_forward<T>(const Dit<T>&, const std::vector<T>&, int, double,           \
                                   const std::vector<CaptionTokens>&);

FLOWVOC_DIT_INSTANTIATE(float)
FLOWVOC_DIT_INSTANTIATE(double)

}  // namespace flowvoc
