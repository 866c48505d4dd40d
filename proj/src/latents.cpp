#include "flowvoc/latents.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowvoc/dsp.hpp"
#include "flowvoc/error.hpp"
#include "flowvoc/nn.hpp"
#include "flowvoc/optim.hpp"
#include "flowvoc/rng.hpp"

namespace flowvoc {

std::vector<double> orthonormal_rows(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed, 0x0f70);
    std::vector<double> m(std::size_t(rows) * cols);
    for (double& v : m) v = rng.normal();
    for (int r = 0; r < rows; ++r) {
        double* row = &m[std::size_t(r) * cols];
        for (int p = 0; p < r; ++p) {
            const double* prev = &m[std::size_t(p) * cols];
            double dot = std::inner_product(row, row + cols, prev, 0.0);
            for (int c = 0; c < cols; ++c) row[c] -= dot * prev[c];
        }
        double norm = std::sqrt(std::inner_product(row, row + cols, row, 0.0));
        require(norm > 1e-9, ErrorKind::Numeric, "degenerate projection draw");
        for (int c = 0; c < cols; ++c) row[c] /= norm;
    }
    return m;
}

std::vector<double> log_mel_frames(const AudioClip& clip, int n_mels, int hop) {
    StftPlan plan = StftPlan::make(hop, clip.sample_rate);
    MelConfig mc = MelConfig::make(n_mels, plan);
    return mel_spectrogram(clip.samples, mc);
}

LatentSeq encode_semantic_oracle(const AudioClip& clip, const OracleConfig& cfg) {
    std::vector<double> mel = log_mel_frames(clip, cfg.n_mels, cfg.hop);
    int frames = int(mel.size()) / cfg.n_mels;
    int D = cfg.proj_dims + cfg.class_dims;

    std::vector<double> proj_m = orthonormal_rows(cfg.proj_dims, cfg.n_mels, cfg.seed);
    std::vector<double> proj(std::size_t(cfg.proj_dims) * frames);
    for (int r = 0; r < cfg.proj_dims; ++r)
        for (int t = 0; t < frames; ++t) {
            double acc = 0.0;
            for (int m = 0; m < cfg.n_mels; ++m)
                acc += proj_m[std::size_t(r) * cfg.n_mels + m] * mel[std::size_t(m) * frames + t];
            proj[std::size_t(r) * frames + t] = acc;
        }

    // centered moving average, window shrinking at the edges
    int half = cfg.smooth_width / 2;
    std::vector<double> smooth(proj.size());
    for (int r = 0; r < cfg.proj_dims; ++r)
        for (int t = 0; t < frames; ++t) {
            int lo = std::max(0, t - half), hi = std::min(frames - 1, t + half);
            double acc = 0.0;
            for (int u = lo; u <= hi; ++u) acc += proj[std::size_t(r) * frames + u];
            smooth[std::size_t(r) * frames + t] = acc / (hi - lo + 1);
        }

    double rms = 0.0;
    for (double v : smooth) rms += v * v;
    rms = std::sqrt(rms / double(smooth.size()));

    // fixed class direction, scaled to the projection's overall RMS
    std::vector<double> cls(cfg.class_dims, 0.0);
    if (!clip.label.empty()) {
        Rng rng(cfg.seed, hash_string(clip.label));
        double norm = 0.0;
        for (double& v : cls) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : cls) v *= rms / norm;
    }

    LatentSeq out;
    out.batch = 1;
    out.dim = D;
    out.frames = frames;
    out.frame_rate = double(clip.sample_rate) / cfg.hop;
    out.provider = "semantic-oracle";
    out.data.resize(std::size_t(D) * frames);
    for (int r = 0; r < cfg.proj_dims; ++r)
        for (int t = 0; t < frames; ++t)
            out.at(0, r, t) = float(smooth[std::size_t(r) * frames + t]);
    for (int r = 0; r < cfg.class_dims; ++r)
        for (int t = 0; t < frames; ++t) out.at(0, cfg.proj_dims + r, t) = float(cls[r]);
    return out;
}

LatentSeq encode_acoustic_mel(const AudioClip& clip, int n_mels, int hop) {
    std::vector<double> mel = log_mel_frames(clip, n_mels, hop);
    int frames = int(mel.size()) / n_mels;
    LatentSeq out;
    out.batch = 1;
    out.dim = n_mels;
    out.frames = frames;
    out.frame_rate = double(clip.sample_rate) / hop;
    out.provider = "acoustic-mel";
    out.data.assign(mel.begin(), mel.end());
    return out;
}

// ---------------------------------------------------------------------------
// toy MAE

namespace {

using ad::Var;

template <class T>
struct MaeBlock {
    nn::Attention<T> attn;
    nn::Linear<T> m1, m2;
};

template <class T>
MaeBlock<T> make_mae_block(nn::ParamStore<T>& ps, const std::string& name, int width, int heads) {
    MaeBlock<T> blk;
    blk.attn = nn::make_attention(ps, name + ".attn", width, heads);
    blk.m1 = nn::make_linear(ps, name + ".m1", width, 2 * width);
    blk.m2 = nn::make_linear(ps, name + ".m2", 2 * width, width);
    return blk;
}

// pre-LN transformer block
template <class T>
Var<T> run_mae_block(const MaeBlock<T>& blk, const Var<T>& x) {
    auto a = ad::layernorm_last(x, T(1e-5));
    auto y = ad::add(x, blk.attn(a, a));
    auto b = ad::layernorm_last(y, T(1e-5));
    return ad::add(y, blk.m2(ad::gelu(blk.m1(b))));
}

template <class T>
struct MaeEncoder {
    nn::Linear<T> embed;  // patch values -> width
    std::vector<MaeBlock<T>> blocks;
    int width = 0;
};

template <class T>
MaeEncoder<T> make_mae_encoder(nn::ParamStore<T>& ps, int patch_size, int width, int n_blocks,
                               int heads) {
    MaeEncoder<T> enc;
    enc.width = width;
    enc.embed = nn::make_linear(ps, "embed", patch_size, width);
    for (int i = 0; i < n_blocks; ++i)
        enc.blocks.push_back(make_mae_block(ps, "blk" + std::to_string(i), width, heads));
    return enc;
}

// sinusoidal position table for a token sequence, as a broadcastable constant
template <class T>
Var<T> position_table(int batch, int tokens, int width) {
    std::vector<T> pos(std::size_t(batch) * tokens * width);
    for (int p = 0; p < tokens; ++p) {
        std::vector<double> e = nn::sin_embedding(double(p), width);
        for (int b = 0; b < batch; ++b)
            for (int c = 0; c < width; ++c)
                pos[(std::size_t(b) * tokens + p) * width + c] = T(e[c]);
    }
    return ad::constant<T>({batch, tokens, width}, std::move(pos));
}

// tokens (B, S, patch_size) -> encoded (B, S, width)
template <class T>
Var<T> run_mae_encoder(const MaeEncoder<T>& enc, const Var<T>& tokens) {
    int B = tokens->shape[0], S = tokens->shape[1];
    auto x = ad::add(enc.embed(tokens), position_table<T>(B, S, enc.width));
    for (const auto& blk : enc.blocks) x = run_mae_block(blk, x);
    return x;
}

void put_mae_config(Checkpoint& ck, const MaeConfig& cfg) {
    ck.put_string("provider", "toy-mae");
    ck.put_scalar("mae.n_mels", float(cfg.n_mels));
    ck.put_scalar("mae.hop", float(cfg.hop));
    ck.put_scalar("mae.patch_freq", float(cfg.patch_freq));
    ck.put_scalar("mae.patch_time", float(cfg.patch_time));
    ck.put_scalar("mae.enc_blocks", float(cfg.enc_blocks));
    ck.put_scalar("mae.width", float(cfg.width));
    ck.put_scalar("mae.heads", float(cfg.heads));
    ck.put_scalar("mae.seed", float(cfg.seed));
}

MaeConfig mae_config_from(const Checkpoint& ck) {
    MaeConfig cfg;
    cfg.n_mels = int(ck.get_scalar("mae.n_mels"));
    cfg.hop = int(ck.get_scalar("mae.hop"));
    cfg.patch_freq = int(ck.get_scalar("mae.patch_freq"));
    cfg.patch_time = int(ck.get_scalar("mae.patch_time"));
    cfg.enc_blocks = int(ck.get_scalar("mae.enc_blocks"));
    cfg.width = int(ck.get_scalar("mae.width"));
    cfg.heads = int(ck.get_scalar("mae.heads"));
    cfg.seed = std::uint64_t(ck.get_scalar("mae.seed"));
    return cfg;
}

Patches clip_patches(const AudioClip& clip, const MaeConfig& cfg) {
    std::vector<double> mel = log_mel_frames(clip, cfg.n_mels, cfg.hop);
    int frames = int(mel.size()) / cfg.n_mels;
    return patchify(mel, cfg.n_mels, frames, cfg.patch_freq, cfg.patch_time,
                    std::log(1e-5));
}

}  // namespace

MaeTrainResult train_toy_mae(const std::vector<AudioClip>& corpus, const MaeConfig& cfg) {
    require(!corpus.empty(), ErrorKind::Contract, "mae training needs a non-empty corpus");
    using T = float;

    // Patch all clips once; shapes must agree across the corpus.
    std::vector<Patches> pats;
    for (const AudioClip& clip : corpus) pats.push_back(clip_patches(clip, cfg));
    int P = int(pats[0].count());
    int ps_len = int(pats[0].patch_size());
    for (const Patches& p : pats)
        require(int(p.count()) == P, ErrorKind::Contract, "corpus clips differ in patch count");

    int n_mask = int(std::floor(cfg.mask_ratio * P));
    require(n_mask < P, ErrorKind::Config, "mask_ratio leaves no visible patches");
    require(n_mask >= 1, ErrorKind::Config, "mask_ratio masks no patches");
    int n_vis = P - n_mask;

    nn::ParamStore<T> enc_ps(cfg.seed);
    MaeEncoder<T> enc = make_mae_encoder(enc_ps, ps_len, cfg.width, cfg.enc_blocks, cfg.heads);

    nn::ParamStore<T> dec_ps(cfg.seed + 1);
    auto mask_token = dec_ps.param("mask_token", {1, cfg.dec_width}, 0.02);
    nn::Linear<T> dec_in = nn::make_linear(dec_ps, "dec_in", cfg.width, cfg.dec_width);
    MaeBlock<T> dec_blk = make_mae_block(dec_ps, "dec_blk", cfg.dec_width, cfg.heads);
    nn::Linear<T> head = nn::make_linear(dec_ps, "head", cfg.dec_width, ps_len);

    std::vector<ad::Var<T>> params = enc_ps.vars();
    for (auto& v : dec_ps.vars()) params.push_back(v);
    AdamW<T> opt(T(cfg.lr));

    int B = std::min<int>(cfg.batch, int(corpus.size()));
    std::vector<float> history;
    history.reserve(cfg.steps);

    for (int step = 0; step < cfg.steps; ++step) {
        Rng rng(cfg.seed, 0xae000000ull + std::uint64_t(step));
        // one shared mask per step keeps the whole batch in one graph
        std::vector<int> order(P);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.engine());
        std::vector<int> vis(order.begin(), order.begin() + n_vis);
        std::sort(vis.begin(), vis.end());
        std::vector<char> visible(P, 0);
        for (int p : vis) visible[p] = 1;

        std::vector<T> tok_vals(std::size_t(B) * P * ps_len);
        for (int b = 0; b < B; ++b) {
            const Patches& p = pats[(std::size_t(step) * B + b) % corpus.size()];
            for (std::size_t i = 0; i < p.data.size(); ++i)
                tok_vals[std::size_t(b) * P * ps_len + i] = T(p.data[i]);
        }
        auto target = ad::constant<T>({B, P, ps_len}, tok_vals);

        // encode visible patches only
        std::vector<int> vis_rows;
        vis_rows.reserve(std::size_t(B) * n_vis);
        for (int b = 0; b < B; ++b)
            for (int p : vis) vis_rows.push_back(b * P + p);
        auto vis_tok = ad::reshape(
            ad::gather_rows(ad::reshape(target, {B * P, ps_len}), vis_rows), {B, n_vis, ps_len});
        auto encoded = run_mae_encoder(enc, vis_tok);  // (B, n_vis, W)

        // rebuild the full sequence: encoded visibles + shared mask token
        auto dec_vis = ad::reshape(dec_in(encoded), {B * n_vis, cfg.dec_width});
        auto table = ad::concat<T>({dec_vis, mask_token}, 0);  // (B*n_vis+1, Wd)
        std::vector<int> full_rows(std::size_t(B) * P);
        for (int b = 0; b < B; ++b) {
            int seen = 0;
            for (int p = 0; p < P; ++p)
                full_rows[std::size_t(b) * P + p] =
                    visible[p] ? b * n_vis + seen++ : B * n_vis;
        }
        auto full = ad::reshape(ad::gather_rows(table, full_rows), {B, P, cfg.dec_width});
        full = ad::add(full, position_table<T>(B, P, cfg.dec_width));
        auto pred = head(run_mae_block(dec_blk, full));  // (B, P, ps_len)

        // MSE on masked patches only
        std::vector<T> w(std::size_t(B) * P * ps_len, T(0));
        double scale = 1.0 / (double(B) * n_mask * ps_len);
        for (int b = 0; b < B; ++b)
            for (int p = 0; p < P; ++p)
                if (!visible[p])
                    for (int k = 0; k < ps_len; ++k)
                        w[(std::size_t(b) * P + p) * ps_len + k] = T(scale);
        auto diff = ad::sub(pred, target);
        auto loss = ad::sum_all(ad::mul(ad::mul(diff, diff), ad::constant<T>({B, P, ps_len}, w)));

        AdamW<T>::zero_grad(params);
        ad::backward(loss);
        opt.step(params);
        history.push_back(loss->value[0]);
    }

    MaeTrainResult res;
    put_mae_config(res.ckpt, cfg);
    enc_ps.to_checkpoint(res.ckpt, "enc.");
    res.loss_history = std::move(history);
    return res;
}

LatentSeq encode_toy_mae(const AudioClip& clip, const Checkpoint& ck) {
    using T = float;
    MaeConfig cfg = mae_config_from(ck);
    Patches pat = clip_patches(clip, cfg);
    int P = int(pat.count()), ps_len = int(pat.patch_size());

    nn::ParamStore<T> enc_ps(cfg.seed);
    MaeEncoder<T> enc = make_mae_encoder(enc_ps, ps_len, cfg.width, cfg.enc_blocks, cfg.heads);
    enc_ps.from_checkpoint(ck, "enc.");

    std::vector<T> tok_vals(pat.data.begin(), pat.data.end());
    auto tokens = ad::constant<T>({1, P, ps_len}, std::move(tok_vals));
    auto encoded = run_mae_encoder(enc, tokens);  // (1, P, W)

    // patch grid is time-major; concatenate the freq patches of each frame
    LatentSeq out;
    out.batch = 1;
    out.dim = pat.n_freq * cfg.width;
    out.frames = pat.n_time;
    out.frame_rate = double(clip.sample_rate) / (cfg.hop * cfg.patch_time);
    out.provider = "toy-mae";
    out.data.resize(std::size_t(out.dim) * out.frames);
    for (int tp = 0; tp < pat.n_time; ++tp)
        for (int fp = 0; fp < pat.n_freq; ++fp)
            for (int c = 0; c < cfg.width; ++c)
                out.at(0, fp * cfg.width + c, tp) =
                    encoded->value[std::size_t(tp * pat.n_freq + fp) * cfg.width + c];
    return out;
}

// ---------------------------------------------------------------------------

void save_latents(const std::string& path, const LatentSeq& latents) {
    Checkpoint ck;
    ck.put("latents", {latents.batch, latents.dim, latents.frames},
           std::vector<float>(latents.data.begin(), latents.data.end()));
    ck.put_scalar("frame_rate", float(latents.frame_rate));
    ck.put_string("provider", latents.provider);
    ck.save(path);
}

LatentSeq load_latents(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    const Checkpoint::Entry& e = ck.get("latents");
    require(e.shape.size() == 3, ErrorKind::Format, "latent dump must be rank 3 (B,D,T)");
    LatentSeq out;
    out.batch = int(e.shape[0]);
    out.dim = int(e.shape[1]);
    out.frames = int(e.shape[2]);
    out.data = e.values;
    out.frame_rate = ck.get_scalar("frame_rate");
    out.provider = ck.get_string("provider");
    return out;
}

LatentSeq stack_latents(const std::vector<LatentSeq>& seqs) {
    require(!seqs.empty(), ErrorKind::Contract, "nothing to stack");
    LatentSeq out = seqs[0];
    for (std::size_t i = 1; i < seqs.size(); ++i) {
        const LatentSeq& s = seqs[i];
        require(s.dim == out.dim && s.frames == out.frames && s.provider == out.provider,
                ErrorKind::Contract, "latent sequences disagree in shape or provider");
        out.data.insert(out.data.end(), s.data.begin(), s.data.end());
        out.batch += s.batch;
    }
    return out;
}

}  // namespace flowvoc
