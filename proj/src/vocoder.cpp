#include "flowvoc/vocoder.hpp"

#include <algorithm>
#include <cmath>

#include "flowvoc/error.hpp"
#include "flowvoc/optim.hpp"
#include "flowvoc/rng.hpp"

namespace flowvoc {

using ad::Var;

VocoderConfig VocoderConfig::paper() {
    VocoderConfig cfg;
    cfg.latent_dim = 768;
    cfg.cond_width = 512;
    cfg.cond_blocks = 4;
    cfg.hops = {320, 160, 80};
    cfg.widths = {768, 512, 384};
    cfg.branch_blocks = 8;
    cfg.time_dim = 256;
    cfg.sample_rate = 16000;
    return cfg;
}

int VocoderConfig::hop_max() const {
    require(!hops.empty(), ErrorKind::Config, "vocoder needs at least one branch");
    return *std::max_element(hops.begin(), hops.end());
}

namespace {

template <class T>
ConvNeXtBlock<T> make_convnext(nn::ParamStore<T>& ps, const std::string& name, int width,
                               int kernel) {
    ConvNeXtBlock<T> blk;
    blk.dw_w = ps.param(name + ".dw.w", {width, 1, kernel}, 1.0 / std::sqrt(double(kernel)));
    blk.dw_b = ps.param(name + ".dw.b", {width}, 0.0);
    blk.pw1_w = ps.param(name + ".pw1.w", {2 * width, width, 1}, 1.0 / std::sqrt(double(width)));
    blk.pw1_b = ps.param(name + ".pw1.b", {2 * width}, 0.0);
    blk.alpha = ps.param_fill(name + ".alpha", {2 * width}, T(0.25));
    blk.pw2_w = ps.param(name + ".pw2.w", {width, 2 * width, 1}, 0.0);
    blk.pw2_b = ps.param(name + ".pw2.b", {width}, 0.0);
    return blk;
}

// per-channel affine after a time-axis layernorm; x is (B,T,C)
template <class T>
Var<T> affine_last(const Var<T>& x, const Var<T>& gain, const Var<T>& shift) {
    int rows = int(x->numel()) / x->shape.back();
    auto flat = ad::reshape(x, {rows, x->shape.back()});
    return ad::reshape(ad::bias_add(ad::mul_bcast(flat, gain, 0), shift), x->shape);
}

}  // namespace

template <class T>
Vocoder<T> make_vocoder(const VocoderConfig& cfg, std::uint64_t seed, double head_std) {
    require(cfg.hops.size() == cfg.widths.size() && !cfg.hops.empty(), ErrorKind::Config,
            "hops and widths must pair up");
    require(cfg.norm == "biasnorm" || cfg.norm == "layernorm", ErrorKind::Config,
            "norm must be biasnorm or layernorm");
    int hop_max = cfg.hop_max();
    for (int hop : cfg.hops)
        require(hop > 0 && hop_max % hop == 0, ErrorKind::Config,
                "branch hops must divide the largest hop");

    Vocoder<T> voc{cfg, nn::ParamStore<T>(seed), {}, {}, {}, {}, {}, {}};
    auto& ps = voc.ps;
    int D = cfg.latent_dim, Dp = cfg.cond_width;

    voc.in_w = ps.param("cond.in.w", {Dp, D, 3}, 1.0 / std::sqrt(double(3 * D)));
    voc.in_b = ps.param("cond.in.b", {Dp}, 0.0);
    if (cfg.norm == "biasnorm") {
        voc.norm_a = ps.param("cond.norm.bias", {Dp}, 0.0);
        voc.norm_b = ps.param("cond.norm.gamma", {1}, 0.0);  // exp(0) = unit gain
    } else {
        voc.norm_a = ps.param_fill("cond.norm.gain", {Dp}, T(1));
        voc.norm_b = ps.param("cond.norm.shift", {Dp}, 0.0);
    }
    for (int i = 0; i < cfg.cond_blocks; ++i)
        voc.cond_blocks.push_back(
            make_convnext(ps, "cond.b" + std::to_string(i), Dp, cfg.kernel));

    for (std::size_t r = 0; r < cfg.hops.size(); ++r) {
        VocBranch<T> br;
        br.plan = StftPlan::make(cfg.hops[r], cfg.sample_rate);
        br.width = cfg.widths[r];
        std::string base = "br" + std::to_string(r);
        int coef_ch = 2 * br.plan.bins();
        br.embed_w =
            ps.param(base + ".embed.w", {br.width, coef_ch, 3}, 1.0 / std::sqrt(3.0 * coef_ch));
        br.embed_b = ps.param(base + ".embed.b", {br.width}, 0.0);
        br.time1 = nn::make_linear(ps, base + ".time1", cfg.time_dim, br.width);
        br.time2 = nn::make_linear(ps, base + ".time2", br.width, br.width);
        for (int i = 0; i < cfg.branch_blocks; ++i) {
            std::string blk = base + ".b" + std::to_string(i);
            br.lat_w.push_back(ps.param(blk + ".lat.w", {br.width, Dp, 1}, 0.0));
            br.lat_b.push_back(ps.param(blk + ".lat.b", {br.width}, 0.0));
            br.blocks.push_back(make_convnext(ps, blk, br.width, cfg.kernel));
        }
        br.head_w = ps.param(base + ".head.w", {coef_ch, br.width, 1},
                             head_std > 0 ? head_std / std::sqrt(double(br.width)) : 0.0);
        br.head_b = ps.param(base + ".head.b", {coef_ch}, 0.0);
        voc.branches.push_back(std::move(br));
    }
    return voc;
}

template <class T>
Var<T> run_convnext(const ConvNeXtBlock<T>& blk, const Var<T>& x) {
    int width = blk.dw_w->shape[0];
    auto h = ad::conv1d(x, blk.dw_w, blk.dw_b, width);  // depthwise
    h = ad::conv1d(h, blk.pw1_w, blk.pw1_b, 1);
    h = ad::prelu(h, blk.alpha, 1);
    h = ad::conv1d(h, blk.pw2_w, blk.pw2_b, 1);
    return ad::add(x, h);
}

template <class T>
Var<T> replicate_frames(const Var<T>& x, int ratio) {
    require(ratio >= 1, ErrorKind::Contract, "replication ratio must be >= 1");
    if (ratio == 1) return x;
    int B = x->shape[0], C = x->shape[1], F = x->shape[2];
    auto rows_view = ad::reshape(ad::permute(x, {0, 2, 1}), {B * F, C});
    std::vector<int> rows(std::size_t(B) * F * ratio);
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < F * ratio; ++o) rows[std::size_t(b) * F * ratio + o] = b * F + o / ratio;
    auto rep = ad::gather_rows(rows_view, rows);
    return ad::permute(ad::reshape(rep, {B, F * ratio, C}), {0, 2, 1});
}

template <class T>
Var<T> film_modulate(const Var<T>& x, const Var<T>& t_emb, const Var<T>& lat_proj) {
    require(x->shape.size() == 3 && t_emb->shape.size() == 2, ErrorKind::Contract,
            "film expects x (B,C,T) and t_emb (B,C)");
    require(t_emb->shape[0] == x->shape[0] && t_emb->shape[1] == x->shape[1],
            ErrorKind::Contract, "film width mismatch");
    require(lat_proj->shape == x->shape, ErrorKind::Contract, "film latent shape mismatch");
    return ad::add(ad::mul_bcast(x, ad::add_scalar(t_emb, T(1)), 2), lat_proj);
}

template <class T>
Var<T> condition_latents(const Vocoder<T>& voc, const Var<T>& latents) {
    require(latents->shape.size() == 3, ErrorKind::Contract, "latents must be (B,D,T)");
    require(latents->shape[1] == voc.cfg.latent_dim, ErrorKind::Contract,
            "latent channel count mismatch");
    auto x = ad::conv1d(latents, voc.in_w, voc.in_b, 1);
    if (voc.cfg.norm == "biasnorm") {
        x = ad::biasnorm_channel(x, voc.norm_a, voc.norm_b);
    } else {
        auto xt = ad::permute(x, {0, 2, 1});
        xt = affine_last(ad::layernorm_last(xt, T(1e-5)), voc.norm_a, voc.norm_b);
        x = ad::permute(xt, {0, 2, 1});
    }
    for (const auto& blk : voc.cond_blocks) x = run_convnext(blk, x);
    return x;
}

namespace {

template <class T>
Var<T> branch_time_embedding(const VocBranch<T>& br, double t, int batch, int time_dim) {
    // scale t so the geometric frequency ladder resolves [0,1]
    std::vector<double> e = nn::sin_embedding(1000.0 * t, time_dim);
    std::vector<T> vals(std::size_t(batch) * time_dim);
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < time_dim; ++i) vals[std::size_t(b) * time_dim + i] = T(e[i]);
    auto emb = ad::constant<T>({batch, time_dim}, std::move(vals));
    return br.time2(ad::gelu(br.time1(emb)));
}

}  // namespace

template <class T>
Var<T> predict_waveform(const Vocoder<T>& voc, const std::vector<T>& x_t, int batch, double t,
                        const Var<T>& cond) {
    int hop_max = voc.cfg.hop_max();
    require(batch > 0 && x_t.size() % std::size_t(batch) == 0, ErrorKind::Contract,
            "waveform batch does not divide sample count");
    int L = int(x_t.size() / std::size_t(batch));
    require(L % hop_max == 0, ErrorKind::Contract, "waveform length must be a hop_max multiple");
    int frames = L / hop_max;
    require(cond->shape.size() == 3 && cond->shape[0] == batch &&
                cond->shape[1] == voc.cfg.cond_width && cond->shape[2] == frames,
            ErrorKind::Contract, "conditioner output misaligned with waveform");

    Var<T> acc;
    for (const VocBranch<T>& br : voc.branches) {
        int ratio = hop_max / br.plan.hop;
        int Tr = L / br.plan.hop;
        int bins = br.plan.bins();

        // analysis of the flow state is a leaf: gradients flow through the
        // synthesis path only
        std::vector<T> coef(std::size_t(batch) * 2 * bins * Tr);
        std::vector<double> row(L);
        for (int b = 0; b < batch; ++b) {
            for (int i = 0; i < L; ++i) row[i] = double(x_t[std::size_t(b) * L + i]);
            SpectroFrame sf = stft(row, br.plan);
            T* dst = &coef[std::size_t(b) * 2 * bins * Tr];
            for (std::size_t i = 0; i < sf.re.size(); ++i) dst[i] = T(sf.re[i]);
            for (std::size_t i = 0; i < sf.im.size(); ++i) dst[sf.re.size() + i] = T(sf.im[i]);
        }
        auto x = ad::conv1d(ad::constant<T>({batch, 2 * bins, Tr}, std::move(coef)), br.embed_w,
                            br.embed_b, 1);

        auto t_emb = branch_time_embedding(br, t, batch, voc.cfg.time_dim);
        auto lat = replicate_frames(cond, ratio);
        for (std::size_t i = 0; i < br.blocks.size(); ++i) {
            auto lat_proj = ad::conv1d(lat, br.lat_w[i], br.lat_b[i], 1);
            x = run_convnext(br.blocks[i], film_modulate(x, t_emb, lat_proj));
        }
        auto coef_hat = ad::conv1d(x, br.head_w, br.head_b, 1);
        auto re = ad::slice(coef_hat, 1, 0, bins);
        auto im = ad::slice(coef_hat, 1, bins, bins);
        auto y = istft_op(re, im, br.plan, L);
        acc = acc ? ad::add(acc, y) : y;
    }
    return ad::mul_scalar(acc, T(1.0 / double(voc.branches.size())));
}

// ---------------------------------------------------------------------------
// checkpoint plumbing

namespace {

void put_vocoder_config(Checkpoint& ck, const VocoderConfig& cfg) {
    ck.put_scalar("voc.cfg.latent_dim", float(cfg.latent_dim));
    ck.put_scalar("voc.cfg.cond_width", float(cfg.cond_width));
    ck.put_scalar("voc.cfg.cond_blocks", float(cfg.cond_blocks));
    ck.put_scalar("voc.cfg.branch_blocks", float(cfg.branch_blocks));
    ck.put_scalar("voc.cfg.kernel", float(cfg.kernel));
    ck.put_scalar("voc.cfg.time_dim", float(cfg.time_dim));
    ck.put_scalar("voc.cfg.sample_rate", float(cfg.sample_rate));
    ck.put_string("voc.cfg.norm", cfg.norm);
    std::vector<float> hops(cfg.hops.begin(), cfg.hops.end());
    std::vector<float> widths(cfg.widths.begin(), cfg.widths.end());
    std::int64_t n_branches = std::int64_t(hops.size());
    ck.put("voc.cfg.hops", {n_branches}, std::move(hops));
    ck.put("voc.cfg.widths", {n_branches}, std::move(widths));
}

VocoderConfig vocoder_config_from(const Checkpoint& ck) {
    VocoderConfig cfg;
    cfg.latent_dim = int(ck.get_scalar("voc.cfg.latent_dim"));
    cfg.cond_width = int(ck.get_scalar("voc.cfg.cond_width"));
    cfg.cond_blocks = int(ck.get_scalar("voc.cfg.cond_blocks"));
    cfg.branch_blocks = int(ck.get_scalar("voc.cfg.branch_blocks"));
    cfg.kernel = int(ck.get_scalar("voc.cfg.kernel"));
    cfg.time_dim = int(ck.get_scalar("voc.cfg.time_dim"));
    cfg.sample_rate = int(ck.get_scalar("voc.cfg.sample_rate"));
    cfg.norm = ck.get_string("voc.cfg.norm");
    cfg.hops.clear();
    for (float h : ck.get("voc.cfg.hops").values) cfg.hops.push_back(int(h));
    cfg.widths.clear();
    for (float w : ck.get("voc.cfg.widths").values) cfg.widths.push_back(int(w));
    return cfg;
}

}  // namespace

VocTrainResult train_vocoder(const std::vector<AudioClip>& clips,
                             const std::vector<LatentSeq>& latents, const VocoderConfig& cfg,
                             const VocTrainConfig& tcfg) {
    require(!clips.empty() && clips.size() == latents.size(), ErrorKind::Contract,
            "need one latent sequence per clip");
    require(tcfg.objective == "flow" || tcfg.objective == "recon", ErrorKind::Config,
            "objective must be flow or recon");
    int hop_max = cfg.hop_max();
    StftPlan plan_max = StftPlan::make(hop_max, cfg.sample_rate);

    const std::string provider = latents[0].provider;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const LatentSeq& l = latents[i];
        require(l.provider == provider, ErrorKind::Contract, "mixed latent providers");
        require(l.batch == 1, ErrorKind::Contract, "one clip per latent sequence");
        require(l.dim == cfg.latent_dim, ErrorKind::Config,
                "latent dim " + std::to_string(l.dim) + " != configured " +
                    std::to_string(cfg.latent_dim));
        require(std::abs(l.frame_rate - cfg.frame_rate()) < 1e-9, ErrorKind::Config,
                "provider frame rate " + std::to_string(l.frame_rate) +
                    " != vocoder frame rate " + std::to_string(cfg.frame_rate()));
        require(clips[i].sample_rate == cfg.sample_rate, ErrorKind::Config,
                "clip sample rate mismatch");
        require(l.frames == plan_max.frames_for(clips[i].samples.size()), ErrorKind::Config,
                "latent frame count does not cover the clip");
    }

    Vocoder<float> voc =
        make_vocoder<float>(cfg, tcfg.seed, tcfg.objective == "recon" ? 1.0 : 0.0);
    auto params = voc.ps.vars();
    AdamW<float> opt(float(tcfg.lr), float(tcfg.weight_decay));

    // pad each clip to a whole number of hop_max frames; weights follow suit
    struct Item {
        std::vector<float> x1;
        std::vector<double> weights;
        Var<float> lat;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        Item it;
        std::size_t padded = std::size_t(latents[i].frames) * hop_max;
        std::vector<double> xd(padded, 0.0);
        std::copy(clips[i].samples.begin(), clips[i].samples.end(), xd.begin());
        it.x1.assign(xd.begin(), xd.end());
        it.weights = frame_energy(xd, plan_max);
        it.lat = ad::constant<float>({1, latents[i].dim, latents[i].frames},
                                     std::vector<float>(latents[i].data));
        items.push_back(std::move(it));
    }

    VocTrainResult res;
    res.loss_history.reserve(tcfg.steps);
    for (int step = 0; step < tcfg.steps; ++step) {
        Rng rng(tcfg.seed, 0x70c0de00ull + std::uint64_t(step));
        const Item& it = items[std::size_t(rng.uniform_int(0, int64_t(items.size()) - 1))];
        auto cond = condition_latents(voc, it.lat);

        Var<float> loss;
        if (tcfg.objective == "flow") {
            double t = rng.uniform();
            auto x0 = draw_noise<float>(it.x1.size(), tcfg.sigma, rng);
            FlowSample<float> fs = make_path_sample_with(std::move(x0), it.x1, t);
            auto pred = predict_waveform(voc, fs.xt, 1, fs.t, cond);
            loss = fm_data_loss(pred, fs.x1, it.weights, plan_max);
        } else {
            std::vector<float> zeros(it.x1.size(), 0.0f);
            auto pred = predict_waveform(voc, zeros, 1, 0.0, cond);
            auto diff = ad::sub(pred, ad::constant<float>(pred->shape,
                                                          std::vector<float>(it.x1)));
            loss = ad::mean_all(ad::mul(diff, diff));
        }

        AdamW<float>::zero_grad(params);
        ad::backward(loss);
        opt.step(params);
        res.loss_history.push_back(loss->value[0]);
    }

    put_vocoder_config(res.ckpt, cfg);
    res.ckpt.put_string("provider", provider);
    res.ckpt.put_string("train.objective", tcfg.objective);
    voc.ps.to_checkpoint(res.ckpt, "voc.p.");
    return res;
}

Vocoder<float> load_vocoder(const Checkpoint& ck) {
    Vocoder<float> voc = make_vocoder<float>(vocoder_config_from(ck), 0);
    voc.ps.from_checkpoint(ck, "voc.p.");
    return voc;
}

std::string vocoder_provider(const Checkpoint& ck) { return ck.get_string("provider"); }

namespace {

Var<float> conditioned_from_checkpoint(const Vocoder<float>& voc, const LatentSeq& latents,
                                       const Checkpoint& ck) {
    require(latents.provider == ck.get_string("provider"), ErrorKind::Config,
            "latent provider '" + latents.provider + "' does not match checkpoint '" +
                ck.get_string("provider") + "'");
    require(latents.batch == 1, ErrorKind::Contract, "vocode expects a single sequence");
    require(latents.dim == voc.cfg.latent_dim, ErrorKind::Config, "latent dim mismatch");
    require(std::abs(latents.frame_rate - voc.cfg.frame_rate()) < 1e-9, ErrorKind::Config,
            "latent frame rate mismatch");
    auto lat = ad::constant<float>({1, latents.dim, latents.frames},
                                   std::vector<float>(latents.data));
    return condition_latents(voc, lat);
}

}  // namespace

AudioClip vocode(const LatentSeq& latents, const Checkpoint& ck, const SamplerConfig& scfg) {
    require(scfg.prediction == SamplerConfig::Prediction::Data, ErrorKind::Config,
            "vocoder samples with data prediction");
    require(scfg.guidance_scale == 1.0, ErrorKind::Config,
            "vocoder has no unconditional branch; guidance must be 1");
    Vocoder<float> voc = load_vocoder(ck);
    auto cond = conditioned_from_checkpoint(voc, latents, ck);
    int L = latents.frames * voc.cfg.hop_max();

    FlowModel<float> model = [&](const std::vector<float>& x, double t) {
        return predict_waveform(voc, x, 1, t, cond)->value;
    };
    Rng rng(scfg.seed, 0x70c0dec0ull);
    auto x0 = draw_noise<float>(std::size_t(L), scfg.sigma, rng);
    std::vector<float> y = euler_sample(model, FlowModel<float>{}, std::move(x0), scfg);

    AudioClip out;
    out.samples.assign(y.begin(), y.end());
    out.sample_rate = voc.cfg.sample_rate;
    return out;
}

AudioClip recon_waveform(const LatentSeq& latents, const Checkpoint& ck) {
    Vocoder<float> voc = load_vocoder(ck);
    auto cond = conditioned_from_checkpoint(voc, latents, ck);
    int L = latents.frames * voc.cfg.hop_max();
    std::vector<float> zeros(std::size_t(L), 0.0f);
    auto pred = predict_waveform(voc, zeros, 1, 0.0, cond);
    AudioClip out;
    out.samples.assign(pred->value.begin(), pred->value.end());
    out.sample_rate = voc.cfg.sample_rate;
    return out;
}

#define FLOWVOC_VOC_INSTANTIATE(T)                                                          \
    template Vocoder<T> make_vocoder<T>(const VocoderConfig&, std::uint64_t, double);               \
    template ad::Var<T> run_convnext<T>(const ConvNeXtBlock<T>&, const ad::Var<T>&);        \
    template ad::Var<T> replicate_frames<T>(const ad::Var<T>&, int);                        \
    template ad::Var<T> film_modulate<T>(const ad::Var<T>&, const ad::Var<T>&,              \
                                         const ad::Var<T>&);                                \
    template ad::Var<T> condition_latents<T>(const Vocoder<T>&, const ad::Var<T>&);         \
    template ad::Var<T> predict_waveform<T>(const Vocoder<T>&, const std::vector<T>&, int,  \
                                            double, const ad::Var<T>&);

FLOWVOC_VOC_INSTANTIATE(float)
FLOWVOC_VOC_INSTANTIATE(double)
#undef FLOWVOC_VOC_INSTANTIATE

}  // namespace flowvoc
