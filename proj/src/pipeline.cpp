#include "flowvoc/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flowvoc/autodiff.hpp"
#include "flowvoc/dit.hpp"
#include "flowvoc/dsp.hpp"
#include "flowvoc/error.hpp"
#include "flowvoc/evalkit.hpp"
#include "flowvoc/flow.hpp"
#include "flowvoc/gradcheck.hpp"
#include "flowvoc/rng.hpp"
#include "flowvoc/vocoder.hpp"

namespace fs = std::filesystem;

namespace flowvoc {

// ---- flat config ----

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

FlatConfig FlatConfig::parse_text(const std::string& text) {
    FlatConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            raise(ErrorKind::Format, "config line missing '=': " + t);
        std::string key = trim(t.substr(0, eq));
        if (key.empty()) raise(ErrorKind::Format, "config line missing key: " + t);
        cfg.kv_[key] = trim(t.substr(eq + 1));
    }
    return cfg;
}

FlatConfig FlatConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

void FlatConfig::set(const std::string& key, const std::string& value) { kv_[key] = value; }

void FlatConfig::merge(const FlatConfig& overrides) {
    for (const auto& [k, v] : overrides.kv_) kv_[k] = v;
}

bool FlatConfig::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string FlatConfig::str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) raise(ErrorKind::Config, "missing config key: " + key);
    return it->second;
}

long long FlatConfig::integer(const std::string& key) const {
    const std::string v = str(key);
    char* end = nullptr;
    long long x = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        raise(ErrorKind::Config, "key " + key + " expects an integer, got '" + v + "'");
    return x;
}

double FlatConfig::number(const std::string& key) const {
    const std::string v = str(key);
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        raise(ErrorKind::Config, "key " + key + " expects a number, got '" + v + "'");
    return x;
}

std::uint64_t FlatConfig::seed(const std::string& key) const {
    const std::string v = str(key);
    char* end = nullptr;
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        raise(ErrorKind::Config, "key " + key + " expects a seed, got '" + v + "'");
    return x;
}

std::string FlatConfig::dump() const {
    std::string out;
    for (const auto& [k, v] : kv_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

std::vector<double> parse_grid(const std::string& csv_list) {
    std::vector<double> vals;
    std::string token;
    std::istringstream in(csv_list);
    bool any_token = false;
    while (std::getline(in, token, ',')) {
        any_token = true;
        std::string t = trim(token);
        char* end = nullptr;
        double x = std::strtod(t.c_str(), &end);
        if (t.empty() || end == t.c_str() || *end != '\0')
            raise(ErrorKind::Config, "bad grid entry: '" + token + "'");
        vals.push_back(x);
    }
    if (!any_token && !trim(csv_list).empty())
        raise(ErrorKind::Config, "bad grid: '" + csv_list + "'");
    return vals;
}

std::string fmt_num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// ---- out tree / splits / providers ----

void ensure_out_tree(const std::string& out_dir) {
    std::error_code ec;
    for (const char* sub : {"", "/corpus", "/ckpt", "/gen", "/reports"}) {
        fs::create_directories(out_dir + sub, ec);
        if (ec) raise(ErrorKind::Io, "cannot create " + out_dir + sub + ": " + ec.message());
    }
}

CorpusSplit split_rows(const std::vector<ManifestRow>& rows, double test_frac) {
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < rows.size(); ++i) by_class[rows[i].class_name].push_back(i);
    std::vector<char> is_test(rows.size(), 0);
    for (const auto& [name, idx] : by_class) {
        std::size_t n_test = std::max<std::size_t>(1, std::size_t(double(idx.size()) * test_frac));
        for (std::size_t k = 0; k < idx.size(); ++k)
            if (k >= idx.size() - n_test) is_test[idx[k]] = 1;
    }
    CorpusSplit split;
    for (std::size_t i = 0; i < rows.size(); ++i)
        (is_test[i] ? split.test : split.train).push_back(rows[i]);
    return split;
}

LatentSeq encode_clip(const AudioClip& clip, const std::string& provider, const Checkpoint* mae) {
    if (provider == "semantic-oracle") return encode_semantic_oracle(clip);
    if (provider == "acoustic-mel") return encode_acoustic_mel(clip);
    if (provider == "toy-mae") {
        if (!mae) raise(ErrorKind::Contract, "toy-mae needs its encoder checkpoint");
        return encode_toy_mae(clip, *mae);
    }
    raise(ErrorKind::Config, "unknown latent provider: " + provider);
}

std::string latent_filename(const std::string& wav_path) {
    return fs::path(wav_path).stem().string() + ".lat";
}

// ---- caption judge ----

namespace {

std::vector<double> pool_sequence(const LatentSeq& l) {
    require(l.batch == 1 && l.frames > 0, ErrorKind::Contract, "expected one non-empty sequence");
    std::vector<double> row(std::size_t(l.dim), 0.0);
    for (int d = 0; d < l.dim; ++d) {
        double s = 0;
        for (int f = 0; f < l.frames; ++f) s += l.at(0, d, f);
        row[std::size_t(d)] = s / l.frames;
    }
    return row;
}

}  // namespace

CaptionJudge train_caption_judge(const std::vector<LatentSeq>& feats,
                                 const std::vector<std::string>& captions) {
    require(!feats.empty() && feats.size() == captions.size(), ErrorKind::Contract,
            "need one caption per feature sequence");
    CaptionJudge judge;
    {
        std::set<std::string> uniq(captions.begin(), captions.end());
        judge.classes.assign(uniq.begin(), uniq.end());
    }
    std::map<std::string, int> class_id;
    for (std::size_t c = 0; c < judge.classes.size(); ++c)
        class_id[judge.classes[c]] = int(c);
    const int n_classes = int(judge.classes.size());
    const int dim = feats[0].dim;
    judge.dim = dim;

    std::vector<std::vector<double>> rows;
    rows.reserve(feats.size());
    for (const LatentSeq& l : feats) {
        require(l.dim == dim, ErrorKind::Contract, "feature dims differ");
        rows.push_back(pool_sequence(l));
    }

    judge.mean.assign(std::size_t(dim), 0.0);
    judge.scale.assign(std::size_t(dim), 0.0);
    for (const auto& r : rows)
        for (int d = 0; d < dim; ++d) judge.mean[std::size_t(d)] += r[std::size_t(d)];
    for (double& v : judge.mean) v /= double(rows.size());
    for (const auto& r : rows)
        for (int d = 0; d < dim; ++d) {
            double c = r[std::size_t(d)] - judge.mean[std::size_t(d)];
            judge.scale[std::size_t(d)] += c * c;
        }
    for (double& v : judge.scale) {
        v = std::sqrt(v / double(rows.size()));
        if (v < 1e-8) v = 1.0;
    }

    std::vector<double> xs(rows.size() * std::size_t(dim));
    std::vector<int> ys(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int d = 0; d < dim; ++d)
            xs[i * std::size_t(dim) + std::size_t(d)] =
                (rows[i][std::size_t(d)] - judge.mean[std::size_t(d)]) / judge.scale[std::size_t(d)];
        ys[i] = class_id[captions[i]];
    }

    auto x = ad::constant<double>({int(rows.size()), dim}, std::move(xs));
    auto w = ad::leaf<double>({dim, n_classes},
                              std::vector<double>(std::size_t(dim) * n_classes, 0.0), true);
    auto b = ad::leaf<double>({n_classes}, std::vector<double>(std::size_t(n_classes), 0.0), true);
    const double lr = 0.1;
    for (int step = 0; step < 2000; ++step) {
        auto loss = ad::softmax_xent(ad::bias_add(ad::matmul(x, w), b), ys);
        std::fill(w->grad.begin(), w->grad.end(), 0.0);
        std::fill(b->grad.begin(), b->grad.end(), 0.0);
        ad::backward(loss);
        for (std::size_t i = 0; i < w->value.size(); ++i) w->value[i] -= lr * w->grad[i];
        for (std::size_t i = 0; i < b->value.size(); ++i) b->value[i] -= lr * b->grad[i];
    }
    judge.w = w->value;
    judge.b = b->value;
    return judge;
}

int judge_class(const CaptionJudge& judge, const LatentSeq& feat) {
    require(feat.dim == judge.dim, ErrorKind::Contract, "feature dim mismatch with judge");
    std::vector<double> row = pool_sequence(feat);
    const int n_classes = int(judge.classes.size());
    int best = 0;
    double best_v = 0;
    for (int c = 0; c < n_classes; ++c) {
        double v = judge.b[std::size_t(c)];
        for (int d = 0; d < judge.dim; ++d) {
            double z = (row[std::size_t(d)] - judge.mean[std::size_t(d)]) / judge.scale[std::size_t(d)];
            v += z * judge.w[std::size_t(d) * n_classes + c];
        }
        if (c == 0 || v > best_v) {
            best = c;
            best_v = v;
        }
    }
    return best;
}

double frechet_audio(const std::vector<AudioClip>& a, const std::vector<AudioClip>& b) {
    auto stats = [](const std::vector<AudioClip>& clips) {
        std::vector<std::vector<double>> rows;
        rows.reserve(clips.size());
        for (const AudioClip& c : clips) rows.push_back(clip_features(c));
        return feature_stats(rows);
    };
    return frechet_distance(stats(a), stats(b));
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::error_code ec;
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent, ec);
    std::ofstream out(path);
    if (!out) raise(ErrorKind::Io, "cannot write " + path);
    auto put = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out << ',';
            out << fields[i];
        }
        out << '\n';
    };
    put(header);
    for (const auto& r : rows) put(r);
}

// ---- gradient battery ----

bool run_grad_checks(std::ostream& out, double tolerance) {
    using ad::Var;
    namespace gc = gradcheck;
    bool all_ok = true;
    double worst = 0;
    int n_checks = 0;
    auto check = [&](const char* name, std::vector<Var<double>> inputs,
                     const std::function<Var<double>()>& build) {
        double err = gc::fd_max_rel_err(std::move(inputs), build);
        worst = std::max(worst, err);
        ++n_checks;
        bool ok = err < tolerance;
        all_ok = all_ok && ok;
        out << (ok ? "ok   " : "FAIL ") << name << " rel_err=" << fmt_num(err) << "\n";
    };
    Rng rng(515151);
    auto rn = [&](ad::Shape s, double scale = 1.0) { return gc::randn_var(rng, std::move(s), scale); };

    {
        auto a = rn({2, 3}), b = rn({2, 3});
        check("add", {a, b}, [=] { return gc::weighted_sum(ad::add(a, b), 11); });
        check("sub", {a, b}, [=] { return gc::weighted_sum(ad::sub(a, b), 12); });
        check("mul", {a, b}, [=] { return gc::weighted_sum(ad::mul(a, b), 13); });
        check("add_scalar", {a}, [=] { return gc::weighted_sum(ad::add_scalar(a, 0.7), 14); });
        check("mul_scalar", {a}, [=] { return gc::weighted_sum(ad::mul_scalar(a, -1.3), 15); });
    }
    {
        auto a = rn({2, 3}, 0.5);
        check("exp", {a}, [=] { return gc::weighted_sum(ad::exp_(a), 16); });
        check("gelu", {a}, [=] { return gc::weighted_sum(ad::gelu(a), 17); });
    }
    {
        auto x = rn({2, 3, 4});
        auto alpha = rn({3}, 0.3);
        check("prelu", {x, alpha}, [=] { return gc::weighted_sum(ad::prelu(x, alpha, 1), 18); });
    }
    {
        auto s = rn({1});
        check("broadcast_scalar", {s},
              [=] { return gc::weighted_sum(ad::broadcast_scalar(s, {2, 3}), 19); });
    }
    {
        auto x = rn({2, 3, 4});
        auto v0 = rn({3, 4}), v1 = rn({2, 4});
        check("add_bcast", {x, v0}, [=] { return gc::weighted_sum(ad::add_bcast(x, v0, 0), 20); });
        check("mul_bcast", {x, v1}, [=] { return gc::weighted_sum(ad::mul_bcast(x, v1, 1), 21); });
    }
    {
        auto x = rn({2, 5});
        auto b = rn({5});
        check("bias_add", {x, b}, [=] { return gc::weighted_sum(ad::bias_add(x, b), 22); });
        check("softmax_last", {x}, [=] { return gc::weighted_sum(ad::softmax_last(x), 23); });
    }
    {
        auto x = rn({2, 6});
        check("reshape", {x}, [=] { return gc::weighted_sum(ad::reshape(x, {3, 4}), 24); });
        check("slice", {x}, [=] { return gc::weighted_sum(ad::slice(x, 1, 1, 3), 25); });
    }
    {
        auto x = rn({2, 3, 4});
        check("permute", {x}, [=] { return gc::weighted_sum(ad::permute(x, {2, 0, 1}), 26); });
    }
    {
        auto a = rn({2, 3}), b = rn({2, 3});
        check("concat", {a, b},
              [=] { return gc::weighted_sum(ad::concat(std::vector<Var<double>>{a, b}, 1), 27); });
    }
    {
        auto table = rn({5, 4});
        std::vector<int> ids{3, 0, 3, 2};
        check("gather_rows", {table},
              [=] { return gc::weighted_sum(ad::gather_rows(table, ids), 28); });
    }
    {
        auto a = rn({2, 3}), b = rn({3, 4});
        check("matmul", {a, b}, [=] { return gc::weighted_sum(ad::matmul(a, b), 29); });
    }
    {
        auto a = rn({2, 2, 3}), b = rn({2, 3, 2}), bt = rn({2, 2, 3});
        check("bmm", {a, b}, [=] { return gc::weighted_sum(ad::bmm(a, b), 30); });
        check("bmm_trans", {a, bt}, [=] { return gc::weighted_sum(ad::bmm(a, bt, true), 31); });
    }
    {
        auto x = rn({2, 3, 6});
        auto w = rn({4, 3, 3}, 0.5);
        auto b = rn({4});
        check("conv1d", {x, w, b}, [=] { return gc::weighted_sum(ad::conv1d(x, w, b, 1), 32); });
    }
    {
        auto x = rn({2, 4, 6});
        auto w = rn({4, 2, 3}, 0.5);
        auto b = rn({4});
        check("conv1d_grouped", {x, w, b},
              [=] { return gc::weighted_sum(ad::conv1d(x, w, b, 2), 33); });
    }
    {
        auto x = rn({2, 3, 5});
        check("sum_all", {x}, [=] { return ad::sum_all(x); });
        check("mean_all", {x}, [=] { return ad::mean_all(x); });
        check("mean_channel", {x}, [=] { return gc::weighted_sum(ad::mean_channel(x), 34); });
        check("rms_channel", {x}, [=] { return gc::weighted_sum(ad::rms_channel(x), 35); });
    }
    {
        auto logits = rn({4, 3});
        std::vector<int> labels{0, 2, 1, 2};
        check("softmax_xent", {logits}, [=] { return ad::softmax_xent(logits, labels); });
    }
    {
        auto x = rn({2, 3, 6});
        check("layernorm_last", {x},
              [=] { return gc::weighted_sum(ad::layernorm_last(x, 1e-5), 36); });
    }
    {
        auto x = rn({2, 4, 5});
        auto bias = rn({4}, 0.3);
        auto gamma = rn({1}, 0.3);
        check("biasnorm_channel", {x, bias, gamma},
              [=] { return gc::weighted_sum(ad::biasnorm_channel(x, bias, gamma), 37); });
    }
    {
        StftPlan plan = StftPlan::make(4, 8000);
        const int length = 24;
        const int frames = plan.frames_for(length);
        auto re = rn({1, plan.bins(), frames}, 0.5);
        auto im = rn({1, plan.bins(), frames}, 0.5);
        check("istft", {re, im},
              [=] { return gc::weighted_sum(istft_op(re, im, plan, length), 38); });
    }

    // end-to-end tiny vocoder: 2 blocks per branch, single hop-8 branch
    {
        VocoderConfig cfg;
        cfg.latent_dim = 4;
        cfg.cond_width = 12;
        cfg.cond_blocks = 1;
        cfg.hops = {8};
        cfg.widths = {16};
        cfg.branch_blocks = 2;
        cfg.kernel = 3;
        cfg.time_dim = 8;
        auto voc = make_vocoder<double>(cfg, 31);
        Rng prng(90);
        for (auto& p : voc.ps.vars())
            for (auto& v : p->value) v += 0.05 * prng.normal();
        StftPlan plan = StftPlan::make(8, cfg.sample_rate);
        auto lat = ad::constant<double>({1, 4, 8}, [&] {
            Rng r2(91);
            std::vector<double> v(32);
            for (auto& x : v) x = 0.5 * r2.normal();
            return v;
        }());
        std::vector<double> x_t(64), x1(64);
        {
            Rng r2(92);
            for (auto& v : x_t) v = r2.normal();
            Rng r3(93);
            for (auto& v : x1) v = 0.4 * r3.normal();
        }
        auto weights = frame_energy(x1, plan);
        check("model_vocoder_tiny", voc.ps.vars(), [=] {
            auto cond = condition_latents(voc, lat);
            auto pred = predict_waveform(voc, x_t, 1, 0.37, cond);
            return fm_data_loss(pred, x1, weights, plan);
        });
    }

    // end-to-end tiny DiT: one block, width 16
    {
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
        Rng prng(12);
        for (auto& p : dit.ps.vars())
            for (auto& v : p->value) v += 0.05 * prng.normal();
        std::vector<CaptionTokens> toks{tokenize_caption("sine mid", cfg.vocab, cfg.max_tokens),
                                        tokenize_caption("", cfg.vocab, cfg.max_tokens)};
        std::vector<double> x1(std::size_t(2) * cfg.latent_dim * cfg.frames);
        Rng r2(6, 6);
        for (auto& v : x1) v = r2.normal();
        FlowSample<double> fsamp;
        {
            Rng r3(7, 7);
            fsamp = make_path_sample(x1, r3, 0.43);
        }
        check("model_dit_tiny", dit.ps.vars(), [=] {
            auto v_hat = dit_forward(dit, fsamp.xt, 2, fsamp.t, toks);
            return fm_velocity_loss(v_hat, fsamp);
        });
    }

    out << (all_ok ? "grad-check passed: " : "grad-check FAILED: ") << n_checks
        << " checks, worst rel_err=" << fmt_num(worst) << "\n";
    return all_ok;
}

// ---- command defaults ----

namespace {

using DefaultFn = std::function<std::string(const FlatConfig&)>;

struct KeyDef {
    const char* key;
    const char* help;
    DefaultFn def;
};

struct CommandDef {
    const char* name;
    const char* help;
    std::vector<KeyDef> keys;
};

DefaultFn lit(const char* v) {
    return [v](const FlatConfig&) { return std::string(v); };
}

DefaultFn under_out(const char* suffix) {
    return [suffix](const FlatConfig& c) { return c.str("out_dir") + suffix; };
}

const std::vector<CommandDef>& commands() {
    static const std::vector<CommandDef> defs = [] {
        std::vector<CommandDef> v;
        KeyDef out_dir{"out_dir", "artifact tree root", lit("out")};
        KeyDef corpus{"corpus", "corpus directory with manifest.jsonl", under_out("/corpus")};

        v.push_back({"synth-data",
                     "generate the synthetic labeled corpus",
                     {out_dir,
                      {"clips_per_class", "clips per sound class", lit("50")},
                      {"clip_seconds", "clip length in seconds", lit("1.6")},
                      {"sample_rate", "sample rate in Hz", lit("8000")},
                      {"snr_db", "additive noise floor SNR", lit("30")},
                      {"seed", "master corpus seed", lit("1234")}}});

        v.push_back({"encode-latents",
                     "encode corpus clips with a latent provider",
                     {out_dir, corpus,
                      {"provider", "semantic-oracle | acoustic-mel | toy-mae",
                       lit("semantic-oracle")},
                      {"latents_out", "output directory for .lat files",
                       [](const FlatConfig& c) {
                           return c.str("corpus") + "/latents-" + c.str("provider");
                       }},
                      {"split", "rows to encode: all | train | test", lit("all")},
                      {"mae_ckpt", "toy-mae encoder checkpoint (trained if absent)",
                       [](const FlatConfig& c) {
                           return c.str("provider") == "toy-mae"
                                      ? c.str("out_dir") + "/ckpt/mae.ckpt"
                                      : std::string();
                       }},
                      {"mae_steps", "toy-mae pretraining steps", lit("2000")},
                      {"seed", "toy-mae pretraining seed", lit("4242")}}});

        v.push_back({"train-vocoder",
                     "train the latent-to-waveform model",
                     {out_dir, corpus,
                      {"latents", "directory of encoded .lat files",
                       [](const FlatConfig& c) {
                           return c.str("corpus") + "/latents-semantic-oracle";
                       }},
                      {"split", "training rows: train | test | all", lit("train")},
                      {"objective", "flow | recon", lit("flow")},
                      {"profile", "model size: desk | paper", lit("desk")},
                      {"steps", "optimizer steps", lit("20000")},
                      {"lr", "learning rate", lit("0.0002")},
                      {"weight_decay", "AdamW weight decay", lit("0")},
                      {"sigma", "noise scale of the flow prior", lit("1")},
                      {"seed", "training seed", lit("1")},
                      {"ckpt_out", "checkpoint output path", under_out("/ckpt/vocoder.ckpt")}}});

        v.push_back({"train-dit",
                     "train the text-to-latent transformer",
                     {out_dir, corpus,
                      {"latents", "directory of encoded .lat files",
                       [](const FlatConfig& c) {
                           return c.str("corpus") + "/latents-semantic-oracle";
                       }},
                      {"split", "training rows: train | test | all", lit("train")},
                      {"profile", "model size: desk | paper", lit("desk")},
                      {"steps", "optimizer steps", lit("20000")},
                      {"batch", "sequences per step", lit("4")},
                      {"lr", "learning rate", lit("0.001")},
                      {"weight_decay", "AdamW weight decay", lit("0")},
                      {"drop_prob", "caption dropout probability", lit("0.1")},
                      {"sigma", "noise scale of the flow prior", lit("1")},
                      {"seed", "training seed", lit("1")},
                      {"ckpt_out", "checkpoint output path", under_out("/ckpt/dit.ckpt")}}});

        v.push_back({"sample",
                     "caption -> latents -> waveform",
                     {out_dir,
                      {"dit", "text-to-latent checkpoint", under_out("/ckpt/dit.ckpt")},
                      {"voc", "vocoder checkpoint", under_out("/ckpt/vocoder.ckpt")},
                      {"caption", "text condition (empty = unconditional)", lit("")},
                      {"steps_latent", "Euler steps for latent generation", lit("100")},
                      {"steps_wav", "Euler steps for vocoding", lit("200")},
                      {"cfg", "guidance scale for latent generation", lit("3.5")},
                      {"seed", "sampling seed", lit("0")},
                      {"out", "output wav path",
                       [](const FlatConfig& c) {
                           return c.str("out_dir") + "/gen/sample-s" + c.str("seed") + ".wav";
                       }}}});

        v.push_back({"vocode",
                     "render one latent file to a waveform",
                     {out_dir,
                      {"voc", "vocoder checkpoint", under_out("/ckpt/vocoder.ckpt")},
                      {"latents", "input .lat file", lit("")},
                      {"steps", "Euler steps", lit("200")},
                      {"seed", "sampling seed", lit("0")},
                      {"out", "output wav path", under_out("/gen/vocode.wav")}}});

        v.push_back({"eval",
                     "score generated audio against the reference corpus",
                     {out_dir, corpus,
                      {"gen", "directory of generated wavs", under_out("/gen")},
                      {"split", "reference rows: test | train | all", lit("test")},
                      {"judge_split", "rows the caption judge trains on", lit("train")},
                      {"csv_out", "summary CSV path", under_out("/reports/eval.csv")},
                      {"jsonl_out", "per-clip JSONL path", under_out("/reports/eval.jsonl")}}});

        v.push_back({"probe",
                     "linear-probe latent providers on the corpus",
                     {out_dir, corpus,
                      {"providers", "comma list of provider tags",
                       lit("semantic-oracle,acoustic-mel")},
                      {"seeds", "comma list of split seeds", lit("1,2,3")},
                      {"mae_ckpt", "toy-mae encoder checkpoint", under_out("/ckpt/mae.ckpt")},
                      {"csv_out", "per-seed CSV path", under_out("/reports/probe.csv")}}});

        v.push_back({"project",
                     "2-D PCA of pooled latents for a quick look",
                     {out_dir, corpus,
                      {"provider", "latent provider tag", lit("semantic-oracle")},
                      {"mae_ckpt", "toy-mae encoder checkpoint", under_out("/ckpt/mae.ckpt")},
                      {"csv_out", "coordinates CSV path",
                       [](const FlatConfig& c) {
                           return c.str("out_dir") + "/reports/pca-" + c.str("provider") + ".csv";
                       }}}});

        v.push_back({"sweep",
                     "guidance x steps grid: Fréchet + caption accuracy CSV",
                     {out_dir, corpus,
                      {"dit", "text-to-latent checkpoint", under_out("/ckpt/dit.ckpt")},
                      {"voc", "vocoder checkpoint", under_out("/ckpt/vocoder.ckpt")},
                      {"cfg_grid", "guidance scales", lit("1,2,3.5,5")},
                      {"steps_grid", "latent Euler step counts", lit("10,25,50,100")},
                      {"per_caption", "clips generated per caption", lit("2")},
                      {"steps_wav", "Euler steps for vocoding", lit("200")},
                      {"split", "reference rows: test | train | all", lit("test")},
                      {"judge_split", "rows the caption judge trains on", lit("train")},
                      {"seed", "base sampling seed", lit("0")},
                      {"csv_out", "grid CSV path", under_out("/reports/sweep.csv")}}});

        v.push_back({"grad-check",
                     "finite-difference check of every op and tiny models",
                     {{"tolerance", "max relative error", lit("0.01")}}});
        return v;
    }();
    return defs;
}

const CommandDef* find_command(const std::string& name) {
    for (const CommandDef& c : commands())
        if (name == c.name) return &c;
    return nullptr;
}

}  // namespace

FlatConfig resolve_defaults(const std::string& command, const FlatConfig& given) {
    const CommandDef* cd = find_command(command);
    if (!cd) raise(ErrorKind::Usage, "unknown command: " + command);
    FlatConfig res;
    for (const KeyDef& kd : cd->keys)
        res.set(kd.key, given.has(kd.key) ? given.str(kd.key) : kd.def(res));
    return res;
}

// ---- command bodies ----

namespace {

std::vector<ManifestRow> manifest_rows(const std::string& corpus_dir) {
    return read_manifest(corpus_dir + "/manifest.jsonl");
}

std::vector<ManifestRow> pick_split(const std::vector<ManifestRow>& rows,
                                    const std::string& which) {
    if (which == "all") return rows;
    CorpusSplit sp = split_rows(rows);
    if (which == "train") return sp.train;
    if (which == "test") return sp.test;
    raise(ErrorKind::Config, "split must be train, test, or all; got '" + which + "'");
}

std::vector<AudioClip> load_split_clips(const std::vector<ManifestRow>& rows,
                                        const std::string& corpus_dir) {
    std::vector<AudioClip> clips;
    clips.reserve(rows.size());
    for (const ManifestRow& r : rows) clips.push_back(load_clip(r, corpus_dir));
    return clips;
}

std::vector<LatentSeq> load_split_latents(const std::vector<ManifestRow>& rows,
                                          const std::string& dir) {
    std::vector<LatentSeq> latents;
    latents.reserve(rows.size());
    for (const ManifestRow& r : rows) latents.push_back(load_latents(dir + "/" + latent_filename(r.path)));
    return latents;
}

void create_parent_dirs(const std::string& path) {
    std::error_code ec;
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent, ec);
    if (ec) raise(ErrorKind::Io, "cannot create " + parent.string() + ": " + ec.message());
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string token;
    std::istringstream in(csv);
    while (std::getline(in, token, ',')) {
        std::string t = trim(token);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

CaptionJudge judge_from_rows(const std::vector<ManifestRow>& rows, const std::string& corpus_dir) {
    std::vector<LatentSeq> feats;
    std::vector<std::string> captions;
    feats.reserve(rows.size());
    for (const ManifestRow& r : rows) {
        feats.push_back(encode_acoustic_mel(load_clip(r, corpus_dir)));
        captions.push_back(r.caption);
    }
    return train_caption_judge(feats, captions);
}

int cmd_synth_data(const FlatConfig& cfg, std::ostream& out) {
    CorpusSpec spec = CorpusSpec::defaults();
    spec.clips_per_class = int(cfg.integer("clips_per_class"));
    spec.clip_seconds = cfg.number("clip_seconds");
    spec.sample_rate = int(cfg.integer("sample_rate"));
    spec.snr_db = cfg.number("snr_db");
    spec.seed = cfg.seed("seed");
    ensure_out_tree(cfg.str("out_dir"));
    const std::string corpus_dir = cfg.str("out_dir") + "/corpus";
    auto rows = synth_corpus(spec, corpus_dir);
    out << "synth-data: wrote " << rows.size() << " clips to " << corpus_dir << "\n";
    return 0;
}

int cmd_encode_latents(const FlatConfig& cfg, std::ostream& out) {
    const std::string corpus_dir = cfg.str("corpus");
    const std::string provider = cfg.str("provider");
    auto rows = manifest_rows(corpus_dir);
    auto sel = pick_split(rows, cfg.str("split"));

    Checkpoint mae;
    bool have_mae = false;
    if (provider == "toy-mae") {
        const std::string mae_path = cfg.str("mae_ckpt");
        if (fs::exists(mae_path)) {
            mae = Checkpoint::load(mae_path);
        } else {
            auto train_clips = load_split_clips(split_rows(rows).train, corpus_dir);
            MaeConfig mc;
            mc.steps = int(cfg.integer("mae_steps"));
            mc.seed = cfg.seed("seed");
            auto res = train_toy_mae(train_clips, mc);
            create_parent_dirs(mae_path);
            res.ckpt.save(mae_path);
            mae = std::move(res.ckpt);
            out << "encode-latents: trained toy-mae encoder -> " << mae_path << "\n";
        }
        have_mae = true;
    }

    const std::string latents_out = cfg.str("latents_out");
    std::error_code ec;
    fs::create_directories(latents_out, ec);
    if (ec) raise(ErrorKind::Io, "cannot create " + latents_out + ": " + ec.message());
    for (const ManifestRow& r : sel) {
        AudioClip clip = load_clip(r, corpus_dir);
        LatentSeq lat = encode_clip(clip, provider, have_mae ? &mae : nullptr);
        save_latents(latents_out + "/" + latent_filename(r.path), lat);
    }
    out << "encode-latents: " << sel.size() << " sequences (" << provider << ") -> " << latents_out
        << "\n";
    return 0;
}

int cmd_train_vocoder(const FlatConfig& cfg, std::ostream& out) {
    const std::string corpus_dir = cfg.str("corpus");
    auto sel = pick_split(manifest_rows(corpus_dir), cfg.str("split"));
    auto clips = load_split_clips(sel, corpus_dir);
    auto latents = load_split_latents(sel, cfg.str("latents"));
    if (latents.empty()) raise(ErrorKind::Config, "no training rows selected");

    const std::string profile = cfg.str("profile");
    VocoderConfig vc;
    if (profile == "desk")
        vc = VocoderConfig::desk();
    else if (profile == "paper")
        vc = VocoderConfig::paper();
    else
        raise(ErrorKind::Config, "profile must be desk or paper; got '" + profile + "'");
    vc.latent_dim = latents[0].dim;

    VocTrainConfig tc;
    tc.steps = int(cfg.integer("steps"));
    tc.lr = cfg.number("lr");
    tc.weight_decay = cfg.number("weight_decay");
    tc.sigma = cfg.number("sigma");
    tc.seed = cfg.seed("seed");
    tc.objective = cfg.str("objective");

    auto res = train_vocoder(clips, latents, vc, tc);
    const std::string ckpt_out = cfg.str("ckpt_out");
    create_parent_dirs(ckpt_out);
    res.ckpt.save(ckpt_out);

    double tail = 0;
    std::size_t n_tail = std::min<std::size_t>(100, res.loss_history.size());
    for (std::size_t i = res.loss_history.size() - n_tail; i < res.loss_history.size(); ++i)
        tail += res.loss_history[i];
    out << "train-vocoder: " << tc.steps << " steps (" << tc.objective << ", "
        << latents[0].provider << "), tail loss " << fmt_num(tail / double(n_tail)) << " -> "
        << ckpt_out << "\n";
    return 0;
}

int cmd_train_dit(const FlatConfig& cfg, std::ostream& out) {
    const std::string corpus_dir = cfg.str("corpus");
    auto sel = pick_split(manifest_rows(corpus_dir), cfg.str("split"));
    auto latents = load_split_latents(sel, cfg.str("latents"));
    if (latents.empty()) raise(ErrorKind::Config, "no training rows selected");
    std::vector<std::string> captions;
    captions.reserve(sel.size());
    for (const ManifestRow& r : sel) captions.push_back(r.caption);

    const std::string profile = cfg.str("profile");
    DitConfig dc;
    if (profile == "desk")
        dc = DitConfig::desk();
    else if (profile == "paper")
        dc = DitConfig::paper();
    else
        raise(ErrorKind::Config, "profile must be desk or paper; got '" + profile + "'");
    dc.latent_dim = latents[0].dim;
    dc.frames = latents[0].frames;
    dc.frame_rate = latents[0].frame_rate;

    DitTrainConfig tc;
    tc.steps = int(cfg.integer("steps"));
    tc.batch = int(cfg.integer("batch"));
    tc.lr = cfg.number("lr");
    tc.weight_decay = cfg.number("weight_decay");
    tc.drop_prob = cfg.number("drop_prob");
    tc.sigma = cfg.number("sigma");
    tc.seed = cfg.seed("seed");

    auto res = train_dit(latents, captions, dc, tc);
    const std::string ckpt_out = cfg.str("ckpt_out");
    create_parent_dirs(ckpt_out);
    res.ckpt.save(ckpt_out);

    double tail = 0;
    std::size_t n_tail = std::min<std::size_t>(100, res.loss_history.size());
    for (std::size_t i = res.loss_history.size() - n_tail; i < res.loss_history.size(); ++i)
        tail += res.loss_history[i];
    out << "train-dit: " << tc.steps << " steps (" << latents[0].provider << "), tail loss "
        << fmt_num(tail / double(n_tail)) << " -> " << ckpt_out << "\n";
    return 0;
}

int cmd_sample(const FlatConfig& cfg, std::ostream& out) {
    Checkpoint dit_ck = Checkpoint::load(cfg.str("dit"));
    Checkpoint voc_ck = Checkpoint::load(cfg.str("voc"));
    const std::string caption = cfg.str("caption");
    const std::uint64_t seed = cfg.seed("seed");

    SamplerConfig lat_cfg = dit_sampler_defaults();
    lat_cfg.steps = int(cfg.integer("steps_latent"));
    lat_cfg.guidance_scale = cfg.number("cfg");
    lat_cfg.seed = seed;
    LatentSeq lat = generate_latents(caption, dit_ck, lat_cfg);

    SamplerConfig wav_cfg;
    wav_cfg.steps = int(cfg.integer("steps_wav"));
    wav_cfg.guidance_scale = 1.0;
    wav_cfg.prediction = SamplerConfig::Prediction::Data;
    wav_cfg.seed = seed;
    AudioClip clip = vocode(lat, voc_ck, wav_cfg);

    const std::string out_path = cfg.str("out");
    create_parent_dirs(out_path);
    write_wav(out_path, clip);
    {
        nlohmann::json j;
        j["caption"] = caption;
        j["seed"] = seed;
        j["cfg"] = lat_cfg.guidance_scale;
        j["steps_latent"] = lat_cfg.steps;
        j["steps_wav"] = wav_cfg.steps;
        std::ofstream side(out_path + ".json");
        if (!side) raise(ErrorKind::Io, "cannot write " + out_path + ".json");
        side << j.dump() << "\n";
    }
    out << "sample: '" << caption << "' -> " << out_path << " (" << clip.samples.size()
        << " samples)\n";
    return 0;
}

int cmd_vocode(const FlatConfig& cfg, std::ostream& out) {
    const std::string lat_path = cfg.str("latents");
    if (lat_path.empty()) raise(ErrorKind::Usage, "vocode needs --latents <file.lat>");
    Checkpoint voc_ck = Checkpoint::load(cfg.str("voc"));
    LatentSeq lat = load_latents(lat_path);

    SamplerConfig wav_cfg;
    wav_cfg.steps = int(cfg.integer("steps"));
    wav_cfg.guidance_scale = 1.0;
    wav_cfg.prediction = SamplerConfig::Prediction::Data;
    wav_cfg.seed = cfg.seed("seed");
    AudioClip clip = vocode(lat, voc_ck, wav_cfg);

    const std::string out_path = cfg.str("out");
    create_parent_dirs(out_path);
    write_wav(out_path, clip);
    out << "vocode: " << lat_path << " -> " << out_path << " (" << clip.samples.size()
        << " samples)\n";
    return 0;
}

int cmd_eval(const FlatConfig& cfg, std::ostream& out) {
    const std::string corpus_dir = cfg.str("corpus");
    auto rows = manifest_rows(corpus_dir);
    auto ref_rows = pick_split(rows, cfg.str("split"));
    auto ref_clips = load_split_clips(ref_rows, corpus_dir);

    std::vector<std::string> gen_paths;
    const std::string gen_dir = cfg.str("gen");
    if (!fs::is_directory(gen_dir)) raise(ErrorKind::Io, "not a directory: " + gen_dir);
    for (const auto& entry : fs::directory_iterator(gen_dir))
        if (entry.path().extension() == ".wav") gen_paths.push_back(entry.path().string());
    std::sort(gen_paths.begin(), gen_paths.end());
    if (gen_paths.empty()) raise(ErrorKind::Config, "no .wav files under " + gen_dir);

    std::vector<AudioClip> gen_clips;
    gen_clips.reserve(gen_paths.size());
    for (const std::string& p : gen_paths) gen_clips.push_back(read_wav(p));

    double fd = frechet_audio(gen_clips, ref_clips);
    CaptionJudge judge = judge_from_rows(pick_split(rows, cfg.str("judge_split")), corpus_dir);

    const std::string jsonl_out = cfg.str("jsonl_out");
    create_parent_dirs(jsonl_out);
    std::ofstream jout(jsonl_out);
    if (!jout) raise(ErrorKind::Io, "cannot write " + jsonl_out);

    long judged = 0, correct = 0;
    for (std::size_t i = 0; i < gen_paths.size(); ++i) {
        int cls = judge_class(judge, encode_acoustic_mel(gen_clips[i]));
        nlohmann::json j;
        j["path"] = fs::path(gen_paths[i]).filename().string();
        j["predicted"] = judge.classes[std::size_t(cls)];
        std::ifstream side(gen_paths[i] + ".json");
        if (side) {
            nlohmann::json meta = nlohmann::json::parse(side, nullptr, false);
            if (meta.is_object() && meta.contains("caption") && meta["caption"].is_string()) {
                std::string cap = meta["caption"].get<std::string>();
                j["caption"] = cap;
                bool ok = cap == judge.classes[std::size_t(cls)];
                j["correct"] = ok;
                ++judged;
                if (ok) ++correct;
            }
        }
        jout << j.dump() << "\n";
    }

    std::string acc = judged ? fmt_num(double(correct) / double(judged)) : std::string("na");
    write_csv(cfg.str("csv_out"), {"n_gen", "n_ref", "frechet", "n_judged", "accuracy"},
              {{fmt_num(double(gen_clips.size())), fmt_num(double(ref_clips.size())), fmt_num(fd),
                fmt_num(double(judged)), acc}});
    out << "eval: frechet=" << fmt_num(fd) << " accuracy=" << acc << " (" << gen_clips.size()
        << " gen vs " << ref_clips.size() << " ref)\n";
    return 0;
}

int cmd_probe(const FlatConfig& cfg, std::ostream& out) {
    const std::string corpus_dir = cfg.str("corpus");
    auto rows = manifest_rows(corpus_dir);
    auto clips = load_split_clips(rows, corpus_dir);
    std::vector<std::string> labels;
    labels.reserve(rows.size());
    for (const ManifestRow& r : rows) labels.push_back(r.class_name);

    auto providers = split_list(cfg.str("providers"));
    auto seed_list = split_list(cfg.str("seeds"));
    if (providers.empty()) raise(ErrorKind::Config, "probe needs at least one provider");
    if (seed_list.empty()) raise(ErrorKind::Config, "probe needs at least one split seed");

    Checkpoint mae;
    bool have_mae = false;
    std::vector<std::vector<std::string>> csv_rows;
    for (const std::string& provider : providers) {
        if (provider == "toy-mae" && !have_mae) {
            mae = Checkpoint::load(cfg.str("mae_ckpt"));
            have_mae = true;
        }
        std::vector<LatentSeq> latents;
        latents.reserve(clips.size());
        for (const AudioClip& c : clips)
            latents.push_back(encode_clip(c, provider, have_mae ? &mae : nullptr));
        double mean_acc = 0;
        for (const std::string& s : seed_list) {
            std::uint64_t seed = std::strtoull(s.c_str(), nullptr, 10);
            ProbeResult r = linear_probe(latents, labels, seed);
            mean_acc += r.accuracy;
            csv_rows.push_back({provider, s, fmt_num(r.accuracy)});
        }
        mean_acc /= double(seed_list.size());
        csv_rows.push_back({provider, "mean", fmt_num(mean_acc)});
        out << "probe: " << provider << " mean accuracy " << fmt_num(mean_acc) << " over "
            << seed_list.size() << " split seeds\n";
    }
    write_csv(cfg.str("csv_out"), {"provider", "split_seed", "accuracy"}, csv_rows);
    return 0;
}

int cmd_project(const FlatConfig& cfg, std::ostream& out) {
    const std::string corpus_dir = cfg.str("corpus");
    const std::string provider = cfg.str("provider");
    auto rows = manifest_rows(corpus_dir);

    Checkpoint mae;
    bool have_mae = false;
    if (provider == "toy-mae") {
        mae = Checkpoint::load(cfg.str("mae_ckpt"));
        have_mae = true;
    }
    std::vector<LatentSeq> latents;
    latents.reserve(rows.size());
    for (const ManifestRow& r : rows)
        latents.push_back(encode_clip(load_clip(r, corpus_dir), provider, have_mae ? &mae : nullptr));

    PcaResult pca = pca_project(latents);
    std::vector<std::vector<std::string>> csv_rows;
    csv_rows.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        csv_rows.push_back({rows[i].path, rows[i].class_name, fmt_num(pca.coords[2 * i]),
                            fmt_num(pca.coords[2 * i + 1])});
    write_csv(cfg.str("csv_out"), {"path", "class", "x", "y"}, csv_rows);
    out << "project: " << provider << " explained " << fmt_num(pca.explained[0]) << " + "
        << fmt_num(pca.explained[1]) << " -> " << cfg.str("csv_out") << "\n";
    return 0;
}

int cmd_sweep(const FlatConfig& cfg, std::ostream& out) {
    auto cfg_grid = parse_grid(cfg.str("cfg_grid"));
    auto steps_grid = parse_grid(cfg.str("steps_grid"));
    if (cfg_grid.empty() || steps_grid.empty())
        raise(ErrorKind::Config, "sweep grids must be non-empty");

    Checkpoint dit_ck = Checkpoint::load(cfg.str("dit"));
    Checkpoint voc_ck = Checkpoint::load(cfg.str("voc"));
    const std::string corpus_dir = cfg.str("corpus");
    auto rows = manifest_rows(corpus_dir);
    auto ref_rows = pick_split(rows, cfg.str("split"));
    auto ref_clips = load_split_clips(ref_rows, corpus_dir);
    CaptionJudge judge = judge_from_rows(pick_split(rows, cfg.str("judge_split")), corpus_dir);

    std::vector<std::string> captions;
    {
        std::set<std::string> uniq;
        for (const ManifestRow& r : ref_rows) uniq.insert(r.caption);
        captions.assign(uniq.begin(), uniq.end());
    }
    const int per_caption = int(cfg.integer("per_caption"));
    if (per_caption < 1) raise(ErrorKind::Config, "per_caption must be >= 1");
    const int steps_wav = int(cfg.integer("steps_wav"));
    const std::uint64_t base_seed = cfg.seed("seed");

    std::vector<std::vector<std::string>> csv_rows;
    for (std::size_t gi = 0; gi < cfg_grid.size(); ++gi) {
        for (std::size_t si = 0; si < steps_grid.size(); ++si) {
            int lat_steps = int(std::llround(steps_grid[si]));
            if (lat_steps < 1) raise(ErrorKind::Config, "steps grid entries must be >= 1");
            std::vector<AudioClip> gen;
            long correct = 0;
            for (std::size_t ci = 0; ci < captions.size(); ++ci) {
                for (int k = 0; k < per_caption; ++k) {
                    std::uint64_t stream =
                        ((gi * steps_grid.size() + si) * captions.size() + ci) *
                            std::uint64_t(per_caption) +
                        std::uint64_t(k);
                    std::uint64_t seed = mix_seed(base_seed, stream);
                    SamplerConfig lat_cfg = dit_sampler_defaults();
                    lat_cfg.steps = lat_steps;
                    lat_cfg.guidance_scale = cfg_grid[gi];
                    lat_cfg.seed = seed;
                    LatentSeq lat = generate_latents(captions[ci], dit_ck, lat_cfg);
                    SamplerConfig wav_cfg;
                    wav_cfg.steps = steps_wav;
                    wav_cfg.prediction = SamplerConfig::Prediction::Data;
                    wav_cfg.seed = seed;
                    AudioClip clip = vocode(lat, voc_ck, wav_cfg);
                    int cls = judge_class(judge, encode_acoustic_mel(clip));
                    if (judge.classes[std::size_t(cls)] == captions[ci]) ++correct;
                    gen.push_back(std::move(clip));
                }
            }
            double fd = frechet_audio(gen, ref_clips);
            double acc = double(correct) / double(gen.size());
            csv_rows.push_back(
                {fmt_num(cfg_grid[gi]), fmt_num(double(lat_steps)), fmt_num(fd), fmt_num(acc)});
        }
    }
    write_csv(cfg.str("csv_out"), {"cfg", "steps", "frechet", "accuracy"}, csv_rows);
    out << "sweep: " << csv_rows.size() << " grid points -> " << cfg.str("csv_out") << "\n";
    return 0;
}

int cmd_grad_check(const FlatConfig& cfg, std::ostream& out) {
    if (!run_grad_checks(out, cfg.number("tolerance")))
        raise(ErrorKind::Numeric, "gradient check exceeded tolerance");
    return 0;
}

}  // namespace

int run_command(const std::string& command, const FlatConfig& cfg, std::ostream& out) {
    if (command == "synth-data") return cmd_synth_data(cfg, out);
    if (command == "encode-latents") return cmd_encode_latents(cfg, out);
    if (command == "train-vocoder") return cmd_train_vocoder(cfg, out);
    if (command == "train-dit") return cmd_train_dit(cfg, out);
    if (command == "sample") return cmd_sample(cfg, out);
    if (command == "vocode") return cmd_vocode(cfg, out);
    if (command == "eval") return cmd_eval(cfg, out);
    if (command == "probe") return cmd_probe(cfg, out);
    if (command == "project") return cmd_project(cfg, out);
    if (command == "sweep") return cmd_sweep(cfg, out);
    if (command == "grad-check") return cmd_grad_check(cfg, out);
    raise(ErrorKind::Usage, "unknown command: " + command);
}

}  // namespace flowvoc
