#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "flowvoc/corpus.hpp"
#include "flowvoc/error.hpp"
#include "flowvoc/evalkit.hpp"
#include "flowvoc/latents.hpp"
#include "flowvoc/rng.hpp"
#include "flowvoc/vocoder.hpp"

using namespace flowvoc;

namespace {

// small labelled corpus with oracle latents, shared across probe/pca cases
struct LabelledLatents {
    std::vector<LatentSeq> latents;
    std::vector<std::string> labels;
};

const LabelledLatents& oracle_set() {
    static LabelledLatents set = [] {
        LabelledLatents s;
        CorpusSpec spec = CorpusSpec::defaults();
        for (std::size_t ci = 0; ci < spec.classes.size(); ++ci) {
            const ClassSpec& cls = spec.classes[ci];
            for (int k = 0; k < 10; ++k) {
                std::uint64_t seed = mix_seed(spec.seed, ci * 100000 + std::size_t(k));
                AudioClip clip = synth_clip(cls, spec.clip_seconds, spec.sample_rate,
                                            spec.snr_db, seed);
                clip.label = cls.name + " " + cls.bucket;
                s.latents.push_back(encode_semantic_oracle(clip));
                s.labels.push_back(cls.name);
            }
        }
        return s;
    }();
    return set;
}

AudioClip tone_clip(double freq, double seconds, int sr, double amp) {
    AudioClip c;
    c.sample_rate = sr;
    c.samples.resize(std::size_t(seconds * sr));
    for (std::size_t i = 0; i < c.samples.size(); ++i)
        c.samples[i] = amp * std::sin(2.0 * 3.14159265358979323846 * freq * double(i) / sr);
    return c;
}

}  // namespace

TEST_CASE("probe separates oracle latents almost perfectly") {
    const auto& s = oracle_set();
    ProbeResult r = linear_probe(s.latents, s.labels, 1);
    CHECK(r.accuracy >= 0.95);
    CHECK(r.provider == "semantic-oracle");
    CHECK(r.classes.size() == 8);
    CHECK(r.per_class.size() == 8);

    ProbeResult again = linear_probe(s.latents, s.labels, 1);
    CHECK(again.accuracy == r.accuracy);
    CHECK(again.per_class == r.per_class);
}

TEST_CASE("probe on shuffled labels collapses to chance level") {
    const auto& s = oracle_set();
    std::vector<std::string> shuffled = s.labels;
    Rng rng(99, 0x5480);
    for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[std::size_t(rng.uniform_int(0, std::int64_t(i) - 1))]);
    ProbeResult r = linear_probe(s.latents, shuffled, 1);
    CHECK(std::abs(r.accuracy - 1.0 / 8) <= 0.1);
}

TEST_CASE("probe is exact on cleanly separable two-class points") {
    std::vector<LatentSeq> latents;
    std::vector<std::string> labels;
    Rng rng(3, 3);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 10; ++i) {
            LatentSeq l;
            l.batch = 1;
            l.dim = 2;
            l.frames = 1;
            l.frame_rate = 1;
            l.provider = "toy";
            l.data = {float((c ? 2.0 : -2.0) + 0.1 * rng.normal()), float(0.1 * rng.normal())};
            latents.push_back(std::move(l));
            labels.push_back(c ? "right" : "left");
        }
    ProbeResult r = linear_probe(latents, labels, 7);
    CHECK(r.accuracy == 1.0);
    CHECK(r.per_class == std::vector<double>{1.0, 1.0});

    std::vector<std::string> one_class(labels.size(), "same");
    CHECK_THROWS_AS(linear_probe(latents, one_class, 7), Error);
}

TEST_CASE("probe accuracy survives per-channel rescaling") {
    const auto& s = oracle_set();
    ProbeResult base = linear_probe(s.latents, s.labels, 5);

    Rng rng(17, 17);
    std::vector<float> scale(std::size_t(s.latents[0].dim));
    for (auto& v : scale) v = float(rng.uniform(0.2, 5.0));
    std::vector<LatentSeq> scaled = s.latents;
    for (auto& l : scaled)
        for (int d = 0; d < l.dim; ++d)
            for (int f = 0; f < l.frames; ++f) l.at(0, d, f) *= scale[std::size_t(d)];

    ProbeResult r = linear_probe(scaled, s.labels, 5);
    CHECK(r.accuracy == base.accuracy);
}

TEST_CASE("symmetric eigendecomposition matches a hand-solved matrix") {
    // [[2,1],[1,2]] has eigenpairs (1, (1,-1)/sqrt 2) and (3, (1,1)/sqrt 2)
    std::vector<double> vals, vecs;
    sym_eigen({2, 1, 1, 2}, 2, vals, vecs);
    CHECK(vals[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(vals[1] == doctest::Approx(3.0).epsilon(1e-12));
    for (int e = 0; e < 2; ++e) {
        // A v = lambda v
        double a0 = 2 * vecs[std::size_t(e) * 2] + 1 * vecs[std::size_t(e) * 2 + 1];
        double a1 = 1 * vecs[std::size_t(e) * 2] + 2 * vecs[std::size_t(e) * 2 + 1];
        CHECK(a0 == doctest::Approx(vals[std::size_t(e)] * vecs[std::size_t(e) * 2]).epsilon(1e-10));
        CHECK(a1 ==
              doctest::Approx(vals[std::size_t(e)] * vecs[std::size_t(e) * 2 + 1]).epsilon(1e-10));
        double norm = std::hypot(vecs[std::size_t(e) * 2], vecs[std::size_t(e) * 2 + 1]);
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("frechet distance: identity, 1-D closed form, symmetry, errors") {
    FeatureStats a;
    a.dim = 1;
    a.count = 1000;
    a.mean = {0.0};
    a.cov = {1.0};
    FeatureStats b = a;
    b.mean = {1.0};
    CHECK(frechet_distance(a, a) <= 1e-9);
    CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-9));

    // random PSD pair: symmetric within clipping tolerance, strictly positive
    int d = 6;
    Rng rng(8, 8);
    auto rand_stats = [&]() {
        FeatureStats s;
        s.dim = d;
        s.count = 100;
        s.mean.resize(std::size_t(d));
        for (auto& v : s.mean) v = rng.normal();
        std::vector<double> m(std::size_t(d) * d);
        for (auto& v : m) v = rng.normal();
        s.cov.assign(std::size_t(d) * d, 0.0);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                for (int k = 0; k < d; ++k)
                    s.cov[std::size_t(i) * d + j] +=
                        m[std::size_t(k) * d + i] * m[std::size_t(k) * d + j] / d;
                if (i == j) s.cov[std::size_t(i) * d + j] += 0.1;
            }
        return s;
    };
    FeatureStats p = rand_stats(), q = rand_stats();
    double pq = frechet_distance(p, q), qp = frechet_distance(q, p);
    CHECK(pq > 0);
    CHECK(std::abs(pq - qp) < 1e-9);

    FeatureStats wrong = p;
    wrong.dim = d + 1;
    wrong.mean.push_back(0);
    wrong.cov.assign(std::size_t(d + 1) * (d + 1), 0.0);
    CHECK_THROWS_AS(frechet_distance(p, wrong), Error);
    CHECK_THROWS_AS(feature_stats({{1.0, 2.0}}), Error);
}

TEST_CASE("empirical frechet distance on 16-D gaussians tracks the closed form") {
    // diagonal covariances commute, so fd = |dmu|^2 + sum (sqrt c1 - sqrt c2)^2
    int d = 16, n = 50000;
    std::vector<double> mu1(std::size_t(d), 0.0), mu2(std::size_t(d), 0.0),
        c1(std::size_t(d), 0.0), c2(std::size_t(d), 0.0);
    Rng prng(21, 1);
    for (int i = 0; i < d; ++i) {
        mu1[std::size_t(i)] = prng.uniform(-1, 1);
        mu2[std::size_t(i)] = prng.uniform(-1, 1);
        c1[std::size_t(i)] = prng.uniform(0.5, 2.0);
        c2[std::size_t(i)] = prng.uniform(0.5, 2.0);
    }
    double closed = 0;
    for (int i = 0; i < d; ++i) {
        double dm = mu1[std::size_t(i)] - mu2[std::size_t(i)];
        double ds = std::sqrt(c1[std::size_t(i)]) - std::sqrt(c2[std::size_t(i)]);
        closed += dm * dm + ds * ds;
    }

    auto sample = [&](const std::vector<double>& mu, const std::vector<double>& cv,
                      std::uint64_t stream) {
        Rng rng(21, stream);
        std::vector<std::vector<double>> rows;
        rows.assign(std::size_t(n), std::vector<double>(std::size_t(d), 0.0));
        for (auto& r : rows)
            for (int i = 0; i < d; ++i)
                r[std::size_t(i)] = mu[std::size_t(i)] + std::sqrt(cv[std::size_t(i)]) * rng.normal();
        return feature_stats(rows);
    };
    FeatureStats ea = sample(mu1, c1, 100), eb = sample(mu2, c2, 200);
    double fd = frechet_distance(ea, eb);
    CHECK(fd == doctest::Approx(closed).epsilon(0.05));
}

TEST_CASE("clip features are deterministic and sized by config") {
    AudioClip c = tone_clip(440, 0.4, 8000, 0.5);
    auto f1 = clip_features(c);
    auto f2 = clip_features(c);
    CHECK(f1.size() == 16);
    CHECK(f1 == f2);
    FrechetFeatureConfig cfg;
    cfg.out_dim = 8;
    CHECK(clip_features(c, cfg).size() == 8);
}

TEST_CASE("reconstruction metrics: zeros, DC offset, half-amplitude tone") {
    AudioClip ref = tone_clip(440, 0.8, 8000, 0.7);

    ReconMetrics same = recon_metrics(ref, ref);
    CHECK(same.mel == 0.0);
    CHECK(same.stft == 0.0);
    CHECK(same.waveform == 0.0);

    AudioClip shifted = ref;
    for (double& v : shifted.samples) v += 0.25;
    ReconMetrics dc = recon_metrics(ref, shifted);
    CHECK(dc.waveform == doctest::Approx(0.25).epsilon(1e-12));

    AudioClip halved = ref;
    for (double& v : halved.samples) v *= 0.5;
    ReconMetrics hv = recon_metrics(ref, halved);
    // high-energy mel bins approach |log 0.5| exactly; quieter bins dilute the mean
    std::vector<double> ma = log_mel_frames(ref, 64, 100), mb = log_mel_frames(halved, 64, 100);
    double peak = 0;
    for (std::size_t i = 0; i < ma.size(); ++i) peak = std::max(peak, std::abs(ma[i] - mb[i]));
    CHECK(peak == doctest::Approx(std::log(2.0)).epsilon(1e-3));
    CHECK(hv.mel > 0.0);
    CHECK(hv.mel <= std::log(2.0) + 1e-9);
    CHECK(hv.stft > 0.0);
    CHECK(hv.waveform > 0.0);

    AudioClip empty;
    empty.sample_rate = 8000;
    CHECK_THROWS_AS(recon_metrics(ref, empty), Error);
}

TEST_CASE("pca: rank-1 data, rotation invariance, class separation, errors") {
    int dim = 5;
    std::vector<LatentSeq> line;
    Rng rng(31, 31);
    std::vector<float> dir(std::size_t(dim), 0.0f);
    for (auto& v : dir) v = float(rng.normal());
    for (int i = 0; i < 12; ++i) {
        LatentSeq l;
        l.batch = 1;
        l.dim = dim;
        l.frames = 1;
        l.frame_rate = 1;
        l.provider = "toy";
        float t = float(i) - 5.5f;
        for (int d = 0; d < dim; ++d) l.data.push_back(t * dir[std::size_t(d)]);
        line.push_back(std::move(l));
    }
    PcaResult pr = pca_project(line);
    CHECK(pr.explained[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(pr.explained[1] <= 1e-9);

    // orthogonal rotation leaves the spectrum (and hence the ratios) alone
    const auto& s = oracle_set();
    PcaResult base = pca_project(s.latents);
    std::vector<double> rot = orthonormal_rows(s.latents[0].dim, s.latents[0].dim, 77);
    std::vector<LatentSeq> rotated = s.latents;
    for (std::size_t i = 0; i < rotated.size(); ++i)
        for (int f = 0; f < rotated[i].frames; ++f) {
            std::vector<double> v(std::size_t(rotated[i].dim));
            for (int d = 0; d < rotated[i].dim; ++d) {
                double acc = 0;
                for (int k = 0; k < rotated[i].dim; ++k)
                    acc += rot[std::size_t(d) * rotated[i].dim + k] * s.latents[i].at(0, k, f);
                v[std::size_t(d)] = acc;
            }
            for (int d = 0; d < rotated[i].dim; ++d) rotated[i].at(0, d, f) = float(v[std::size_t(d)]);
        }
    PcaResult rotp = pca_project(rotated);
    CHECK(rotp.explained[0] == doctest::Approx(base.explained[0]).epsilon(1e-5));
    CHECK(rotp.explained[1] == doctest::Approx(base.explained[1]).epsilon(1e-5));

    // classes should separate further than they spread
    std::vector<std::string> classes;
    for (const auto& lb : s.labels)
        if (std::find(classes.begin(), classes.end(), lb) == classes.end()) classes.push_back(lb);
    std::vector<double> cx(classes.size(), 0.0), cy(classes.size(), 0.0);
    std::vector<int> cn(classes.size(), 0);
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        std::size_t c = std::size_t(
            std::find(classes.begin(), classes.end(), s.labels[i]) - classes.begin());
        cx[c] += base.coords[i * 2];
        cy[c] += base.coords[i * 2 + 1];
        cn[c] += 1;
    }
    for (std::size_t c = 0; c < classes.size(); ++c) {
        cx[c] /= cn[c];
        cy[c] /= cn[c];
    }
    double intra = 0;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        std::size_t c = std::size_t(
            std::find(classes.begin(), classes.end(), s.labels[i]) - classes.begin());
        intra += std::hypot(base.coords[i * 2] - cx[c], base.coords[i * 2 + 1] - cy[c]) /
                 double(s.labels.size());
    }
    double inter = 0;
    int pairs = 0;
    for (std::size_t a = 0; a < classes.size(); ++a)
        for (std::size_t b = a + 1; b < classes.size(); ++b) {
            inter += std::hypot(cx[a] - cx[b], cy[a] - cy[b]);
            pairs += 1;
        }
    inter /= pairs;
    CHECK(inter > intra);

    std::vector<LatentSeq> two(line.begin(), line.begin() + 2);
    CHECK_THROWS_AS(pca_project(two), Error);
}

TEST_CASE("reconstruction baseline overfits a single clip") {
    VocoderConfig cfg;
    cfg.latent_dim = 4;
    cfg.cond_width = 12;
    cfg.cond_blocks = 1;
    cfg.hops = {8};
    cfg.widths = {16};
    cfg.branch_blocks = 2;
    cfg.kernel = 3;
    cfg.time_dim = 8;
    cfg.sample_rate = 8000;

    AudioClip clip = tone_clip(500, 0.08, 8000, 0.6);  // 640 samples, 80 frames
    LatentSeq lat;
    lat.batch = 1;
    lat.dim = 4;
    lat.frames = 80;
    lat.frame_rate = 1000;
    lat.provider = "toy";
    Rng rng(5, 5);
    for (int i = 0; i < 4 * 80; ++i) lat.data.push_back(float(rng.normal()));

    VocTrainConfig tcfg;
    tcfg.objective = "recon";
    tcfg.steps = 1500;
    tcfg.lr = 4e-3;
    auto res = train_vocoder({clip}, {lat}, cfg, tcfg);
    AudioClip out = recon_waveform(lat, res.ckpt);
    ReconMetrics m = recon_metrics(clip, out);
    CHECK(m.waveform < 0.05);

    AudioClip out2 = recon_waveform(lat, res.ckpt);  // no seed dependence
    CHECK(out.samples == out2.samples);
}
