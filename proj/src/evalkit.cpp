#include "flowvoc/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>

#include "flowvoc/autodiff.hpp"
#include "flowvoc/dsp.hpp"
#include "flowvoc/error.hpp"
#include "flowvoc/rng.hpp"

namespace flowvoc {

namespace {

// time-pooled feature row per sequence
std::vector<std::vector<double>> pool_latents(const std::vector<LatentSeq>& latents) {
    std::vector<std::vector<double>> rows;
    rows.reserve(latents.size());
    for (const LatentSeq& l : latents) {
        require(l.batch == 1, ErrorKind::Contract, "expected one clip per sequence");
        require(l.dim == latents[0].dim, ErrorKind::Contract, "latent dims differ");
        require(l.frames > 0, ErrorKind::Contract, "empty latent sequence");
        std::vector<double> row(std::size_t(l.dim), 0.0);
        for (int d = 0; d < l.dim; ++d) {
            double s = 0;
            for (int f = 0; f < l.frames; ++f) s += l.at(0, d, f);
            row[std::size_t(d)] = s / l.frames;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

ProbeResult linear_probe(const std::vector<LatentSeq>& latents,
                         const std::vector<std::string>& labels, std::uint64_t split_seed) {
    require(!latents.empty() && latents.size() == labels.size(), ErrorKind::Contract,
            "need one label per latent sequence");
    for (const LatentSeq& l : latents)
        require(l.provider == latents[0].provider, ErrorKind::Contract, "mixed latent providers");

    std::map<std::string, int> class_id;
    for (const std::string& s : labels) class_id.emplace(s, 0);
    require(class_id.size() >= 2, ErrorKind::Contract, "probe needs at least two classes");
    ProbeResult res;
    res.split_seed = split_seed;
    res.provider = latents[0].provider;
    for (auto& [name, id] : class_id) {
        id = int(res.classes.size());
        res.classes.push_back(name);
    }
    int n_classes = int(res.classes.size());

    std::vector<std::vector<double>> rows = pool_latents(latents);
    int dim = int(rows[0].size());

    // stratified 80/20 split, shuffled per class
    std::vector<std::vector<std::size_t>> by_class;
    by_class.resize(std::size_t(n_classes));
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_class[std::size_t(class_id[labels[i]])].push_back(i);
    std::vector<std::size_t> train_idx, test_idx;
    for (int c = 0; c < n_classes; ++c) {
        auto& idx = by_class[std::size_t(c)];
        Rng rng(split_seed, 0x5fa17000ull + std::uint64_t(c));
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[std::size_t(rng.uniform_int(0, std::int64_t(i) - 1))]);
        std::size_t n_train = std::max<std::size_t>(1, idx.size() * 4 / 5);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? train_idx : test_idx).push_back(idx[i]);
    }
    require(!test_idx.empty(), ErrorKind::Contract, "test split is empty");

    // z-score with train-split stats so channel rescalings cancel out
    std::vector<double> mu(std::size_t(dim), 0.0), sd(std::size_t(dim), 0.0);
    for (std::size_t i : train_idx)
        for (int d = 0; d < dim; ++d) mu[std::size_t(d)] += rows[i][std::size_t(d)];
    for (double& v : mu) v /= double(train_idx.size());
    for (std::size_t i : train_idx)
        for (int d = 0; d < dim; ++d) {
            double c = rows[i][std::size_t(d)] - mu[std::size_t(d)];
            sd[std::size_t(d)] += c * c;
        }
    for (double& v : sd) {
        v = std::sqrt(v / double(train_idx.size()));
        if (v < 1e-8) v = 1.0;
    }
    auto zrow = [&](std::size_t i, std::vector<double>& out) {
        for (int d = 0; d < dim; ++d)
            out[std::size_t(d)] = (rows[i][std::size_t(d)] - mu[std::size_t(d)]) / sd[std::size_t(d)];
    };

    std::vector<double> xtr(train_idx.size() * std::size_t(dim));
    std::vector<int> ytr(train_idx.size());
    std::vector<double> scratch(std::size_t(dim), 0.0);
    for (std::size_t r = 0; r < train_idx.size(); ++r) {
        zrow(train_idx[r], scratch);
        std::copy(scratch.begin(), scratch.end(), xtr.begin() + long(r) * dim);
        ytr[r] = class_id[labels[train_idx[r]]];
    }

    auto x = ad::constant<double>({int(train_idx.size()), dim}, std::move(xtr));
    auto w = ad::leaf<double>({dim, n_classes}, std::vector<double>(std::size_t(dim) * n_classes, 0.0),
                              true);
    auto b = ad::leaf<double>({n_classes}, std::vector<double>(std::size_t(n_classes), 0.0), true);
    const double lr = 0.1;
    for (int step = 0; step < 2000; ++step) {
        auto loss = ad::softmax_xent(ad::bias_add(ad::matmul(x, w), b), ytr);
        std::fill(w->grad.begin(), w->grad.end(), 0.0);
        std::fill(b->grad.begin(), b->grad.end(), 0.0);
        ad::backward(loss);
        for (std::size_t i = 0; i < w->value.size(); ++i) w->value[i] -= lr * w->grad[i];
        for (std::size_t i = 0; i < b->value.size(); ++i) b->value[i] -= lr * b->grad[i];
    }

    std::vector<long> correct(std::size_t(n_classes), 0), total(std::size_t(n_classes), 0);
    long hits = 0;
    for (std::size_t i : test_idx) {
        zrow(i, scratch);
        int best = 0;
        double best_v = 0;
        for (int c = 0; c < n_classes; ++c) {
            double v = b->value[std::size_t(c)];
            for (int d = 0; d < dim; ++d)
                v += scratch[std::size_t(d)] * w->value[std::size_t(d) * n_classes + c];
            if (c == 0 || v > best_v) {
                best = c;
                best_v = v;
            }
        }
        int truth = class_id[labels[i]];
        total[std::size_t(truth)] += 1;
        if (best == truth) {
            correct[std::size_t(truth)] += 1;
            hits += 1;
        }
    }
    res.accuracy = double(hits) / double(test_idx.size());
    res.per_class.resize(std::size_t(n_classes), 0.0);
    for (int c = 0; c < n_classes; ++c)
        if (total[std::size_t(c)] > 0)
            res.per_class[std::size_t(c)] =
                double(correct[std::size_t(c)]) / double(total[std::size_t(c)]);
    return res;
}

FeatureStats feature_stats(const std::vector<std::vector<double>>& rows) {
    require(rows.size() >= 2, ErrorKind::Contract, "need at least two feature rows");
    int dim = int(rows[0].size());
    require(dim > 0, ErrorKind::Contract, "empty feature rows");
    for (const auto& r : rows)
        require(int(r.size()) == dim, ErrorKind::Contract, "feature rows differ in size");

    FeatureStats st;
    st.dim = dim;
    st.count = long(rows.size());
    st.mean.assign(std::size_t(dim), 0.0);
    for (const auto& r : rows)
        for (int d = 0; d < dim; ++d) st.mean[std::size_t(d)] += r[std::size_t(d)];
    for (double& v : st.mean) v /= double(st.count);

    st.cov.assign(std::size_t(dim) * dim, 0.0);
    for (const auto& r : rows)
        for (int i = 0; i < dim; ++i) {
            double ci = r[std::size_t(i)] - st.mean[std::size_t(i)];
            for (int j = i; j < dim; ++j)
                st.cov[std::size_t(i) * dim + j] += ci * (r[std::size_t(j)] - st.mean[std::size_t(j)]);
        }
    for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) {
            double v = st.cov[std::size_t(i) * dim + j] / double(st.count - 1);
            st.cov[std::size_t(i) * dim + j] = v;
            st.cov[std::size_t(j) * dim + i] = v;
        }
    return st;
}

void sym_eigen(std::vector<double> a, int d, std::vector<double>& eigvals,
               std::vector<double>& eigvecs) {
    require(int(a.size()) == d * d && d > 0, ErrorKind::Contract, "matrix must be (d, d)");
    // columns of v accumulate the rotations
    std::vector<double> v(std::size_t(d) * d, 0.0);
    for (int i = 0; i < d; ++i) v[std::size_t(i) * d + i] = 1.0;

    double scale = 0;
    for (int i = 0; i < d; ++i) scale = std::max(scale, std::abs(a[std::size_t(i) * d + i]));
    scale = std::max(scale, 1e-30);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += a[std::size_t(p) * d + q] * a[std::size_t(p) * d + q];
        if (std::sqrt(off) < 1e-14 * scale * d) break;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                double apq = a[std::size_t(p) * d + q];
                if (std::abs(apq) < 1e-300) continue;
                double theta = (a[std::size_t(q) * d + q] - a[std::size_t(p) * d + p]) / (2 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1));
                double c = 1 / std::sqrt(t * t + 1), s = t * c;
                for (int k = 0; k < d; ++k) {  // rotate rows/cols p,q of a
                    double akp = a[std::size_t(k) * d + p], akq = a[std::size_t(k) * d + q];
                    a[std::size_t(k) * d + p] = c * akp - s * akq;
                    a[std::size_t(k) * d + q] = s * akp + c * akq;
                }
                for (int k = 0; k < d; ++k) {
                    double apk = a[std::size_t(p) * d + k], aqk = a[std::size_t(q) * d + k];
                    a[std::size_t(p) * d + k] = c * apk - s * aqk;
                    a[std::size_t(q) * d + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < d; ++k) {
                    double vkp = v[std::size_t(k) * d + p], vkq = v[std::size_t(k) * d + q];
                    v[std::size_t(k) * d + p] = c * vkp - s * vkq;
                    v[std::size_t(k) * d + q] = s * vkp + c * vkq;
                }
            }
    }

    std::vector<int> order(std::size_t(d), 0);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
        return a[std::size_t(i) * d + i] < a[std::size_t(j) * d + j];
    });
    eigvals.resize(std::size_t(d));
    eigvecs.assign(std::size_t(d) * d, 0.0);
    for (int r = 0; r < d; ++r) {
        int src = order[std::size_t(r)];
        eigvals[std::size_t(r)] = a[std::size_t(src) * d + src];
        for (int k = 0; k < d; ++k) eigvecs[std::size_t(r) * d + k] = v[std::size_t(k) * d + src];
    }
}

namespace {

// Q^T diag(f(lambda)) Q with negative eigenvalues clipped at zero
std::vector<double> sym_sqrt(const std::vector<double>& m, int d) {
    std::vector<double> vals, vecs;
    sym_eigen(m, d, vals, vecs);
    std::vector<double> out(std::size_t(d) * d, 0.0);
    for (int e = 0; e < d; ++e) {
        double l = std::sqrt(std::max(vals[std::size_t(e)], 0.0));
        if (l == 0) continue;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                out[std::size_t(i) * d + j] +=
                    l * vecs[std::size_t(e) * d + i] * vecs[std::size_t(e) * d + j];
    }
    return out;
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    require(a.dim == b.dim && a.dim > 0, ErrorKind::Contract, "feature dimensions differ");
    int d = a.dim;

    double fd = 0;
    for (int i = 0; i < d; ++i) {
        double c = a.mean[std::size_t(i)] - b.mean[std::size_t(i)];
        fd += c * c;
        fd += a.cov[std::size_t(i) * d + i] + b.cov[std::size_t(i) * d + i];
    }

    std::vector<double> ra = sym_sqrt(a.cov, d);
    std::vector<double> m(std::size_t(d) * d, 0.0), tmp(std::size_t(d) * d, 0.0);
    for (int i = 0; i < d; ++i)  // tmp = ra * cov_b
        for (int k = 0; k < d; ++k) {
            double x = ra[std::size_t(i) * d + k];
            if (x == 0) continue;
            for (int j = 0; j < d; ++j) tmp[std::size_t(i) * d + j] += x * b.cov[std::size_t(k) * d + j];
        }
    for (int i = 0; i < d; ++i)  // m = tmp * ra
        for (int k = 0; k < d; ++k) {
            double x = tmp[std::size_t(i) * d + k];
            if (x == 0) continue;
            for (int j = 0; j < d; ++j) m[std::size_t(i) * d + j] += x * ra[std::size_t(k) * d + j];
        }
    for (int i = 0; i < d; ++i)  // absorb float asymmetry before eigen
        for (int j = i + 1; j < d; ++j) {
            double v = 0.5 * (m[std::size_t(i) * d + j] + m[std::size_t(j) * d + i]);
            m[std::size_t(i) * d + j] = v;
            m[std::size_t(j) * d + i] = v;
        }

    std::vector<double> vals, vecs;
    sym_eigen(std::move(m), d, vals, vecs);
    for (double l : vals) fd -= 2 * std::sqrt(std::max(l, 0.0));
    return std::max(fd, 0.0);
}

std::vector<double> clip_features(const AudioClip& clip, const FrechetFeatureConfig& cfg) {
    std::vector<double> mel = log_mel_frames(clip, cfg.n_mels, cfg.hop);
    int frames = int(mel.size()) / cfg.n_mels;
    require(frames > 0, ErrorKind::Contract, "clip too short for features");
    std::vector<double> pooled(std::size_t(cfg.n_mels), 0.0);
    for (int m = 0; m < cfg.n_mels; ++m) {
        double s = 0;
        for (int f = 0; f < frames; ++f) s += mel[std::size_t(m) * frames + f];
        pooled[std::size_t(m)] = s / frames;
    }
    std::vector<double> proj = orthonormal_rows(cfg.out_dim, cfg.n_mels, cfg.seed);
    std::vector<double> out(std::size_t(cfg.out_dim), 0.0);
    for (int r = 0; r < cfg.out_dim; ++r)
        out[std::size_t(r)] = std::inner_product(pooled.begin(), pooled.end(),
                                                 proj.begin() + long(r) * cfg.n_mels, 0.0);
    return out;
}

ReconMetrics recon_metrics(const AudioClip& reference, const AudioClip& generated,
                           const std::vector<int>& hops) {
    require(reference.sample_rate == generated.sample_rate, ErrorKind::Contract,
            "sample rates differ");
    require(!hops.empty(), ErrorKind::Contract, "need at least one analysis hop");
    std::size_t n = std::min(reference.samples.size(), generated.samples.size());
    require(n > 0, ErrorKind::Contract, "clips do not overlap");

    AudioClip a{std::vector<double>(reference.samples.begin(), reference.samples.begin() + long(n)),
                reference.sample_rate, ""};
    AudioClip b{std::vector<double>(generated.samples.begin(), generated.samples.begin() + long(n)),
                generated.sample_rate, ""};

    ReconMetrics out;
    for (std::size_t i = 0; i < n; ++i) out.waveform += std::abs(a.samples[i] - b.samples[i]) / double(n);

    std::vector<double> ma = log_mel_frames(a, 64, 100), mb = log_mel_frames(b, 64, 100);
    for (std::size_t i = 0; i < ma.size(); ++i) out.mel += std::abs(ma[i] - mb[i]) / double(ma.size());

    for (int hop : hops) {
        StftPlan plan = StftPlan::make(hop, a.sample_rate);
        SpectroFrame sa = stft(a.samples, plan), sb = stft(b.samples, plan);
        double acc = 0;
        for (std::size_t i = 0; i < sa.re.size(); ++i) {
            double mag_a = std::hypot(sa.re[i], sa.im[i]);
            double mag_b = std::hypot(sb.re[i], sb.im[i]);
            acc += std::abs(mag_a - mag_b);
        }
        out.stft += acc / double(sa.re.size()) / double(hops.size());
    }
    return out;
}

PcaResult pca_project(const std::vector<LatentSeq>& latents) {
    require(latents.size() >= 3, ErrorKind::Contract, "need at least 3 sequences");
    std::vector<std::vector<double>> rows = pool_latents(latents);
    int n = int(rows.size()), dim = int(rows[0].size());

    std::vector<double> mean(std::size_t(dim), 0.0);
    for (const auto& r : rows)
        for (int d = 0; d < dim; ++d) mean[std::size_t(d)] += r[std::size_t(d)] / n;
    for (auto& r : rows)
        for (int d = 0; d < dim; ++d) r[std::size_t(d)] -= mean[std::size_t(d)];

    std::vector<double> cov(std::size_t(dim) * dim, 0.0);
    for (const auto& r : rows)
        for (int i = 0; i < dim; ++i)
            for (int j = i; j < dim; ++j)
                cov[std::size_t(i) * dim + j] += r[std::size_t(i)] * r[std::size_t(j)] / (n - 1);
    for (int i = 0; i < dim; ++i)
        for (int j = i + 1; j < dim; ++j) cov[std::size_t(j) * dim + i] = cov[std::size_t(i) * dim + j];

    std::vector<double> vals, vecs;
    sym_eigen(std::move(cov), dim, vals, vecs);

    double total = 0;
    for (double l : vals) total += std::max(l, 0.0);

    PcaResult res;
    res.coords.assign(std::size_t(n) * 2, 0.0);
    for (int k = 0; k < 2; ++k) {
        int src = dim - 1 - k;  // eigenvalues ascend; take the top two
        if (src < 0) break;
        const double* vec = &vecs[std::size_t(src) * dim];
        int arg = 0;
        for (int j = 1; j < dim; ++j)
            if (std::abs(vec[j]) > std::abs(vec[arg])) arg = j;
        double sign = vec[arg] < 0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i)
            res.coords[std::size_t(i) * 2 + k] =
                sign * std::inner_product(rows[std::size_t(i)].begin(), rows[std::size_t(i)].end(),
                                          vec, 0.0);
        res.explained[k] = total > 0 ? std::max(vals[std::size_t(src)], 0.0) / total : 0.0;
    }
    return res;
}

}  // namespace flowvoc
