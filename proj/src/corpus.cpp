#include "flowvoc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "flowvoc/error.hpp"
#include "flowvoc/rng.hpp"

namespace flowvoc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPeak = 0.7;
// Keep partials clear of the band edge so the anti-aliased classes stay clean.
constexpr double kBandFrac = 0.45;

double detune(Rng& rng, double f0) {
    // up to half a semitone either way, so clips of one class differ in pitch
    return f0 * std::pow(2.0, rng.uniform(-0.5, 0.5) / 12.0);
}

double event_rate(const std::string& kind, const std::string& bucket) {
    bool clicks = kind == "click-train";
    if (bucket == "low") return clicks ? 6.0 : 2.0;
    if (bucket == "mid") return clicks ? 10.0 : 4.0;
    return clicks ? 16.0 : 8.0;  // high
}

void gen_tone(std::vector<double>& s, int sr, double f0, double phase) {
    for (size_t i = 0; i < s.size(); ++i) s[i] = std::sin(kTwoPi * f0 * (double(i) / sr) + phase);
}

// Octave sweep with exponential frequency trajectory f(t) = f_start * 2^(dir*t/T).
void gen_chirp(std::vector<double>& s, int sr, double f_start, double dir, double phase) {
    double T = double(s.size()) / sr;
    double k = kTwoPi * f_start * T / (dir * std::numbers::ln2);
    for (size_t i = 0; i < s.size(); ++i) {
        double t = double(i) / sr;
        s[i] = std::sin(phase + k * (std::pow(2.0, dir * t / T) - 1.0));
    }
}

void gen_am_tone(std::vector<double>& s, int sr, Rng& rng, double f0) {
    double phase = rng.uniform(0.0, kTwoPi);
    double fm = rng.uniform(3.0, 12.0);
    double mphase = rng.uniform(0.0, kTwoPi);
    const double m = 0.8;
    for (size_t i = 0; i < s.size(); ++i) {
        double t = double(i) / sr;
        double env = (1.0 + m * std::cos(kTwoPi * fm * t + mphase)) / (1.0 + m);
        s[i] = env * std::sin(kTwoPi * f0 * t + phase);
    }
}

// Band-limited square: odd harmonics at 1/k below the guard band.
void gen_square(std::vector<double>& s, int sr, double f0, double phase) {
    double f_max = kBandFrac * sr;
    for (size_t i = 0; i < s.size(); ++i) {
        double t = double(i) / sr;
        double acc = 0.0;
        for (int k = 1; k * f0 < f_max; k += 2) acc += std::sin(kTwoPi * k * f0 * t + phase) / k;
        s[i] = acc;
    }
}

void gen_harmonic_stack(std::vector<double>& s, int sr, Rng& rng, double f0) {
    double f_max = kBandFrac * sr;
    std::vector<double> amp, ph;
    for (int h = 1; h <= 6; ++h) {
        amp.push_back(rng.uniform(0.3, 1.0) / h);
        ph.push_back(rng.uniform(0.0, kTwoPi));
    }
    for (size_t i = 0; i < s.size(); ++i) {
        double t = double(i) / sr;
        double acc = 0.0;
        for (int h = 1; h <= 6; ++h) {
            if (h * f0 >= f_max) break;
            acc += amp[h - 1] * std::sin(kTwoPi * h * f0 * t + ph[h - 1]);
        }
        s[i] = acc;
    }
}

// White noise through a square gate (duty 0.5) at the bucket's event rate.
void gen_noise_burst(std::vector<double>& s, int sr, Rng& rng, double rate) {
    double gate_phase = rng.uniform();
    for (size_t i = 0; i < s.size(); ++i) {
        double cycle = std::fmod(double(i) / sr * rate + gate_phase, 1.0);
        s[i] = cycle < 0.5 ? rng.normal() : 0.0;
    }
}

// Impulses with jittered spacing, each carrying a short exponential tail.
void gen_click_train(std::vector<double>& s, int sr, Rng& rng, double rate) {
    double tau = 0.005 * sr;  // 5 ms decay
    int tail = int(8 * tau);
    double nominal = sr / rate;
    double pos = rng.uniform(0.0, nominal);
    while (pos < double(s.size())) {
        int c = int(pos);
        for (int j = 0; j < tail && c + j < int(s.size()); ++j)
            s[c + j] += std::exp(-double(j) / tau);
        pos += nominal * (1.0 + rng.uniform(-0.2, 0.2));
    }
}

std::string sanitize(const std::string& name) {
    std::string out = name;
    for (char& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '-';
    return out;
}

}  // namespace

double bucket_hz(const std::string& bucket) {
    if (bucket == "low") return 220.0;
    if (bucket == "mid") return 440.0;
    if (bucket == "high") return 880.0;
    raise(ErrorKind::Config, "unknown frequency bucket '" + bucket + "' (expected low|mid|high)");
}

CorpusSpec CorpusSpec::defaults() {
    CorpusSpec spec;
    spec.classes = {
        {"sine", "sine", "mid"},
        {"chirp-up", "chirp-up", "mid"},
        {"chirp-down", "chirp-down", "mid"},
        {"am-tone", "am-tone", "mid"},
        {"square", "square", "low"},
        {"harmonic-stack", "harmonic-stack", "low"},
        {"noise-burst", "noise-burst", "mid"},
        {"click-train", "click-train", "high"},
    };
    return spec;
}

AudioClip synth_clip(const ClassSpec& cls, double seconds, int sample_rate, double snr_db,
                     uint64_t clip_seed) {
    require(seconds > 0 && sample_rate > 0, ErrorKind::Config, "clip length/rate must be positive");
    double f0 = bucket_hz(cls.bucket);  // validates the bucket for every kind

    Rng rng(clip_seed);
    size_t n = size_t(std::llround(seconds * sample_rate));
    std::vector<double> s(n, 0.0);

    if (cls.kind == "sine") {
        // no detune: the bucket frequency is exact, so spectra are testable
        gen_tone(s, sample_rate, f0, rng.uniform(0.0, kTwoPi));
    } else if (cls.kind == "chirp-up") {
        gen_chirp(s, sample_rate, detune(rng, f0), 1.0, rng.uniform(0.0, kTwoPi));
    } else if (cls.kind == "chirp-down") {
        gen_chirp(s, sample_rate, detune(rng, 2.0 * f0), -1.0, rng.uniform(0.0, kTwoPi));
    } else if (cls.kind == "am-tone") {
        gen_am_tone(s, sample_rate, rng, detune(rng, f0));
    } else if (cls.kind == "square") {
        gen_square(s, sample_rate, detune(rng, f0), rng.uniform(0.0, kTwoPi));
    } else if (cls.kind == "harmonic-stack") {
        gen_harmonic_stack(s, sample_rate, rng, detune(rng, f0));
    } else if (cls.kind == "noise-burst") {
        gen_noise_burst(s, sample_rate, rng, event_rate(cls.kind, cls.bucket));
    } else if (cls.kind == "click-train") {
        gen_click_train(s, sample_rate, rng, event_rate(cls.kind, cls.bucket));
    } else {
        raise(ErrorKind::Config, "unknown generator kind '" + cls.kind + "'");
    }

    double peak = 0.0;
    for (double v : s) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (double& v : s) v *= kPeak / peak;

    double rms = 0.0;
    for (double v : s) rms += v * v;
    rms = std::sqrt(rms / double(n));
    double noise_std = rms * std::pow(10.0, -snr_db / 20.0);
    for (double& v : s) v += noise_std * rng.normal();

    AudioClip clip;
    clip.samples = std::move(s);
    clip.sample_rate = sample_rate;
    clip.label = cls.name;
    return clip;
}

std::vector<ManifestRow> synth_corpus(const CorpusSpec& spec, const std::string& out_dir) {
    require(!spec.classes.empty(), ErrorKind::Config, "corpus spec has no classes");
    require(spec.clips_per_class > 0, ErrorKind::Config, "clips_per_class must be positive");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) raise(ErrorKind::Io, "cannot create corpus directory " + out_dir + ": " + ec.message());

    std::vector<ManifestRow> rows;
    for (size_t ci = 0; ci < spec.classes.size(); ++ci) {
        const ClassSpec& cls = spec.classes[ci];
        for (int k = 0; k < spec.clips_per_class; ++k) {
            uint64_t clip_seed = mix_seed(spec.seed, ci * 100000ull + uint64_t(k));
            AudioClip clip =
                synth_clip(cls, spec.clip_seconds, spec.sample_rate, spec.snr_db, clip_seed);

            char num[8];
            std::snprintf(num, sizeof num, "%03d", k);
            ManifestRow row;
            row.path = sanitize(cls.name) + "_" + num + ".wav";
            row.class_name = cls.name;
            row.caption = cls.name + " " + cls.bucket;
            row.seed = clip_seed;
            write_wav(out_dir + "/" + row.path, clip);
            rows.push_back(std::move(row));
        }
    }

    std::string manifest_path = out_dir + "/manifest.jsonl";
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) raise(ErrorKind::Io, "cannot write " + manifest_path);
    for (const ManifestRow& row : rows) {
        nlohmann::json j;
        j["path"] = row.path;
        j["class"] = row.class_name;
        j["caption"] = row.caption;
        j["seed"] = row.seed;
        out << j.dump() << "\n";  // dump() orders keys, so re-runs match bytewise
    }
    if (!out) raise(ErrorKind::Io, "write failed for " + manifest_path);
    return rows;
}

std::vector<ManifestRow> read_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open manifest " + manifest_path);
    std::vector<ManifestRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("path") || !j.contains("class") ||
            !j.contains("caption") || !j.contains("seed"))
            raise(ErrorKind::Format,
                  "bad manifest row at " + manifest_path + ":" + std::to_string(lineno));
        ManifestRow row;
        row.path = j["path"].get<std::string>();
        row.class_name = j["class"].get<std::string>();
        row.caption = j["caption"].get<std::string>();
        row.seed = j["seed"].get<uint64_t>();
        rows.push_back(std::move(row));
    }
    require(!rows.empty(), ErrorKind::Format, "manifest " + manifest_path + " has no rows");
    return rows;
}

AudioClip load_clip(const ManifestRow& row, const std::string& base_dir) {
    AudioClip clip = read_wav(base_dir + "/" + row.path);
    clip.label = row.class_name;
    return clip;
}

}  // namespace flowvoc
