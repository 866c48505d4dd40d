#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "flowvoc/corpus.hpp"
#include "flowvoc/error.hpp"
#include "flowvoc/fft.hpp"

using namespace flowvoc;
namespace fs = std::filesystem;

namespace {

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("default corpus: eight classes, full counts, caption format") {
    CorpusSpec spec = CorpusSpec::defaults();
    CHECK(spec.classes.size() == 8);
    CHECK(spec.clips_per_class == 50);

    fs::path dir = fresh_dir("flowvoc_corpus_full");
    auto rows = synth_corpus(spec, dir.string());
    CHECK(rows.size() == 400);

    size_t wavs = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".wav") ++wavs;
    CHECK(wavs == 400);

    CHECK(rows[0].caption == "sine mid");
    for (const auto& row : rows) {
        CHECK(row.caption.find(row.class_name) == 0);
        CHECK(row.path.size() > 4);
    }

    auto reread = read_manifest((dir / "manifest.jsonl").string());
    REQUIRE(reread.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(reread[i].path == rows[i].path);
        CHECK(reread[i].class_name == rows[i].class_name);
        CHECK(reread[i].caption == rows[i].caption);
        CHECK(reread[i].seed == rows[i].seed);
    }
}

TEST_CASE("re-running the same spec writes bitwise-identical files") {
    CorpusSpec spec = CorpusSpec::defaults();
    spec.clips_per_class = 3;  // keep the double run cheap
    fs::path a = fresh_dir("flowvoc_corpus_a");
    fs::path b = fresh_dir("flowvoc_corpus_b");
    auto rows_a = synth_corpus(spec, a.string());
    auto rows_b = synth_corpus(spec, b.string());
    REQUIRE(rows_a.size() == rows_b.size());

    CHECK(slurp(a / "manifest.jsonl") == slurp(b / "manifest.jsonl"));
    for (const auto& row : rows_a) CHECK(slurp(a / row.path) == slurp(b / row.path));
}

TEST_CASE("each clip regenerates from its manifest seed alone") {
    CorpusSpec spec = CorpusSpec::defaults();
    spec.clips_per_class = 2;
    fs::path dir = fresh_dir("flowvoc_corpus_seed");
    auto rows = synth_corpus(spec, dir.string());

    for (size_t i = 0; i < rows.size(); i += 3) {
        const ClassSpec& cls = spec.classes[i / size_t(spec.clips_per_class)];
        AudioClip regen =
            synth_clip(cls, spec.clip_seconds, spec.sample_rate, spec.snr_db, rows[i].seed);
        AudioClip loaded = load_clip(rows[i], dir.string());
        REQUIRE(loaded.samples.size() == regen.samples.size());
        for (size_t n = 0; n < loaded.samples.size(); ++n)
            CHECK(std::abs(loaded.samples[n] - regen.samples[n]) <= 1.0 / 32768.0 + 1e-12);
    }
}

TEST_CASE("sine mid clips peak at 440 Hz within one FFT bin") {
    ClassSpec cls{"sine", "sine", "mid"};
    for (uint64_t seed : {11ull, 12ull, 13ull, 14ull}) {
        AudioClip clip = synth_clip(cls, 1.6, 8000, 30.0, seed);
        size_t n = clip.samples.size();
        REQUIRE(n == 12800);

        std::vector<std::complex<double>> spec(n / 2 + 1);
        fft::rfft(clip.samples.data(), int(n), spec.data());
        size_t best = 1;
        double best_mag = 0.0;
        for (size_t k = 1; k < n / 2; ++k) {
            double mag = std::hypot(spec[k].real(), spec[k].imag());
            if (mag > best_mag) {
                best_mag = mag;
                best = k;
            }
        }
        double expect = 440.0 * double(n) / 8000.0;  // bin 704
        CHECK(std::abs(double(best) - expect) <= 1.0);
    }
}

TEST_CASE("clip synthesis covers every kind and normalizes peaks") {
    for (const ClassSpec& cls : CorpusSpec::defaults().classes) {
        AudioClip clip = synth_clip(cls, 0.5, 8000, 60.0, 99);
        REQUIRE(clip.samples.size() == 4000);
        double peak = 0.0;
        for (double v : clip.samples) peak = std::max(peak, std::abs(v));
        // high SNR, so the 0.7 normalization target survives the noise floor
        CHECK(peak == doctest::Approx(0.7).epsilon(0.02));
    }
}

TEST_CASE("unknown kinds and buckets are rejected as config errors") {
    ClassSpec bad_kind{"x", "triangle", "mid"};
    ClassSpec bad_bucket{"x", "sine", "ultra"};
    CHECK_THROWS_AS(synth_clip(bad_kind, 0.5, 8000, 30.0, 1), Error);
    CHECK_THROWS_AS(synth_clip(bad_bucket, 0.5, 8000, 30.0, 1), Error);
    try {
        synth_clip(bad_kind, 0.5, 8000, 30.0, 1);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
    try {
        synth_clip(bad_bucket, 0.5, 8000, 30.0, 1);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
}

TEST_CASE("manifest reader flags missing files and malformed rows") {
    CHECK_THROWS_AS(read_manifest("/nonexistent/manifest.jsonl"), Error);

    fs::path dir = fresh_dir("flowvoc_corpus_badman");
    fs::create_directories(dir);
    std::ofstream(dir / "manifest.jsonl") << "{\"path\": \"a.wav\"}\n";
    try {
        read_manifest((dir / "manifest.jsonl").string());
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
    }
}
