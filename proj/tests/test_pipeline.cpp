#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "flowvoc/error.hpp"
#include "flowvoc/pipeline.hpp"
#include "flowvoc/rng.hpp"

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

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(bool(in));
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

// run a fully resolved command quietly
void run(const std::string& command, const FlatConfig& overrides) {
    std::ostringstream sink;
    REQUIRE(run_command(command, resolve_defaults(command, overrides), sink) == 0);
}

}  // namespace

TEST_CASE("flat config parses, merges, and round-trips through its dump") {
    FlatConfig cfg = FlatConfig::parse_text(
        "# comment\n"
        "\n"
        "  steps = 20\n"
        "name=a=b\n"
        "lr=0.002\n");
    CHECK(cfg.integer("steps") == 20);
    CHECK(cfg.str("name") == "a=b");  // only the first '=' splits
    CHECK(cfg.number("lr") == 0.002);
    CHECK_FALSE(cfg.has("missing"));
    CHECK_THROWS_AS((void)cfg.str("missing"), Error);
    CHECK_THROWS_AS((void)cfg.integer("name"), Error);
    CHECK_THROWS_AS((void)FlatConfig::parse_text("no equals sign\n"), Error);
    CHECK_THROWS_AS((void)FlatConfig::parse_text("=value\n"), Error);

    FlatConfig high;
    high.set("steps", "99");
    cfg.merge(high);
    CHECK(cfg.integer("steps") == 99);

    // dump is sorted, comment-free, and reparses to the same dump
    std::string d = cfg.dump();
    CHECK(d == "lr=0.002\nname=a=b\nsteps=99\n");
    CHECK(FlatConfig::parse_text(d).dump() == d);
}

TEST_CASE("grid lists parse and reject junk") {
    auto g = parse_grid("1, 2 ,3.5");
    REQUIRE(g.size() == 3);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 2.0);
    CHECK(g[2] == 3.5);
    CHECK(parse_grid("").empty());
    CHECK_THROWS_AS((void)parse_grid("1,,2"), Error);
    CHECK_THROWS_AS((void)parse_grid("abc"), Error);
}

TEST_CASE("number formatting round-trips exactly") {
    for (double v : {3.5, 0.1, 1.0 / 3.0, 1e-9, 12345.6789, 0.0}) {
        std::string s = fmt_num(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(fmt_num(3.5) == "3.5");
    CHECK(fmt_num(16.0) == "16");
}

TEST_CASE("per-class split holds out the tail of each class") {
    std::vector<ManifestRow> rows;
    for (int c = 0; c < 2; ++c)
        for (int k = 0; k < 5; ++k) {
            ManifestRow r;
            r.class_name = c ? "b" : "a";
            r.path = r.class_name + "_" + std::to_string(k) + ".wav";
            rows.push_back(r);
        }
    CorpusSplit sp = split_rows(rows);
    CHECK(sp.train.size() == 8);
    CHECK(sp.test.size() == 2);
    CHECK(sp.test[0].path == "a_4.wav");
    CHECK(sp.test[1].path == "b_4.wav");
    // order within each part preserved
    CHECK(sp.train[0].path == "a_0.wav");
    CHECK(sp.train[4].path == "b_0.wav");

    std::vector<ManifestRow> one_class(50);
    for (int k = 0; k < 50; ++k) one_class[std::size_t(k)].class_name = "x";
    CHECK(split_rows(one_class).test.size() == 10);
}

TEST_CASE("provider dispatch rejects unknown tags and missing encoders") {
    AudioClip clip;
    clip.sample_rate = 8000;
    clip.label = "sine";
    clip.samples.resize(1600);
    for (std::size_t i = 0; i < clip.samples.size(); ++i)
        clip.samples[i] = 0.5 * std::sin(2 * 3.14159265358979 * 440 * double(i) / 8000);

    CHECK(encode_clip(clip, "semantic-oracle").provider == "semantic-oracle");
    CHECK(encode_clip(clip, "acoustic-mel").provider == "acoustic-mel");
    CHECK_THROWS_AS((void)encode_clip(clip, "toy-mae"), Error);
    CHECK_THROWS_AS((void)encode_clip(clip, "vae"), Error);
}

TEST_CASE("caption judge separates linearly separable features deterministically") {
    // three classes with well-separated pooled means
    auto make_feat = [](int cls, std::uint64_t seed) {
        LatentSeq l;
        l.dim = 4;
        l.frames = 6;
        l.data.assign(24, 0.0f);
        Rng rng(seed);
        for (int d = 0; d < l.dim; ++d)
            for (int f = 0; f < l.frames; ++f)
                l.at(0, d, f) = float((d == cls ? 3.0 : 0.0) + 0.1 * rng.normal());
        return l;
    };
    std::vector<LatentSeq> feats;
    std::vector<std::string> caps;
    const char* names[] = {"alpha one", "beta two", "gamma three"};
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 6; ++k) {
            feats.push_back(make_feat(c, std::uint64_t(c * 100 + k)));
            caps.push_back(names[c]);
        }
    CaptionJudge judge = train_caption_judge(feats, caps);
    REQUIRE(judge.classes.size() == 3);
    CHECK(judge.classes[0] == "alpha one");  // sorted

    int correct = 0;
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 4; ++k) {
            LatentSeq probe = make_feat(c, std::uint64_t(900 + c * 10 + k));
            if (judge.classes[std::size_t(judge_class(judge, probe))] == names[c]) ++correct;
        }
    CHECK(correct == 12);

    CaptionJudge again = train_caption_judge(feats, caps);
    CHECK(again.w == judge.w);
    CHECK(again.b == judge.b);

    CHECK_THROWS_AS((void)train_caption_judge({}, {}), Error);
}

TEST_CASE("csv files land on disk byte-for-byte reproducibly") {
    fs::path dir = fresh_dir("flowvoc_pipe_csv");
    fs::path p = dir / "sub" / "t.csv";
    std::vector<std::vector<std::string>> rows{{"a", "1.5"}, {"b", "2"}};
    write_csv(p.string(), {"name", "value"}, rows);
    auto first = slurp(p);
    CHECK(std::string(first.begin(), first.end()) == "name,value\na,1.5\nb,2\n");
    write_csv(p.string(), {"name", "value"}, rows);
    CHECK(slurp(p) == first);
    fs::remove_all(dir);
}

TEST_CASE("resolved defaults materialize cross-key paths and drop unknown keys") {
    FlatConfig sample = resolve_defaults("sample", FlatConfig());
    CHECK(sample.str("out_dir") == "out");
    CHECK(sample.str("dit") == "out/ckpt/dit.ckpt");
    CHECK(sample.str("out") == "out/gen/sample-s0.wav");
    CHECK(sample.number("cfg") == 3.5);
    CHECK(sample.integer("steps_latent") == 100);
    CHECK(sample.integer("steps_wav") == 200);

    FlatConfig given;
    given.set("seed", "7");
    given.set("bogus_key", "1");
    FlatConfig r = resolve_defaults("sample", given);
    CHECK(r.str("out") == "out/gen/sample-s7.wav");
    CHECK_FALSE(r.has("bogus_key"));

    FlatConfig mae;
    mae.set("provider", "toy-mae");
    CHECK(resolve_defaults("encode-latents", mae).str("mae_ckpt") == "out/ckpt/mae.ckpt");
    CHECK(resolve_defaults("encode-latents", FlatConfig()).str("mae_ckpt").empty());

    FlatConfig sweep = resolve_defaults("sweep", FlatConfig());
    CHECK(parse_grid(sweep.str("cfg_grid")).size() == 4);
    CHECK(parse_grid(sweep.str("steps_grid")).size() == 4);
    CHECK(sweep.str("cfg_grid") == "1,2,3.5,5");
    CHECK(sweep.str("steps_grid") == "10,25,50,100");

    CHECK_THROWS_AS((void)resolve_defaults("no-such-command", FlatConfig()), Error);
}

TEST_CASE("micro pipeline: synth, encode, train, sample, eval, sweep, probe") {
    fs::path dir = fresh_dir("flowvoc_pipe_e2e");
    const std::string out = dir.string();
    auto with_out = [&](std::initializer_list<std::pair<const char*, const char*>> kv) {
        FlatConfig c;
        c.set("out_dir", out);
        for (const auto& [k, v] : kv) c.set(k, v);
        return c;
    };

    run("synth-data", with_out({{"clips_per_class", "3"}, {"clip_seconds", "0.4"}}));
    CHECK(line_count(dir / "corpus" / "manifest.jsonl") == 24);

    run("encode-latents", with_out({}));
    std::size_t lat_files = 0;
    for (const auto& e : fs::directory_iterator(dir / "corpus" / "latents-semantic-oracle"))
        if (e.path().extension() == ".lat") ++lat_files;
    CHECK(lat_files == 24);

    // training commands rewrite the same checkpoint bitwise on a re-run
    run("train-vocoder", with_out({{"steps", "10"}}));
    auto voc_bytes = slurp(dir / "ckpt" / "vocoder.ckpt");
    run("train-vocoder", with_out({{"steps", "10"}}));
    CHECK(slurp(dir / "ckpt" / "vocoder.ckpt") == voc_bytes);

    run("train-dit", with_out({{"steps", "10"}}));

    auto sample_cfg = with_out({{"caption", "sine mid"},
                                {"steps_latent", "4"},
                                {"steps_wav", "4"},
                                {"seed", "5"}});
    run("sample", sample_cfg);
    fs::path wav1 = dir / "gen" / "sample-s5.wav";
    REQUIRE(fs::exists(wav1));
    REQUIRE(fs::exists(dir / "gen" / "sample-s5.wav.json"));
    auto wav_bytes = slurp(wav1);
    run("sample", sample_cfg);
    CHECK(slurp(wav1) == wav_bytes);

    auto second = sample_cfg;
    second.set("caption", "square high");
    second.set("seed", "6");
    run("sample", second);

    run("eval", with_out({}));
    CHECK(line_count(dir / "reports" / "eval.jsonl") == 2);
    {
        std::ifstream in(dir / "reports" / "eval.csv");
        std::string header, row;
        REQUIRE(std::getline(in, header));
        REQUIRE(std::getline(in, row));
        CHECK(header == "n_gen,n_ref,frechet,n_judged,accuracy");
        CHECK(row.substr(0, 4) == "2,8,");
    }

    auto sweep_cfg = with_out({{"cfg_grid", "1,3.5"},
                               {"steps_grid", "2,3"},
                               {"per_caption", "1"},
                               {"steps_wav", "3"}});
    run("sweep", sweep_cfg);
    fs::path sweep_csv = dir / "reports" / "sweep.csv";
    CHECK(line_count(sweep_csv) == 5);  // header + 2x2 grid
    auto sweep_bytes = slurp(sweep_csv);
    run("sweep", sweep_cfg);
    CHECK(slurp(sweep_csv) == sweep_bytes);

    auto empty_grid = sweep_cfg;
    empty_grid.set("cfg_grid", "");
    std::ostringstream sink;
    CHECK_THROWS_AS((void)run_command("sweep", resolve_defaults("sweep", empty_grid), sink),
                    Error);

    run("probe", with_out({{"seeds", "1,2"}}));
    CHECK(line_count(dir / "reports" / "probe.csv") == 7);  // header + 2 providers x (2 seeds + mean)

    run("project", with_out({}));
    CHECK(line_count(dir / "reports" / "pca-semantic-oracle.csv") == 25);

    fs::remove_all(dir);
}
