#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowvoc/wav.hpp"

namespace flowvoc {

// One synthetic sound class. `kind` selects the generator, `bucket` the base
// frequency (low=220, mid=440, high=880); for the untuned kinds the bucket
// instead scales the event rate. Caption = "<name> <bucket>".
struct ClassSpec {
    std::string name;
    std::string kind;    // sine | chirp-up | chirp-down | am-tone | square |
                         // harmonic-stack | noise-burst | click-train
    std::string bucket;  // low | mid | high
};

struct CorpusSpec {
    std::vector<ClassSpec> classes;
    int clips_per_class = 50;
    double clip_seconds = 1.6;
    int sample_rate = 8000;
    double snr_db = 30.0;  // additive noise floor relative to signal RMS
    uint64_t seed = 1234;

    // The stock eight-class corpus used by the pipeline commands.
    static CorpusSpec defaults();
};

struct ManifestRow {
    std::string path;  // wav file, relative to the manifest's directory
    std::string class_name;
    std::string caption;
    uint64_t seed = 0;  // per-clip stream seed; regenerates the clip alone
};

double bucket_hz(const std::string& bucket);

// Fully determined by its arguments; `clip_seed` seeds the only rng used.
AudioClip synth_clip(const ClassSpec& cls, double seconds, int sample_rate, double snr_db,
                     uint64_t clip_seed);

// Writes one wav per clip plus manifest.jsonl under out_dir. Rows come back in
// written order (class-major). Re-running with the same spec rewrites
// bitwise-identical files.
std::vector<ManifestRow> synth_corpus(const CorpusSpec& spec, const std::string& out_dir);

std::vector<ManifestRow> read_manifest(const std::string& manifest_path);

// Loads the wav behind a manifest row; base_dir is the manifest's directory.
AudioClip load_clip(const ManifestRow& row, const std::string& base_dir);

}  // namespace flowvoc
