#pragma once

// Pipeline front-end shared by the CLI binary and the acceptance harness:
// flat key=value configs, the out-dir layout, corpus splits, provider
// dispatch, the caption judge, report writers, and the command bodies.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "flowvoc/checkpoint.hpp"
#include "flowvoc/corpus.hpp"
#include "flowvoc/latents.hpp"

namespace flowvoc {

// Flat key=value store. Lines starting with '#' and blank lines are skipped,
// so a dumped config (which leads with a comment) parses straight back.
class FlatConfig {
  public:
    static FlatConfig parse_file(const std::string& path);
    static FlatConfig parse_text(const std::string& text);

    void set(const std::string& key, const std::string& value);
    void merge(const FlatConfig& overrides);  // overrides win
    bool has(const std::string& key) const;

    std::string str(const std::string& key) const;  // missing key -> config error
    long long integer(const std::string& key) const;
    double number(const std::string& key) const;
    std::uint64_t seed(const std::string& key) const;

    std::string dump() const;  // sorted key=value lines, one per key
    const std::map<std::string, std::string>& items() const { return kv_; }

  private:
    std::map<std::string, std::string> kv_;
};

// "1,2,3.5" -> {1, 2, 3.5}; empty/whitespace input -> empty vector
std::vector<double> parse_grid(const std::string& csv_list);

// Creates out_dir plus the corpus/ ckpt/ gen/ reports/ subtree.
void ensure_out_tree(const std::string& out_dir);

struct CorpusSplit {
    std::vector<ManifestRow> train, test;
};

// Per-class holdout: the last test_frac of each class's clips (manifest
// order, at least one) become test, the rest train.
CorpusSplit split_rows(const std::vector<ManifestRow>& rows, double test_frac = 0.2);

// Provider-tag dispatch (semantic-oracle | acoustic-mel | toy-mae); toy-mae
// needs its trained encoder checkpoint.
LatentSeq encode_clip(const AudioClip& clip, const std::string& provider,
                      const Checkpoint* mae = nullptr);

std::string latent_filename(const std::string& wav_path);  // stem + ".lat"

// Multinomial logistic regression on time-pooled feature sequences. Trained
// on mel features of reference clips with caption labels, then applied to
// the same features of generated clips to score caption accuracy.
struct CaptionJudge {
    std::vector<std::string> classes;  // sorted caption strings
    std::vector<double> mean, scale;   // per-dim standardization of the pool
    std::vector<double> w;             // (dim, classes), class fastest
    std::vector<double> b;             // (classes)
    int dim = 0;
};

CaptionJudge train_caption_judge(const std::vector<LatentSeq>& feats,
                                 const std::vector<std::string>& captions);
int judge_class(const CaptionJudge& judge, const LatentSeq& feat);

// Internal Fréchet distance between two clip sets via the fixed seeded
// feature projection.
double frechet_audio(const std::vector<AudioClip>& a, const std::vector<AudioClip>& b);

// Plain CSV; fields must not contain commas or newlines.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Shortest decimal that round-trips the double, for reproducible reports.
std::string fmt_num(double v);

// Finite-difference battery behind the grad-check command: every
// differentiable op plus tiny end-to-end vocoder and DiT models. One line
// per check; returns whether all stayed under the tolerance.
bool run_grad_checks(std::ostream& out, double tolerance = 1e-2);

// Fills every key the command reads, in order, so cross-key defaults (paths
// under out_dir, provider-dependent names) come out materialized. Unknown
// keys in `given` are dropped; the result re-runs to identical outputs.
FlatConfig resolve_defaults(const std::string& command, const FlatConfig& given);

// Runs one fully resolved command; returns the process exit code.
int run_command(const std::string& command, const FlatConfig& cfg, std::ostream& out);

// argv front door: parse flags, merge config file, resolve, print, dispatch.
int run_cli(int argc, const char* const* argv);

}  // namespace flowvoc
