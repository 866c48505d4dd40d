#pragma once

#include <string>
#include <vector>

namespace flowvoc {

struct AudioClip {
    std::vector<double> samples;  // mono, nominally in [-1, 1)
    int sample_rate = 8000;
    std::string label;  // synthetic class name, empty when unknown
};

// 16-bit PCM mono only. Writing clamps to [-1, 1); reading divides by 32768.
AudioClip read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioClip& clip);

}  // namespace flowvoc
