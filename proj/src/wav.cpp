#include "flowvoc/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "flowvoc/error.hpp"

namespace flowvoc {

namespace {

void put_u16(std::string& s, std::uint16_t v) {
    s.push_back((char)(v & 0xff));
    s.push_back((char)((v >> 8) & 0xff));
}

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back((char)((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return (std::uint32_t)p[0] | ((std::uint32_t)p[1] << 8) | ((std::uint32_t)p[2] << 16) |
           ((std::uint32_t)p[3] << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
    return (std::uint16_t)(p[0] | (p[1] << 8));
}

}  // namespace

void write_wav(const std::string& path, const AudioClip& clip) {
    require(clip.sample_rate > 0, ErrorKind::Contract, "wav: sample rate must be positive");
    const std::uint32_t n = (std::uint32_t)clip.samples.size();
    const std::uint32_t data_bytes = n * 2;
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, (std::uint32_t)clip.sample_rate);
    put_u32(out, (std::uint32_t)clip.sample_rate * 2);  // byte rate
    put_u16(out, 2);                                    // block align
    put_u16(out, 16);                                   // bits per sample
    out += "data";
    put_u32(out, data_bytes);
    for (double s : clip.samples) {
        long q = std::lround(s * 32768.0);
        if (q < -32768) q = -32768;
        if (q > 32767) q = 32767;
        put_u16(out, (std::uint16_t)(std::int16_t)q);
    }
    std::ofstream os(path, std::ios::binary);
    require(bool(os), ErrorKind::Io, "wav: cannot open '" + path + "' for writing");
    os.write(out.data(), (std::streamsize)out.size());
    os.flush();
    require(bool(os), ErrorKind::Io, "wav: write failed for '" + path + "'");
}

AudioClip read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), ErrorKind::Io, "wav: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const auto* p = (const unsigned char*)bytes.data();
    require(bytes.size() >= 44 && std::memcmp(p, "RIFF", 4) == 0 &&
                std::memcmp(p + 8, "WAVE", 4) == 0,
            ErrorKind::Format, "wav: '" + path + "' is not a RIFF/WAVE file");
    AudioClip clip;
    bool have_fmt = false, have_data = false;
    std::size_t off = 12;
    while (off + 8 <= bytes.size()) {
        const char* id = bytes.data() + off;
        const std::uint32_t sz = get_u32(p + off + 4);
        const std::size_t body = off + 8;
        require(body + sz <= bytes.size(), ErrorKind::Format, "wav: truncated chunk in '" + path + "'");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            require(sz >= 16, ErrorKind::Format, "wav: fmt chunk too small");
            const std::uint16_t format = get_u16(p + body);
            const std::uint16_t channels = get_u16(p + body + 2);
            const std::uint16_t bits = get_u16(p + body + 14);
            require(format == 1, ErrorKind::Format,
                    "wav: only PCM supported, got format tag " + std::to_string(format));
            require(channels == 1, ErrorKind::Format,
                    "wav: only mono supported, got " + std::to_string(channels) + " channels");
            require(bits == 16, ErrorKind::Format,
                    "wav: only 16-bit supported, got " + std::to_string(bits) + " bits");
            clip.sample_rate = (int)get_u32(p + body + 4);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            require(have_fmt, ErrorKind::Format, "wav: data chunk precedes fmt chunk");
            clip.samples.resize(sz / 2);
            for (std::size_t i = 0; i < clip.samples.size(); ++i)
                clip.samples[i] = (double)(std::int16_t)get_u16(p + body + 2 * i) / 32768.0;
            have_data = true;
        }
        off = body + sz + (sz & 1);  // chunks are word-aligned
    }
    require(have_fmt && have_data, ErrorKind::Format, "wav: missing fmt or data chunk");
    return clip;
}

}  // namespace flowvoc
