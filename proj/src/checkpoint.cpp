#include "flowvoc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "flowvoc/error.hpp"

namespace flowvoc {

namespace {

constexpr char kMagic[4] = {'F', 'V', 'C', 'K'};

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    os.write((const char*)b, 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    os.write((const char*)b, 8);
}

void write_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read((char*)b, 4);
    require(bool(is), ErrorKind::Format, "checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= (std::uint32_t)b[i] << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read((char*)b, 8);
    require(bool(is), ErrorKind::Format, "checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= (std::uint64_t)b[i] << (8 * i);
    return v;
}

float read_f32(std::istream& is) {
    std::uint32_t u = read_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace

void Checkpoint::put(const std::string& name, std::vector<std::int64_t> shape,
                     std::vector<float> values) {
    std::size_t n = 1;
    for (auto e : shape) {
        require(e >= 0, ErrorKind::Contract, "checkpoint: negative extent");
        n *= (std::size_t)e;
    }
    require(n == values.size(), ErrorKind::Contract,
            "checkpoint: values.size does not match shape for '" + name + "'");
    auto it = index_.find(name);
    if (it != index_.end()) {
        entries_[it->second].second = Entry{std::move(shape), std::move(values)};
        return;
    }
    index_[name] = entries_.size();
    entries_.push_back({name, Entry{std::move(shape), std::move(values)}});
}

void Checkpoint::put_scalar(const std::string& name, float v) { put(name, {}, {v}); }

void Checkpoint::put_string(const std::string& name, const std::string& s) {
    std::vector<float> codes(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) codes[i] = (float)(unsigned char)s[i];
    put(name, {(std::int64_t)s.size()}, std::move(codes));
}

bool Checkpoint::has(const std::string& name) const { return index_.count(name) != 0; }

const Checkpoint::Entry& Checkpoint::get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::Format, "checkpoint: missing entry '" + name + "'");
    return entries_[it->second].second;
}

float Checkpoint::get_scalar(const std::string& name) const {
    const Entry& e = get(name);
    require(e.values.size() == 1, ErrorKind::Format,
            "checkpoint: entry '" + name + "' is not a scalar");
    return e.values[0];
}

std::string Checkpoint::get_string(const std::string& name) const {
    const Entry& e = get(name);
    std::string s(e.values.size(), '\0');
    for (std::size_t i = 0; i < e.values.size(); ++i) s[i] = (char)(unsigned char)e.values[i];
    return s;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    require(bool(os), ErrorKind::Io, "checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, (std::uint32_t)entries_.size());
    for (const auto& [name, e] : entries_) {
        write_u32(os, (std::uint32_t)name.size());
        os.write(name.data(), (std::streamsize)name.size());
        write_u32(os, (std::uint32_t)e.shape.size());
        for (auto ext : e.shape) write_u64(os, (std::uint64_t)ext);
        for (float v : e.values) write_f32(os, v);
    }
    os.flush();
    require(bool(os), ErrorKind::Io, "checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), ErrorKind::Io, "checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    require(bool(is) && std::memcmp(magic, kMagic, 4) == 0, ErrorKind::Format,
            "checkpoint: bad magic bytes in '" + path + "'");
    const std::uint32_t version = read_u32(is);
    require(version == kVersion, ErrorKind::Format,
            "checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t count = read_u32(is);
    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32(is);
        require(name_len < (1u << 20), ErrorKind::Format, "checkpoint: implausible name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        require(bool(is), ErrorKind::Format, "checkpoint: truncated file");
        const std::uint32_t rank = read_u32(is);
        require(rank <= 8, ErrorKind::Format, "checkpoint: implausible rank");
        std::vector<std::int64_t> shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            shape[r] = (std::int64_t)read_u64(is);
            require(shape[r] >= 0, ErrorKind::Format, "checkpoint: negative extent");
            numel *= (std::size_t)shape[r];
        }
        std::vector<float> values(numel);
        for (std::size_t j = 0; j < numel; ++j) values[j] = read_f32(is);
        ck.put(name, std::move(shape), std::move(values));
    }
    return ck;
}

}  // namespace flowvoc
