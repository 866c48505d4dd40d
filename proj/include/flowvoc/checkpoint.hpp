#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace flowvoc {

// Named-tensor container with a fixed binary layout:
//   magic "FVCK" | version u32 | entry count u32
//   per entry: name_len u32 | name bytes | rank u32 | extents u64[rank] | values f32[numel]
// All integers and floats little-endian. Scalars are rank 0; strings are
// stored as rank-1 arrays of character codes.
class Checkpoint {
  public:
    struct Entry {
        std::vector<std::int64_t> shape;
        std::vector<float> values;
    };

    static constexpr std::uint32_t kVersion = 1;

    void put(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> values);
    void put_scalar(const std::string& name, float v);
    void put_string(const std::string& name, const std::string& s);

    bool has(const std::string& name) const;
    const Entry& get(const std::string& name) const;
    float get_scalar(const std::string& name) const;
    std::string get_string(const std::string& name) const;

    const std::vector<std::pair<std::string, Entry>>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

  private:
    std::vector<std::pair<std::string, Entry>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace flowvoc
