#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neurovid/tensor.hpp"

namespace neurovid {

// Simple named-tensor file container.
// Layout (little-endian): magic "NCT1", u32 tensor count, then per tensor:
// u32 name length, UTF-8 name, u8 dtype (0=f64, 1=i64), u32 rank,
// u64 extents, raw row-major payload.
struct ContainerEntry {
    std::string name;
    uint8_t dtype = 0;  // 0=f64, 1=i64
    Shape shape;
    std::vector<double> f64;
    std::vector<int64_t> i64;
};

class Container {
public:
    void put_f64(const std::string& name, const Shape& shape,
                 std::vector<double> data);
    void put_i64(const std::string& name, const Shape& shape,
                 std::vector<int64_t> data);
    // strings ride along as i64 byte sequences
    void put_string(const std::string& name, const std::string& value);
    void put_tensor(const std::string& name, const Tensor& t);

    bool has(const std::string& name) const;
    const ContainerEntry& get(const std::string& name) const;
    std::vector<double> get_f64(const std::string& name) const;
    std::vector<int64_t> get_i64(const std::string& name) const;
    std::string get_string(const std::string& name) const;
    Tensor get_tensor(const std::string& name, bool requires_grad = false) const;
    const std::vector<ContainerEntry>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static Container load(const std::string& path);

private:
    std::vector<ContainerEntry> entries_;
};

// flat key=value text file (one pair per line, '#' comments)
std::vector<std::pair<std::string, std::string>> read_kv_file(
    const std::string& path);
void write_kv_file(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& kv);

}  // namespace neurovid
