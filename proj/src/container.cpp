#include "neurovid/container.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace neurovid {

namespace {

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <>
void write_le<double>(std::ostream& os, double v) {
    uint64_t u;
    std::memcpy(&u, &v, sizeof(u));
    write_le<uint64_t>(os, u);
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw std::runtime_error("container: truncated file");
    uint64_t u = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
        u |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(u);
}

template <>
double read_le<double>(std::istream& is) {
    uint64_t u = read_le<uint64_t>(is);
    double v;
    std::memcpy(&v, &u, sizeof(v));
    return v;
}

}  // namespace

void Container::put_f64(const std::string& name, const Shape& shape,
                        std::vector<double> data) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
        throw std::invalid_argument("container: " + name + " payload size " +
                                    std::to_string(data.size()) +
                                    " vs shape " + shape_str(shape));
    ContainerEntry e;
    e.name = name;
    e.dtype = 0;
    e.shape = shape;
    e.f64 = std::move(data);
    entries_.push_back(std::move(e));
}

void Container::put_i64(const std::string& name, const Shape& shape,
                        std::vector<int64_t> data) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
        throw std::invalid_argument("container: " + name + " payload size " +
                                    std::to_string(data.size()) +
                                    " vs shape " + shape_str(shape));
    ContainerEntry e;
    e.name = name;
    e.dtype = 1;
    e.shape = shape;
    e.i64 = std::move(data);
    entries_.push_back(std::move(e));
}

void Container::put_string(const std::string& name, const std::string& value) {
    std::vector<int64_t> bytes(value.begin(), value.end());
    int64_t n = static_cast<int64_t>(bytes.size());
    put_i64(name, {n}, std::move(bytes));
}

void Container::put_tensor(const std::string& name, const Tensor& t) {
    put_f64(name, t.shape(), t.data());
}

bool Container::has(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

const ContainerEntry& Container::get(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw std::out_of_range("container: no entry named " + name);
}

std::vector<double> Container::get_f64(const std::string& name) const {
    const auto& e = get(name);
    if (e.dtype != 0) throw std::runtime_error("container: " + name + " is not f64");
    return e.f64;
}

std::vector<int64_t> Container::get_i64(const std::string& name) const {
    const auto& e = get(name);
    if (e.dtype != 1) throw std::runtime_error("container: " + name + " is not i64");
    return e.i64;
}

std::string Container::get_string(const std::string& name) const {
    auto bytes = get_i64(name);
    std::string s;
    for (int64_t b : bytes) s += static_cast<char>(b);
    return s;
}

Tensor Container::get_tensor(const std::string& name, bool requires_grad) const {
    const auto& e = get(name);
    if (e.dtype != 0) throw std::runtime_error("container: " + name + " is not f64");
    return Tensor::from_data(e.shape, e.f64, requires_grad);
}

void Container::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("container: cannot open " + path + " for write");
    os.write("NCT1", 4);
    write_le<uint32_t>(os, static_cast<uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        write_le<uint32_t>(os, static_cast<uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_le<uint8_t>(os, e.dtype);
        write_le<uint32_t>(os, static_cast<uint32_t>(e.shape.size()));
        for (int64_t ext : e.shape) write_le<uint64_t>(os, static_cast<uint64_t>(ext));
        if (e.dtype == 0)
            for (double v : e.f64) write_le<double>(os, v);
        else
            for (int64_t v : e.i64) write_le<uint64_t>(os, static_cast<uint64_t>(v));
    }
    if (!os) throw std::runtime_error("container: write failed for " + path);
}

Container Container::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("container: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NCT1", 4) != 0)
        throw std::runtime_error("container: bad magic in " + path);
    Container c;
    uint32_t count = read_le<uint32_t>(is);
    for (uint32_t i = 0; i < count; ++i) {
        ContainerEntry e;
        uint32_t nlen = read_le<uint32_t>(is);
        e.name.resize(nlen);
        is.read(e.name.data(), nlen);
        e.dtype = read_le<uint8_t>(is);
        uint32_t rank = read_le<uint32_t>(is);
        e.shape.resize(rank);
        for (uint32_t r = 0; r < rank; ++r)
            e.shape[r] = static_cast<int64_t>(read_le<uint64_t>(is));
        size_t n = static_cast<size_t>(shape_numel(e.shape));
        if (e.dtype == 0) {
            e.f64.resize(n);
            for (size_t j = 0; j < n; ++j) e.f64[j] = read_le<double>(is);
        } else if (e.dtype == 1) {
            e.i64.resize(n);
            for (size_t j = 0; j < n; ++j)
                e.i64[j] = static_cast<int64_t>(read_le<uint64_t>(is));
        } else {
            throw std::runtime_error("container: unknown dtype tag " +
                                     std::to_string(e.dtype));
        }
        c.entries_.push_back(std::move(e));
    }
    return c;
}

std::vector<std::pair<std::string, std::string>> read_kv_file(
    const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    while (std::getline(is, line)) {
        size_t h = line.find('#');
        if (h != std::string::npos) line = line.substr(0, h);
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ": malformed line: " + line);
        auto trim = [](std::string s) {
            size_t x = s.find_first_not_of(" \t");
            size_t y = s.find_last_not_of(" \t");
            return (x == std::string::npos) ? std::string() : s.substr(x, y - x + 1);
        };
        kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
}

void write_kv_file(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for write");
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
}

}  // namespace neurovid
