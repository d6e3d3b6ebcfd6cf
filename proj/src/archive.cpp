#include "lcdnet/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "archive code assumes a little-endian host");

namespace lcdnet {

namespace {

constexpr char kMagic[4] = {'L', 'C', 'D', 'N'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& f, T v) {
    write_bytes(f, &v, sizeof(T));
}

void write_string(std::ofstream& f, const std::string& s) {
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(s.size()));
    write_bytes(f, s.data(), s.size());
}

void read_bytes(std::ifstream& f, void* p, std::size_t n) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!f) {
        throw std::runtime_error("corrupt archive: truncated file");
    }
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    read_bytes(f, &v, sizeof(T));
    return v;
}

std::string read_string(std::ifstream& f) {
    const auto n = read_pod<std::uint32_t>(f);
    if (n > (1u << 20)) {
        throw std::runtime_error("corrupt archive: implausible string length");
    }
    std::string s(n, '\0');
    if (n > 0) {
        read_bytes(f, s.data(), n);
    }
    return s;
}

}  // namespace

std::uint64_t ArchiveTensor::numel() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) {
        n *= d;
    }
    return n;
}

Shape ArchiveTensor::shape4() const {
    std::uint64_t d[4] = {1, 1, 1, 1};
    const std::size_t off = 4 - dims.size();
    for (std::size_t i = 0; i < dims.size(); ++i) {
        d[off + i] = dims[i];
    }
    return Shape{static_cast<std::int64_t>(d[0]), static_cast<std::int64_t>(d[1]),
                 static_cast<std::int64_t>(d[2]), static_cast<std::int64_t>(d[3])};
}

namespace {

template <typename T>
ArchiveTensor make_entry(const Tensor<T>& t, std::uint8_t dtype) {
    ArchiveTensor e;
    e.dtype = dtype;
    const Shape& s = t.shape();
    e.dims = {static_cast<std::uint64_t>(s.n), static_cast<std::uint64_t>(s.c),
              static_cast<std::uint64_t>(s.h), static_cast<std::uint64_t>(s.w)};
    e.bytes.resize(static_cast<std::size_t>(t.numel()) * sizeof(T));
    std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
    return e;
}

}  // namespace

void Archive::put(const std::string& name, const Tensor<float>& t) {
    if (tensors_.emplace(name, make_entry(t, 0)).second) {
        order_.push_back(name);
    } else {
        tensors_[name] = make_entry(t, 0);
    }
}

void Archive::put(const std::string& name, const Tensor<double>& t) {
    if (tensors_.emplace(name, make_entry(t, 1)).second) {
        order_.push_back(name);
    } else {
        tensors_[name] = make_entry(t, 1);
    }
}

void Archive::set_meta(const std::string& key, const std::string& value) {
    for (auto& kv : meta_) {
        if (kv.first == key) {
            kv.second = value;
            return;
        }
    }
    meta_.emplace_back(key, value);
}

bool Archive::has(const std::string& name) const { return tensors_.count(name) > 0; }

const ArchiveTensor& Archive::entry(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) {
        throw std::runtime_error("archive has no tensor named '" + name + "'");
    }
    return it->second;
}

std::string Archive::meta(const std::string& key) const {
    for (const auto& kv : meta_) {
        if (kv.first == key) {
            return kv.second;
        }
    }
    return "";
}

template <typename T>
Tensor<T> Archive::get(const std::string& name) const {
    const ArchiveTensor& e = entry(name);
    const std::uint8_t want = std::is_same_v<T, float> ? 0 : 1;
    if (e.dtype != want) {
        throw std::runtime_error("archive tensor '" + name + "' has dtype " +
                                 std::to_string(e.dtype) + ", expected " + std::to_string(want));
    }
    std::vector<T> data(e.numel());
    std::memcpy(data.data(), e.bytes.data(), e.bytes.size());
    return Tensor<T>::from_data(e.shape4(), std::move(data));
}

template Tensor<float> Archive::get<float>(const std::string&) const;
template Tensor<double> Archive::get<double>(const std::string&) const;

void Archive::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    write_bytes(f, kMagic, 4);
    write_pod<std::uint32_t>(f, kVersion);
    write_pod<std::uint64_t>(f, order_.size());
    for (const std::string& name : order_) {
        const ArchiveTensor& e = tensors_.at(name);
        write_string(f, name);
        write_pod<std::uint8_t>(f, e.dtype);
        write_pod<std::uint8_t>(f, static_cast<std::uint8_t>(e.dims.size()));
        for (std::uint64_t d : e.dims) {
            write_pod<std::uint64_t>(f, d);
        }
        write_bytes(f, e.bytes.data(), e.bytes.size());
    }
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(meta_.size()));
    for (const auto& kv : meta_) {
        write_string(f, kv.first);
        write_string(f, kv.second);
    }
    if (!f) {
        throw std::runtime_error("failed writing archive to '" + path + "'");
    }
}

Archive Archive::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open archive '" + path + "'");
    }
    char magic[4];
    read_bytes(f, magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("corrupt archive: bad magic bytes");
    }
    const auto version = read_pod<std::uint32_t>(f);
    if (version != kVersion) {
        throw std::runtime_error("unsupported archive version " + std::to_string(version));
    }
    const auto count = read_pod<std::uint64_t>(f);
    Archive a;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = read_string(f);
        ArchiveTensor e;
        e.dtype = read_pod<std::uint8_t>(f);
        if (e.dtype > 1) {
            throw std::runtime_error("corrupt archive: unknown dtype for '" + name + "'");
        }
        const auto rank = read_pod<std::uint8_t>(f);
        if (rank < 1 || rank > 4) {
            throw std::runtime_error("corrupt archive: unsupported rank for '" + name + "'");
        }
        e.dims.resize(rank);
        for (auto& d : e.dims) {
            d = read_pod<std::uint64_t>(f);
        }
        const std::uint64_t elems = e.numel();
        if (elems > (1ull << 32)) {
            throw std::runtime_error("corrupt archive: implausible tensor size for '" + name +
                                     "'");
        }
        e.bytes.resize(elems * (e.dtype == 0 ? 4 : 8));
        read_bytes(f, e.bytes.data(), e.bytes.size());
        if (a.tensors_.emplace(name, std::move(e)).second) {
            a.order_.push_back(name);
        }
    }
    const auto meta_count = read_pod<std::uint32_t>(f);
    for (std::uint32_t i = 0; i < meta_count; ++i) {
        std::string k = read_string(f);
        std::string v = read_string(f);
        a.meta_.emplace_back(std::move(k), std::move(v));
    }
    return a;
}

}  // namespace lcdnet
