#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lcdnet/tensor.hpp"

namespace lcdnet {

/// One entry of the named-tensor archive. dtype 0 = 32-bit float,
/// dtype 1 = 64-bit float; payload is raw little-endian row-major bytes.
struct ArchiveTensor {
    std::uint8_t dtype = 0;
    std::vector<std::uint64_t> dims;  // rank 1..4
    std::vector<std::uint8_t> bytes;

    std::uint64_t numel() const;
    Shape shape4() const;  // dims left-padded with 1s to rank 4
};

/// In-memory form of the "LCDN" archive: named tensors in insertion order
/// plus a trailing key/value metadata block.
class Archive {
public:
    void put(const std::string& name, const Tensor<float>& t);
    void put(const std::string& name, const Tensor<double>& t);
    void set_meta(const std::string& key, const std::string& value);

    bool has(const std::string& name) const;
    const ArchiveTensor& entry(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    const std::vector<std::pair<std::string, std::string>>& metadata() const { return meta_; }
    std::string meta(const std::string& key) const;  // "" when absent

    /// Typed read; requires the stored dtype to match T exactly.
    template <typename T>
    Tensor<T> get(const std::string& name) const;

    void save(const std::string& path) const;
    static Archive load(const std::string& path);

private:
    std::vector<std::string> order_;
    std::map<std::string, ArchiveTensor> tensors_;
    std::vector<std::pair<std::string, std::string>> meta_;
};

}  // namespace lcdnet
