#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <sstream>
#include <vector>

namespace s3d {

// Error taxonomy used across the library. All carry a human-readable message
// naming the offending shapes / keys / paths.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

using Dims = std::vector<std::size_t>;

inline std::size_t numel(const Dims& d) {
    std::size_t n = 1;
    for (std::size_t e : d) n *= e;
    return n;
}

inline std::string dims_str(const Dims& d) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "x" : "") << d[i];
    os << "]";
    return os.str();
}

inline void check_shape(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}
inline void check_contract(bool ok, const std::string& msg) {
    if (!ok) throw ContractError(msg);
}

} // namespace s3d
