#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace annroute {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

/// Thrown on malformed, truncated or unreadable binary files. Maps to exit
/// code 2 in the CLI.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

namespace io {

template <typename T>
inline void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
inline T read_pod(std::istream& is, const char* what) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw FormatError(std::string("truncated read: ") + what);
    return value;
}

template <typename T>
inline void write_array(std::ostream& os, const T* data, size_t count) {
    os.write(reinterpret_cast<const char*>(data), sizeof(T) * count);
}

template <typename T>
inline void read_array(std::istream& is, T* data, size_t count, const char* what) {
    is.read(reinterpret_cast<char*>(data), sizeof(T) * count);
    if (!is) throw FormatError(std::string("truncated read: ") + what);
}

inline void write_magic(std::ostream& os, const char magic[4]) {
    os.write(magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
    char got[4] = {};
    is.read(got, 4);
    if (!is || std::string(got, 4) != std::string(magic, 4))
        throw FormatError(std::string("bad magic: ") + what);
}

}  // namespace io
}  // namespace annroute
