// map_io.hpp: The .tlsm binary map format.
//
//   offset 0   "TLSM"               4 bytes
//   offset 4   rows (n_t)           u32 little-endian
//   offset 8   cols (n_omega)       u32 little-endian
//   offset 12  rows*cols float32    little-endian, row-major (row = t_A, col = nu_d)
//
// Axes and labels live in the dataset manifest.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "tlsspec/spectroscopy.hpp"

namespace tlsspec::io {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_tlsm(const spectro::MapMatrix& values);
// Throws FormatError on bad magic or a size that disagrees with the header.
spectro::MapMatrix decode_tlsm(std::span<const std::uint8_t> bytes);

// Write goes through a temporary file and a rename.
void write_tlsm(const std::filesystem::path& path, const spectro::MapMatrix& values);
spectro::MapMatrix read_tlsm(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace tlsspec::io
