#include "tlsspec/map_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace tlsspec::io {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'T', 'L', 'S', 'M'};
constexpr std::size_t kHeaderSize = 12;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[offset + b]) << (8 * b);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tlsm(const spectro::MapMatrix& values) {
    const auto rows = static_cast<std::uint32_t>(values.rows());
    const auto cols = static_cast<std::uint32_t>(values.cols());
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    out.reserve(kHeaderSize + 4ull * rows * cols);
    put_u32(out, rows);
    put_u32(out, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j) {
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(values(i, j))));
        }
    }
    return out;
}

spectro::MapMatrix decode_tlsm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw FormatError("not a TLSM map (bad magic)");
    }
    const std::uint32_t rows = get_u32(bytes, 4);
    const std::uint32_t cols = get_u32(bytes, 8);
    const std::uint64_t expected = kHeaderSize + 4ull * rows * cols;
    if (bytes.size() != expected) {
        throw FormatError(fmt::format("TLSM size mismatch: header says {}x{} ({} bytes), got {}",
                                      rows, cols, expected, bytes.size()));
    }
    spectro::MapMatrix values(rows, cols);
    std::size_t offset = kHeaderSize;
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j, offset += 4) {
            values(i, j) = std::bit_cast<float>(get_u32(bytes, offset));
        }
    }
    return values;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error(fmt::format("write failed for {}", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

void write_tlsm(const std::filesystem::path& path, const spectro::MapMatrix& values) {
    write_file_atomic(path, encode_tlsm(values));
}

spectro::MapMatrix read_tlsm(const std::filesystem::path& path) {
    try {
        return decode_tlsm(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 computation failed");
    }
    std::string hex;
    hex.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

}  // namespace tlsspec::io
