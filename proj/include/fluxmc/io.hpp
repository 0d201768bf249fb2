#pragma once

// Matrix file formats and the byte-level helpers shared by all persistence:
// little-endian IEEE-754 payloads with FNV-1a checksums.

#include <cstdint>
#include <string>
#include <vector>

#include "fluxmc/linalg.hpp"

namespace fluxmc {

std::uint64_t fnv1a64(const std::uint8_t* bytes, std::size_t count,
                      std::uint64_t seed = 14695981039346656037ull);
std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes);

void append_le_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void append_le_double(std::vector<std::uint8_t>& out, double v);
void append_le_doubles(std::vector<std::uint8_t>& out, const double* v, std::size_t count);
double read_le_double(const std::uint8_t* bytes);

std::string to_hex(std::uint64_t v);
std::uint64_t from_hex(const std::string& s);

/// First two newline-terminated lines of a binary file plus payload offset.
struct FileSections {
    std::string magic;
    std::string metadata_json;
    std::size_t payload_offset;
};
FileSections split_header_lines(const std::vector<std::uint8_t>& bytes,
                                const std::string& path);

/// CSV with one matrix row per line, full double precision.
void write_matrix_csv(const Matrix& a, const std::string& path);
Matrix read_matrix_csv(const std::string& path);

/// Binary: magic line, JSON shape/checksum line, little-endian row-major payload.
void write_matrix_binary(const Matrix& a, const std::string& path);
Matrix read_matrix_binary(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::string& path, const std::string& text);

} // namespace fluxmc
