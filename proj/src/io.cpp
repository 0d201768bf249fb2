#include "fluxmc/io.hpp"

#include <bit>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fluxmc {

std::uint64_t fnv1a64(const std::uint8_t* bytes, std::size_t count, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < count; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
    return fnv1a64(bytes.data(), bytes.size());
}

void append_le_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_le_double(std::vector<std::uint8_t>& out, double v) {
    append_le_u64(out, std::bit_cast<std::uint64_t>(v));
}

void append_le_doubles(std::vector<std::uint8_t>& out, const double* v, std::size_t count) {
    out.reserve(out.size() + 8 * count);
    for (std::size_t i = 0; i < count; ++i) append_le_double(out, v[i]);
}

double read_le_double(const std::uint8_t* bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::uint64_t from_hex(const std::string& s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw StoreMetadataError("invalid hex field: " + s);
    return v;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreIoError("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreIoError("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw StoreIoError("short write: " + path);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreIoError("cannot open file for writing: " + path);
    out << text;
    if (!out) throw StoreIoError("short write: " + path);
}

void write_matrix_csv(const Matrix& a, const std::string& path) {
    std::ostringstream os;
    char buf[40];
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", a(i, j));
            if (j) os << ',';
            os << buf;
        }
        os << '\n';
    }
    write_text_file(path, os.str());
}

Matrix read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StoreIoError("cannot open file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t start = 0;
        while (start <= line.size()) {
            std::size_t end = line.find(',', start);
            if (end == std::string::npos) end = line.size();
            const std::string cell = line.substr(start, end - start);
            errno = 0;
            char* stop = nullptr;
            const double v = std::strtod(cell.c_str(), &stop);
            if (stop == cell.c_str() || *stop != '\0' || errno == ERANGE)
                throw StoreFormatError("bad CSV number '" + cell + "' in " + path);
            row.push_back(v);
            if (end == line.size()) break;
            start = end + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw StoreShapeError("ragged CSV rows in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw StoreShapeError("empty CSV matrix in " + path);
    Matrix a(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) a(i, j) = rows[i][j];
    return a;
}

FileSections split_header_lines(const std::vector<std::uint8_t>& bytes,
                                const std::string& path) {
    const auto find_newline = [&](std::size_t from) {
        for (std::size_t i = from; i < bytes.size(); ++i)
            if (bytes[i] == '\n') return i;
        throw StoreFormatError("missing header line in " + path);
    };
    const std::size_t first = find_newline(0);
    const std::size_t second = find_newline(first + 1);
    FileSections h;
    h.magic.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(first));
    h.metadata_json.assign(bytes.begin() + static_cast<std::ptrdiff_t>(first) + 1,
                           bytes.begin() + static_cast<std::ptrdiff_t>(second));
    h.payload_offset = second + 1;
    return h;
}

namespace {
constexpr const char* kMatrixMagic = "FLUXMC-MAT 1";
} // namespace

void write_matrix_binary(const Matrix& a, const std::string& path) {
    std::vector<std::uint8_t> payload;
    append_le_doubles(payload, a.data.data(), a.data.size());

    nlohmann::json meta;
    meta["rows"] = a.rows;
    meta["cols"] = a.cols;
    meta["payload_checksum"] = to_hex(fnv1a64(payload));

    std::vector<std::uint8_t> out;
    const std::string header = std::string(kMatrixMagic) + "\n" + meta.dump() + "\n";
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), payload.begin(), payload.end());
    write_file_bytes(path, out);
}

Matrix read_matrix_binary(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    const auto header = split_header_lines(bytes, path);
    if (header.magic != kMatrixMagic)
        throw StoreFormatError("unrecognized matrix file header in " + path);

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(header.metadata_json);
    } catch (const nlohmann::json::exception& e) {
        throw StoreMetadataError("bad matrix metadata in " + path + ": " + e.what());
    }
    if (!meta.contains("rows") || !meta.contains("cols") || !meta.contains("payload_checksum"))
        throw StoreMetadataError("matrix metadata missing fields in " + path);

    const auto rows = meta.at("rows").get<std::size_t>();
    const auto cols = meta.at("cols").get<std::size_t>();
    if (rows == 0 || cols == 0)
        throw StoreMetadataError("matrix metadata declares empty shape in " + path);

    const std::size_t expected = 8 * rows * cols;
    const std::size_t actual = bytes.size() - header.payload_offset;
    if (actual != expected)
        throw StoreShapeError("matrix payload is " + std::to_string(actual) +
                              " bytes, header declares " + std::to_string(expected) +
                              " in " + path);

    const std::uint64_t checksum = fnv1a64(bytes.data() + header.payload_offset, expected);
    if (checksum != from_hex(meta.at("payload_checksum").get<std::string>()))
        throw StoreChecksumError("matrix payload checksum mismatch in " + path);

    Matrix a(rows, cols);
    for (std::size_t i = 0; i < a.data.size(); ++i)
        a.data[i] = read_le_double(bytes.data() + header.payload_offset + 8 * i);
    return a;
}

} // namespace fluxmc
