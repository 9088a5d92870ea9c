#pragma once

// Little-endian byte serialization shared by the binary file formats, plus a
// sequential reader that labels every failure with its byte offset.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dgcn::bin {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class ByteReader {
  public:
    ByteReader(std::string data, std::string path)
        : data_(std::move(data)), path_(std::move(path)) {}

    std::size_t offset() const { return offset_; }

    void need(std::size_t n, const char* what) {
        if (offset_ + n > data_.size())
            throw std::runtime_error(path_ + ": truncated file: need " +
                                     std::to_string(n) + " bytes for " + what +
                                     " at offset " + std::to_string(offset_) +
                                     ", file has " + std::to_string(data_.size()) +
                                     " bytes");
    }

    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string out = data_.substr(offset_, n);
        offset_ += n;
        return out;
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(
                     static_cast<unsigned char>(data_[offset_ + i]))
                 << (8 * i);
        offset_ += 4;
        return v;
    }

    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(
                     static_cast<unsigned char>(data_[offset_ + i]))
                 << (8 * i);
        offset_ += 8;
        return v;
    }

    float f32(const char* what) {
        const std::size_t at = offset_;
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        if (!std::isfinite(v))
            throw std::runtime_error(path_ + ": non-finite " + what +
                                     " at offset " + std::to_string(at));
        return v;
    }

    void expect_end() {
        if (offset_ != data_.size())
            throw std::runtime_error(path_ + ": trailing bytes at offset " +
                                     std::to_string(offset_) + ", file has " +
                                     std::to_string(data_.size()) + " bytes");
    }

    [[noreturn]] void fail(const std::string& message) {
        throw std::runtime_error(path_ + ": " + message + " at offset " +
                                 std::to_string(offset_));
    }

  private:
    std::string data_;
    std::string path_;
    std::size_t offset_ = 0;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void spill(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace dgcn::bin
