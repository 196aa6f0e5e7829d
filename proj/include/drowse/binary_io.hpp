#ifndef DROWSE_BINARY_IO_HPP_
#define DROWSE_BINARY_IO_HPP_

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "error.hpp"

namespace drowse::detail {

// Little-endian encoding independent of host byte order.
class ByteWriter
{
public:
    explicit ByteWriter(std::ostream& os) : os_(os) {}

    void bytes(std::string_view s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }
    void u8(std::uint8_t v) { put(v, 1); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void check(const std::string& context) const
    {
        if (!os_)
            throw FormatError(FormatErrc::io, "write failed: " + context);
    }

private:
    void put(std::uint64_t v, int n)
    {
        std::array<char, 8> buf{};
        for (int i = 0; i < n; ++i)
            buf[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFFu);
        os_.write(buf.data(), n);
    }

    std::ostream& os_;
};

class ByteReader
{
public:
    ByteReader(std::istream& is, std::string context) : is_(is), context_(std::move(context)) {}

    std::string bytes(std::size_t n)
    {
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

private:
    void read(char* dst, std::size_t n)
    {
        is_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n)
            throw FormatError(FormatErrc::truncated, context_);
    }

    std::uint64_t get(int n)
    {
        std::array<unsigned char, 8> buf{};
        read(reinterpret_cast<char*>(buf.data()), static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = n - 1; i >= 0; --i)
            v = (v << 8) | buf[static_cast<std::size_t>(i)];
        return v;
    }

    std::istream& is_;
    std::string context_;
};

} // namespace drowse::detail

#endif // DROWSE_BINARY_IO_HPP_
