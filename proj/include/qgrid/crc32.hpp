#ifndef QGRID_CRC32_HPP
#define QGRID_CRC32_HPP

#include <array>
#include <cstdint>
#include <span>

namespace qgrid {

namespace detail {

// Reflected CRC-32 (IEEE 802.3 polynomial 0xEDB88320), table built at compile time.
constexpr std::array<std::uint32_t, 256> make_crc32_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t n = 0; n < 256; ++n) {
        std::uint32_t c = n;
        for (int k = 0; k < 8; ++k)
            c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
        table[n] = c;
    }
    return table;
}

inline constexpr auto kCrc32Table = make_crc32_table();

} // namespace detail

inline std::uint32_t crc32_update(std::uint32_t state, std::span<const std::uint8_t> data) {
    for (std::uint8_t b : data)
        state = detail::kCrc32Table[(state ^ b) & 0xFF] ^ (state >> 8);
    return state;
}

// Standard check value: crc32("123456789") == 0xCBF43926.
inline std::uint32_t crc32(std::span<const std::uint8_t> data) {
    return crc32_update(0xFFFFFFFFu, data) ^ 0xFFFFFFFFu;
}

} // namespace qgrid

#endif
