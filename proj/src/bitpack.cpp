#include "bitpack.hpp"

#include <cmath>
#include <string>

#include "error.hpp"

namespace snnzip {

namespace {

void check_bits(int bits) {
    if (bits != 2 && bits != 4 && bits != 8) {
        fail(Errc::invalid_argument, "bit width must be 2, 4 or 8, got " + std::to_string(bits));
    }
}

}  // namespace

std::size_t packed_size(std::size_t count, int bits) {
    check_bits(bits);
    return (count * static_cast<std::size_t>(bits) + 7) / 8;
}

std::vector<std::uint8_t> pack_codes(const std::vector<double>& codes, int bits) {
    check_bits(bits);
    const std::uint64_t limit = (1ull << bits) - 1ull;
    std::vector<std::uint8_t> out(packed_size(codes.size(), bits), 0u);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const double c = codes[i];
        if (!(c >= 0.0) || c != std::floor(c) || c > static_cast<double>(limit)) {
            fail(Errc::invalid_argument, "code " + std::to_string(c) + " at index " + std::to_string(i) +
                                             " is not an integer in [0, " + std::to_string(limit) + "]");
        }
        const std::size_t bit = i * static_cast<std::size_t>(bits);
        out[bit / 8] |= static_cast<std::uint8_t>(static_cast<std::uint64_t>(c) << (bit % 8));
    }
    return out;
}

std::vector<double> unpack_codes(const std::uint8_t* bytes, std::size_t n_bytes, std::size_t count, int bits) {
    check_bits(bits);
    if (n_bytes != packed_size(count, bits)) {
        fail(Errc::invalid_argument, "packed stream holds " + std::to_string(n_bytes) + " bytes, expected " +
                                         std::to_string(packed_size(count, bits)) + " for " + std::to_string(count) +
                                         " codes at " + std::to_string(bits) + " bits");
    }
    const std::uint8_t mask = static_cast<std::uint8_t>((1u << bits) - 1u);
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t bit = i * static_cast<std::size_t>(bits);
        out[i] = static_cast<double>((bytes[bit / 8] >> (bit % 8)) & mask);
    }
    return out;
}

}  // namespace snnzip
