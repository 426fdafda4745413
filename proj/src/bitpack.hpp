#pragma once

// Fixed-width packing of small integer codes into bytes, least significant
// bits first.  Widths are 2, 4 or 8, so codes never straddle a byte.

#include <cstdint>
#include <vector>

namespace snnzip {

std::vector<std::uint8_t> pack_codes(const std::vector<double>& codes, int bits);

// count codes from the packed stream (which must hold exactly
// ceil(count*bits/8) bytes).
std::vector<double> unpack_codes(const std::uint8_t* bytes, std::size_t n_bytes, std::size_t count, int bits);

std::size_t packed_size(std::size_t count, int bits);

}  // namespace snnzip
