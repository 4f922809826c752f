#pragma once

#include <string>
#include <string_view>

namespace snknock {

std::string sha256_hex(std::string_view data);

/// Hex-encoded secret of `n_bytes` bytes from the OS CSPRNG.
std::string random_token_hex(std::size_t n_bytes = 16);

/// Length-independent-timing comparison for secrets.
bool constant_time_equal(std::string_view a, std::string_view b);

}  // namespace snknock
