#pragma once

#include <string>
#include <string_view>

namespace nbrush {

// Padded standard-alphabet base64.
std::string base64_encode(std::string_view bytes);
// Throws DataError on characters outside the alphabet or bad padding.
std::string base64_decode(std::string_view text);

}  // namespace nbrush
