#include "nbrush/base64.hpp"

#include "nbrush/error.hpp"

#include <boost/beast/core/detail/base64.hpp>

namespace nbrush {

namespace b64 = boost::beast::detail::base64;

std::string base64_encode(std::string_view bytes) {
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw DataError("base64 length is not a multiple of 4");
  std::string out(b64::decoded_size(text.size()), '\0');
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  const std::size_t padding = text.size() - read;
  if (padding > 2 || text.substr(read).find_first_not_of('=') != std::string_view::npos) {
    throw DataError("invalid base64 character at offset " + std::to_string(read));
  }
  out.resize(written);
  return out;
}

}  // namespace nbrush
