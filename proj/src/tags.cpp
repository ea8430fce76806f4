#include "blex/tags.hpp"

#include "blex/error.hpp"

#include <string>

namespace blex {

Tag parse_tag(std::string_view text) {
  if (text == "OK") return Tag::Ok;
  if (text == "BAD") return Tag::Bad;
  throw FormatError("unknown tag '" + std::string(text) + "' (expected OK or BAD)");
}

}  // namespace blex
