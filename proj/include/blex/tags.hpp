#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace blex {

enum class Tag : std::uint8_t { Ok = 0, Bad = 1 };

using TagSeq = std::vector<Tag>;

constexpr std::string_view to_string(Tag t) { return t == Tag::Ok ? "OK" : "BAD"; }

// Accepts "OK" and "BAD"; throws FormatError otherwise.
Tag parse_tag(std::string_view text);

inline std::size_t count_bad(const TagSeq& tags) {
  std::size_t n = 0;
  for (Tag t : tags) n += t == Tag::Bad;
  return n;
}

}  // namespace blex
