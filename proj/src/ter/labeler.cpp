#include "blex/ter/labeler.hpp"

#include "blex/error.hpp"

#include <spdlog/spdlog.h>

#include <string>

namespace blex::ter {
namespace {

void require_coverage(const EditScript& script, std::size_t mt_length) {
  if (script.mt_length() != mt_length) {
    throw ContractError("edit script covers " + std::to_string(script.mt_length()) +
                        " MT tokens, expected " + std::to_string(mt_length));
  }
}

}  // namespace

double hter(const EditScript& script, std::size_t ref_length) {
  if (ref_length != script.ref_length()) {
    throw ContractError("hter: reference length " + std::to_string(ref_length) +
                        " does not match the alignment (" + std::to_string(script.ref_length()) +
                        ")");
  }
  if (ref_length == 0) {
    if (script.mt_length() == 0) return 0.0;
    spdlog::warn("hter: empty post-edit against a non-empty translation; scoring 1.0");
    return 1.0;
  }
  const double h = static_cast<double>(script.cost()) / static_cast<double>(ref_length);
  return std::min(1.0, h);
}

TagSeq word_tags(const EditScript& script, std::size_t mt_length) {
  require_coverage(script, mt_length);
  TagSeq tags(mt_length, Tag::Bad);
  for (const Edit& e : script.edits) {
    if (e.op == EditOp::Match) tags[static_cast<std::size_t>(e.mt_pos)] = Tag::Ok;
  }
  return tags;
}

TagSeq gap_tags(const EditScript& script, std::size_t mt_length) {
  require_coverage(script, mt_length);
  TagSeq tags(mt_length + 1, Tag::Ok);
  std::size_t consumed = 0;  // MT tokens passed so far == current gap index
  for (const Edit& e : script.edits) {
    if (e.op == EditOp::Insert) {
      tags[consumed] = Tag::Bad;
    } else {
      ++consumed;
    }
  }
  return tags;
}

}  // namespace blex::ter
