#pragma once

#include "blex/numerics/tensor.hpp"

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace blex::io {

// Shared pieces of the model file layouts: a magic line, a key=value block
// closed by "end", named little-endian double blobs and token lists.

using KeyValues = std::map<std::string, std::string>;

void write_magic(std::ostream& out, const std::string& magic);
void expect_magic(std::istream& in, const std::string& magic);

void write_key_values(std::ostream& out, const KeyValues& kv);
KeyValues read_key_values(std::istream& in);

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m, int rank);

struct NamedMatrix {
  std::string name;
  Matrix value;
  int rank = 2;
};
NamedMatrix read_matrix(std::istream& in);

void write_tokens(std::ostream& out, const std::string& name, const std::vector<std::string>& tokens);
std::vector<std::string> read_tokens(std::istream& in, const std::string& name);

// Typed lookups into a key=value block; throw FormatError when missing or malformed.
int get_int(const KeyValues& kv, const std::string& key);
long long get_int64(const KeyValues& kv, const std::string& key);
double get_double(const KeyValues& kv, const std::string& key);
std::string get_string(const KeyValues& kv, const std::string& key);

// Round-trippable text form of a double.
std::string format_double(double v);

}  // namespace blex::io
