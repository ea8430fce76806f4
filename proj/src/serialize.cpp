#include "blex/serialize.hpp"

#include "blex/error.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <sstream>

namespace blex::io {
namespace {

static_assert(std::endian::native == std::endian::little, "blob layout assumes a little-endian host");

std::string next_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(std::string("unexpected end of file reading ") + what);
  return line;
}

}  // namespace

void write_magic(std::ostream& out, const std::string& magic) { out << magic << '\n'; }

void expect_magic(std::istream& in, const std::string& magic) {
  std::string line;
  if (!std::getline(in, line) || line != magic)
    throw FormatError("bad magic: expected " + magic + ", got '" + line.substr(0, 16) + "'");
}

void write_key_values(std::ostream& out, const KeyValues& kv) {
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  out << "end\n";
}

KeyValues read_key_values(std::istream& in) {
  KeyValues kv;
  for (;;) {
    const std::string line = next_line(in, "key=value block");
    if (line == "end") return kv;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed key=value line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
}

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m, int rank) {
  out << "tensor " << name << ' ' << rank << ' ' << m.rows() << ' ' << m.cols() << '\n';
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  out << '\n';
}

NamedMatrix read_matrix(std::istream& in) {
  std::istringstream header(next_line(in, "tensor header"));
  std::string tag;
  NamedMatrix nm;
  Eigen::Index rows = 0, cols = 0;
  if (!(header >> tag >> nm.name >> nm.rank >> rows >> cols) || tag != "tensor" || rows < 0 || cols < 0)
    throw FormatError("malformed tensor header");
  nm.value.resize(rows, cols);
  in.read(reinterpret_cast<char*>(nm.value.data()), static_cast<std::streamsize>(nm.value.size() * sizeof(double)));
  if (!in || in.get() != '\n') throw FormatError("truncated tensor blob for " + nm.name);
  return nm;
}

void write_tokens(std::ostream& out, const std::string& name, const std::vector<std::string>& tokens) {
  out << "tokens " << name << ' ' << tokens.size() << '\n';
  for (const auto& t : tokens) out << t << '\n';
}

std::vector<std::string> read_tokens(std::istream& in, const std::string& name) {
  std::istringstream header(next_line(in, "token list header"));
  std::string tag, got;
  std::size_t n = 0;
  if (!(header >> tag >> got >> n) || tag != "tokens" || got != name)
    throw FormatError("expected token list '" + name + "'");
  std::vector<std::string> tokens;
  tokens.reserve(n);
  for (std::size_t i = 0; i < n; ++i) tokens.push_back(next_line(in, "token list"));
  return tokens;
}

std::string get_string(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("missing key '" + key + "'");
  return it->second;
}

long long get_int64(const KeyValues& kv, const std::string& key) {
  const std::string s = get_string(kv, key);
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("key '" + key + "' is not an integer: " + s);
  return v;
}

int get_int(const KeyValues& kv, const std::string& key) { return static_cast<int>(get_int64(kv, key)); }

double get_double(const KeyValues& kv, const std::string& key) {
  const std::string s = get_string(kv, key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("");
    return v;
  } catch (const std::exception&) {
    throw FormatError("key '" + key + "' is not a number: " + s);
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace blex::io
