#pragma once

#include "kaf/error.hpp"
#include "kaf/types.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace kaf::io {

//! Text matrix file: a single header line
//!   # kaf-matrix 1 rows=<R> cols=<C> <free metadata>
//! followed by R lines of C whitespace-separated values written with 17
//! significant digits, which round-trips doubles exactly.
struct MatrixFile
{
  RowMatrix data;
  std::string meta;
};

inline std::string format_double(double v)
{
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

inline void write_matrix(std::ostream& os, const RowMatrix& m, const std::string& meta = {})
{
  require(meta.find('\n') == std::string::npos,
          "write_matrix: metadata must be a single line");
  os << "# kaf-matrix 1 rows=" << m.rows() << " cols=" << m.cols();
  if (!meta.empty())
    os << ' ' << meta;
  os << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j)
        os << ' ';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

inline void write_matrix(const std::string& path, const RowMatrix& m, const std::string& meta = {})
{
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw Error(ErrorKind::invalid_input, "cannot open " + path + " for writing");
  write_matrix(os, m, meta);
}

inline MatrixFile read_matrix(std::istream& is)
{
  std::string header;
  std::getline(is >> std::ws, header);
  std::istringstream hs(header);
  std::string hash, tag, rows_kv, cols_kv;
  int version = 0;
  hs >> hash >> tag >> version >> rows_kv >> cols_kv;
  require(hash == "#" && tag == "kaf-matrix" && version == 1 &&
            rows_kv.rfind("rows=", 0) == 0 && cols_kv.rfind("cols=", 0) == 0,
          "read_matrix: malformed header");
  const long rows = std::stol(rows_kv.substr(5));
  const long cols = std::stol(cols_kv.substr(5));
  require(rows >= 0 && cols >= 0, "read_matrix: negative shape");
  MatrixFile out;
  std::getline(hs >> std::ws, out.meta);
  out.data.resize(rows, cols);
  std::string token;
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) {
      if (!(is >> token))
        throw Error(ErrorKind::invalid_input, "read_matrix: truncated data");
      double v = 0.0;
      const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
      require(res.ec == std::errc() && res.ptr == token.data() + token.size(),
              "read_matrix: bad number '" + token + "'");
      out.data(i, j) = v;
    }
  return out;
}

inline MatrixFile read_matrix(const std::string& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw Error(ErrorKind::invalid_input, "cannot open " + path);
  return read_matrix(is);
}

} // namespace kaf::io
