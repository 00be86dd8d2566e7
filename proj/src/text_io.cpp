#include "evtrav/text_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

namespace evtrav
{

std::string format_hex(double value)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", value);
  return buf;
}

double parse_double(const std::string& token)
{
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  require(end != token.c_str() && *end == '\0' && errno != ERANGE, "cannot parse number '" + token + "'");
  return v;
}

void expect_token(std::istream& in, const std::string& expected, const std::string& context)
{
  std::string token;
  in >> token;
  require(in && token == expected, context + ": expected '" + expected + "', found '" + token + "'");
}

double read_double(std::istream& in, const std::string& context)
{
  std::string token;
  in >> token;
  require(static_cast<bool>(in), context + ": unexpected end of input");
  return parse_double(token);
}

long long read_integer(std::istream& in, const std::string& context)
{
  std::string token;
  in >> token;
  require(static_cast<bool>(in), context + ": unexpected end of input");
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(token.c_str(), &end, 10);
  require(end != token.c_str() && *end == '\0' && errno != ERANGE, context + ": cannot parse integer '" + token + "'");
  return v;
}

void write_rows(std::ostream& out, const MatrixXd& m)
{
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out << (c == 0 ? "" : " ") << format_hex(m(r, c));
    }
    out << '\n';
  }
}

MatrixXd read_rows(std::istream& in, Eigen::Index rows, Eigen::Index cols, const std::string& context)
{
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = read_double(in, context);
    }
  }
  return m;
}

std::ofstream open_for_writing(const std::string& path)
{
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_for_reading(const std::string& path)
{
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open '" + path + "'");
  return in;
}

}  // namespace evtrav
