#pragma once

#include <iosfwd>
#include <string>

#include "evtrav/common.hpp"

namespace evtrav
{

/// Hexadecimal float text ("%a"); parse_double reads it back bit-exactly.
std::string format_hex(double value);
double parse_double(const std::string& token);

/// Reads one token and fails with `context` unless it equals `expected`.
void expect_token(std::istream& in, const std::string& expected, const std::string& context);
double read_double(std::istream& in, const std::string& context);
long long read_integer(std::istream& in, const std::string& context);

/// Row-per-line matrix of hex floats.
void write_rows(std::ostream& out, const MatrixXd& m);
MatrixXd read_rows(std::istream& in, Eigen::Index rows, Eigen::Index cols, const std::string& context);

std::ofstream open_for_writing(const std::string& path);
std::ifstream open_for_reading(const std::string& path);

}  // namespace evtrav
