#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "evtrav/nn.hpp"
#include "evtrav/text_io.hpp"

namespace evtrav
{

/// Ordered name -> 64-bit array store. The text encoding writes every value as
/// a hexadecimal float, so save/load round-trips bit-exactly.
///
///     evtrav-checkpoint 1
///     entries <count>
///     <name> <rows> <cols>
///     <rows*cols hex floats, column-major, space separated>
///     ...
class Checkpoint
{
public:
  static constexpr int kVersion = 1;

  void put(const std::string& name, MatrixXd value);
  void put_scalar(const std::string& name, double value);
  bool contains(const std::string& name) const;
  const MatrixXd& get(const std::string& name) const;
  double get_scalar(const std::string& name) const;
  const std::vector<std::pair<std::string, MatrixXd>>& entries() const { return entries_; }

  /// Adds a copy of every parameter's current value.
  void put_parameters(const nn::ParameterSet& params);
  /// Copies stored arrays into matching parameters; shapes must agree.
  void load_parameters(const nn::ParameterSet& params) const;

  void write(std::ostream& out) const;
  static Checkpoint read(std::istream& in);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);

private:
  std::vector<std::pair<std::string, MatrixXd>> entries_;
};

}  // namespace evtrav
