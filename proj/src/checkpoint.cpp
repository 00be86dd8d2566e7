#include "evtrav/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace evtrav
{

void Checkpoint::put(const std::string& name, MatrixXd value)
{
  require(!name.empty() && name.find_first_of(" \t\n") == std::string::npos, "Checkpoint: invalid entry name");
  for (auto& [key, stored] : entries_) {
    if (key == name) {
      stored = std::move(value);
      return;
    }
  }
  entries_.emplace_back(name, std::move(value));
}

void Checkpoint::put_scalar(const std::string& name, double value)
{
  put(name, MatrixXd::Constant(1, 1, value));
}

bool Checkpoint::contains(const std::string& name) const
{
  for (const auto& [key, value] : entries_) {
    if (key == name) {
      return true;
    }
  }
  return false;
}

const MatrixXd& Checkpoint::get(const std::string& name) const
{
  for (const auto& [key, value] : entries_) {
    if (key == name) {
      return value;
    }
  }
  throw DomainError("Checkpoint: missing entry '" + name + "'");
}

double Checkpoint::get_scalar(const std::string& name) const
{
  const MatrixXd& m = get(name);
  require(m.size() == 1, "Checkpoint: entry '" + name + "' is not a scalar");
  return m(0, 0);
}

void Checkpoint::put_parameters(const nn::ParameterSet& params)
{
  for (const auto& p : params) {
    put(p.name, Eigen::Map<const MatrixXd>(p.value, p.rows, p.cols));
  }
}

void Checkpoint::load_parameters(const nn::ParameterSet& params) const
{
  for (const auto& p : params) {
    const MatrixXd& m = get(p.name);
    require(m.rows() == p.rows && m.cols() == p.cols, "Checkpoint: shape mismatch for '" + p.name + "'");
    Eigen::Map<MatrixXd>(p.value, p.rows, p.cols) = m;
  }
}

void Checkpoint::write(std::ostream& out) const
{
  out << "evtrav-checkpoint " << kVersion << "\n";
  out << "entries " << entries_.size() << "\n";
  for (const auto& [name, value] : entries_) {
    out << name << ' ' << value.rows() << ' ' << value.cols() << "\n";
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      out << (i == 0 ? "" : " ") << format_hex(value.data()[i]);
    }
    out << "\n";
  }
}

Checkpoint Checkpoint::read(std::istream& in)
{
  std::string magic;
  int version = 0;
  in >> magic >> version;
  require(in && magic == "evtrav-checkpoint", "Checkpoint: not a checkpoint file");
  require(version == kVersion, "Checkpoint: unsupported version " + std::to_string(version));
  std::string label;
  std::size_t count = 0;
  in >> label >> count;
  require(in && label == "entries", "Checkpoint: malformed header");
  Checkpoint cp;
  for (std::size_t e = 0; e < count; ++e) {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    in >> name >> rows >> cols;
    require(in && rows >= 0 && cols >= 0, "Checkpoint: malformed entry header");
    MatrixXd value(rows, cols);
    std::string token;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      in >> token;
      require(static_cast<bool>(in), "Checkpoint: truncated entry '" + name + "'");
      value.data()[i] = parse_double(token);
    }
    cp.entries_.emplace_back(std::move(name), std::move(value));
  }
  return cp;
}

void Checkpoint::save(const std::string& path) const
{
  std::ofstream out(path);
  require(static_cast<bool>(out), "Checkpoint: cannot open '" + path + "' for writing");
  write(out);
  require(static_cast<bool>(out), "Checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path)
{
  std::ifstream in(path);
  require(static_cast<bool>(in), "Checkpoint: cannot open '" + path + "'");
  return read(in);
}

bool operator==(const Checkpoint& a, const Checkpoint& b)
{
  if (a.entries_.size() != b.entries_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& [na, va] = a.entries_[i];
    const auto& [nb, vb] = b.entries_[i];
    if (na != nb || va.rows() != vb.rows() || va.cols() != vb.cols()) {
      return false;
    }
    // Bitwise comparison keeps NaN payloads and signed zeros distinct.
    if (std::memcmp(va.data(), vb.data(), sizeof(double) * static_cast<std::size_t>(va.size())) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace evtrav
