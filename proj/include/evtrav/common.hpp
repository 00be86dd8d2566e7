#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace evtrav
{

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

/// Raised when an argument lies outside an operation's domain.
class DomainError : public std::domain_error
{
public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

inline void require(bool condition, const std::string& message)
{
  if (!condition) {
    throw DomainError(message);
  }
}

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for a tuple of tags (map, episode, purpose, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags)
{
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t t : tags) {
    h = splitmix64(h ^ splitmix64(t));
  }
  return h;
}

/// Number of worker threads used by parallel_for. Zero means hardware concurrency.
inline std::size_t& worker_count()
{
  static std::size_t count = 0;
  return count;
}

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
/// write results into slot i so the output never depends on scheduling.
template <typename Body>
void parallel_for(std::size_t n, Body&& body)
{
  std::size_t workers = worker_count();
  if (workers == 0) {
    workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      body(i);
    }
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        body(i);
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
}

}  // namespace evtrav
