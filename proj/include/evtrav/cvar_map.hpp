#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "evtrav/predictor.hpp"

namespace evtrav
{

/// Yaw bin centers at 2*pi*j / n_yaw; returns the nearest one.
int nearest_yaw_bin(double yaw, int n_yaw);

/// Expected PMFs for every (cell, yaw bin), evaluated once per map and model so
/// stacks for several risk levels can be derived without rerunning the networks.
struct PmfField
{
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  int n_yaw = 0;
  double resolution = 0.25;
  /// Column (r * cols + c) * n_yaw + j holds the PMF of cell (r, c), yaw bin j.
  std::array<MatrixXd, kNumTravParams> pmfs;
  /// One flag per column; empty when the source has no OOD notion.
  std::vector<unsigned char> ood;
  ParamDiscretizations discs;

  Eigen::Index column(Eigen::Index r, Eigen::Index c, int j) const { return (r * cols + c) * n_yaw + j; }
};

/// Learned expected PMFs with OOD flags from the model's calibrated threshold.
PmfField learned_pmf_field(const TerrainMap& map, const EvidentialModel& model, const RobotParams& params, int n_yaw);
/// Physics-prior PMFs only.
PmfField prior_pmf_field(const TerrainMap& map, const PriorConfig& prior, const FeatureConfig& features,
                         const ParamDiscretizations& discs, const RobotParams& params, int n_yaw);

/// H x W x n_yaw x 4 risk values: left-tail CVaR for the tractions, right-tail
/// CVaR for roll and pitch.
struct CvarMapStack
{
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  int n_yaw = 0;
  double resolution = 0.25;
  double alpha = 1.0;
  std::vector<double> values;
  std::vector<unsigned char> ood;

  std::size_t index(Eigen::Index r, Eigen::Index c, int j, int k) const
  {
    return static_cast<std::size_t>(((r * cols + c) * n_yaw + j) * kNumTravParams + k);
  }
  double at(Eigen::Index r, Eigen::Index c, int j, int k) const { return values[index(r, c, j, k)]; }
  bool has_ood() const { return !ood.empty(); }

  bool contains(double x, double y) const
  {
    return x >= 0 && y >= 0 && x < static_cast<double>(cols) * resolution && y < static_cast<double>(rows) * resolution;
  }
  /// Risk values at the cell under (x, y) and the nearest yaw bin.
  TraversabilitySample lookup(double x, double y, double yaw) const;
  bool ood_at(double x, double y, double yaw) const;

  /// A constant stack, handy for constructed scenarios.
  static CvarMapStack constant(Eigen::Index rows, Eigen::Index cols, int n_yaw, double resolution,
                               const TraversabilitySample& value);
  void set(Eigen::Index r, Eigen::Index c, const TraversabilitySample& value);
};

CvarMapStack cvar_stack(const PmfField& field, double alpha);

/// Stack for a map, a trained model and a risk level.
CvarMapStack build_cvar_maps(const TerrainMap& map, const EvidentialModel& model, const RobotParams& params,
                             double alpha, int n_yaw);

/// Grid format in the terrain family:
///     evtrav-cvar 1
///     resolution <r>
///     size <rows> <cols> <n_yaw> 4
///     alpha <alpha>
///     values               followed by rows*cols lines of n_yaw*4 hex floats
///     ood <0|1>            followed, when 1, by rows lines of cols*n_yaw digits
void write_cvar_stack(std::ostream& out, const CvarMapStack& s);
CvarMapStack read_cvar_stack(std::istream& in);

}  // namespace evtrav
