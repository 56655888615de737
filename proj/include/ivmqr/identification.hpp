#pragma once

#include "ivmqr/densities.hpp"
#include "ivmqr/domain.hpp"
#include "ivmqr/transport.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ivmqr {

struct ConditionReport
{
  std::string condition;
  double margin = 0.0; // min over the grid of LHS - RHS
  Vec y0;              // minimizing pair (pair-grid checks)
  Vec y1;
  Vec u;               // minimizing node (U-grid checks)
  bool pass = false;
  int resolution = 0;
  std::string provenance;
  long checked = 0;
  long skipped = 0;
  bool relabeled = false; // p = 1 matrix check after a column swap
};

//! Grid points in Y_0 and Y_1 with the four binary fields pre-evaluated.
struct PairGrid
{
  Mat y0; // p x n0
  Mat y1; // p x n1
  Vec f00, f01; // at y0
  Vec f10, f11; // at y1
  int resolution = 0;
  std::string provenance;

  int size0() const { return static_cast<int>(y0.cols()); }
  int size1() const { return static_cast<int>(y1.cols()); }
};

// Tensor grids over the identified supports of Y_0 and Y_1; nodes outside
// the supports are dropped.
PairGrid build_pair_grid(const FieldSet& fields, int resolution = 50);

// Pair grid from explicit point sets.
PairGrid pair_grid_from_points(const FieldSet& fields, const Mat& y0, const Mat& y1);

// Pointwise values.
double condition12_value(double f00, double f01, double f10, double f11, double ratio, int p);
double mlr_value(double f00, double f01, double f10, double f11);
// Smallest eigenvalue of the symmetric part of [[f00, f01], [f10, f11]].
double pd_value_p1(double f00, double f01, double f10, double f11);

ConditionReport check_condition_12(const PairGrid& grid, double lambda_lo, double lambda_hi, int p);
ConditionReport check_mlr(const PairGrid& grid);
// errors: dimension-error when the grid is not one-dimensional.
ConditionReport check_pd_matrix_p1(const PairGrid& grid, bool relabel = false);

struct QuadraticFormResult
{
  double sampled_min = 0.0;
  double exact_min = 0.0;
  Vec sampled_argmin; // unit vector (xi_0, ..., xi_{m-1})
  Mat block;          // assembled mp x mp form
};

// Block (z, d) = f_{d,z}(q_d(u)) cof(Dq_d(u)).
Mat assemble_quadratic_form(const std::vector<const VectorMap*>& maps,
                            const FieldSet& fields,
                            const Vec& u);

QuadraticFormResult quadratic_form_min(const std::vector<const VectorMap*>& maps,
                                       const FieldSet& fields,
                                       const Vec& u,
                                       int samples,
                                       std::uint64_t seed);

// Block (d', d) = (sum_z b_{d',z} f_{d,z}(q_d(u))) cof(Dq_d(u)).
Mat assemble_general_form(const Mat& b,
                          const std::vector<const VectorMap*>& maps,
                          const FieldSet& fields,
                          const Vec& u);

// errors: invalid-b for a non-square b or one that does not match m.
ConditionReport check_general_condition(const Mat& b,
                                        const FieldSet& fields,
                                        const std::vector<const VectorMap*>& maps,
                                        const QuadratureGrid& grid);

struct BSearchResult
{
  std::string best_name;
  Mat best_b;
  ConditionReport best;
  std::vector<std::pair<std::string, double>> tried; // name, margin
};

// Heuristic sweep over b in {I, inverse share matrix, row-normalized shares}.
BSearchResult search_b_matrix(const FieldSet& fields,
                              const std::vector<const VectorMap*>& maps,
                              const QuadratureGrid& grid);

std::vector<const VectorMap*> map_pointers(const std::vector<QuantileMap>& maps);

} // namespace ivmqr
