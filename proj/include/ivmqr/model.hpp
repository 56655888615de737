#pragma once

#include "ivmqr/domain.hpp"
#include "ivmqr/transport.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ivmqr {

//! d = delta(z, nu): nu in [0,1] is cut into cells at `breaks`, and each
//! (instrument, cell) pair is assigned a treatment.
struct TreatmentRule
{
  std::vector<double> breaks;               // increasing, inside (0,1)
  std::vector<std::vector<int>> assignment; // [z][cell] -> d

  int cells() const { return static_cast<int>(breaks.size()) + 1; }
  int cell_of(double nu) const;
  int operator()(int z, double nu) const { return assignment[z][cell_of(nu)]; }
  double cell_length(int cell) const;

  // D = Z when nu < compliance, D = 1 - Z otherwise.
  static TreatmentRule compliance(double rate);
  // D = Z for m treatments.
  static TreatmentRule perfect(int m);
};

//! Finite-cell copula between nu and the latent rank W.
//!
//! U is cut into slabs along one coordinate; inside slab s, nu falls in
//! rule cell c with probability cell_probs[s][c] and is uniform within the
//! cell. No slabs means nu is uniform on [0,1] and independent of W.
struct NuCoupling
{
  int axis = 0;
  std::vector<double> slab_breaks;
  std::vector<std::vector<double>> cell_probs;

  bool independent() const { return slab_breaks.empty(); }
  int slab_of(const Vec& w) const;
};

enum class RankCoupling
{
  invariance, // U_d = W
  similarity  // U_d = kernel(W, eps_d), eps_d i.i.d.
};

//! Structural model: mu, one quantile map per treatment, instrument law,
//! treatment rule, nu coupling and rank coupling.
struct StructuralModel
{
  ReferenceMeasure measure;
  std::vector<QuantileMap> maps;
  Vec instrument_law;
  TreatmentRule rule;
  NuCoupling coupling;
  RankCoupling rank = RankCoupling::invariance;
  double similarity_spread = 0.1;
  // Parameter family the maps were built from: "affine", "logit" or "potential".
  std::string family = "potential";
  // mu-mass of each coupling slab
  std::vector<double> slab_mass;

  StructuralModel(ReferenceMeasure measure,
                  std::vector<QuantileMap> maps,
                  Vec instrument_law,
                  TreatmentRule rule,
                  NuCoupling coupling = {},
                  RankCoupling rank = RankCoupling::invariance,
                  double similarity_spread = 0.1);

  int treatments() const { return static_cast<int>(maps.size()); }
  int dim() const { return measure.dim(); }
  const ReferenceDomain& domain() const { return measure.domain(); }

  // P(D = d | Z = z, U_d = u).
  double share(int d, int z, const Vec& u) const;
  // P(D = d | Z = z).
  double share(int d, int z) const;
  // Shares do not depend on u.
  bool constant_shares() const { return coupling.independent(); }
  // Exact f_{d,z} needs the law of U_D given (D, Z) in closed form.
  bool tractable() const;
};

//! Observed rows (Y, D, Z) with an optional latent annex.
struct ObservedSample
{
  Mat y; // p x n
  std::vector<int> d;
  std::vector<int> z;
  // Latent annex: U_D, nu and every potential rank U_0..U_{m-1}.
  std::optional<Mat> u;
  std::optional<Vec> nu;
  std::vector<Mat> ranks;

  int size() const { return static_cast<int>(y.cols()); }
  int dim() const { return static_cast<int>(y.rows()); }
  bool has_latent() const { return u.has_value(); }
  int count(int dd, int zz) const;
  int count_z(int zz) const;
};

ObservedSample simulate(const StructuralModel& model,
                        int n,
                        std::uint64_t seed,
                        bool keep_latent = false);

// q_d(u) = A_d^{-1}(u - b_d) on [0,1]^2 with the compliance rule.
StructuralModel example1_model(const Mat& A0,
                               const Mat& A1,
                               const Vec& b0,
                               const Vec& b1,
                               double compliance,
                               const Vec& instrument_law = Vec());

// Default instance: A_0 = I, A_1 = diag(1,2), b = 0.
StructuralModel example1_default(double compliance = 0.9);

// Potential log(1 + sum_i exp(u_i + m_i)) on [0,1]^p; its gradient is the
// vector of inside-good logit shares.
ConvexPotential logit_potential(const Vec& mean_utility);

StructuralModel example2_model(const Vec& mean0,
                               const Vec& mean1,
                               bool outside_option = true,
                               double compliance = 0.9,
                               const Vec& instrument_law = Vec());

StructuralModel example2_default(double compliance = 0.9);

// 0.1 u + 0.9 ((u1+u2)/2)(1,1)'.
QuantileMap regularized_diagonal_map();
// q = ((u1+u2)/2)(1,1)', PSD but singular.
QuantileMap diagonal_map();

// q_0 = id and q_1 as given, with nu coupled to u_1 so that rank
// similarity fails once q_0 and q_1 differ.
StructuralModel rank_violation_model(const QuantileMap& q1);

struct RankViolationReport
{
  int component = 0;
  int n = 0;
  std::vector<double> ks;       // per nu cell
  std::vector<double> critical; // per nu cell, 1% level
  std::vector<int> cell_sizes;
  double max_ks = 0.0;
  double alpha = 0.01;
  double corr_rank_z = 0.0;
  bool violation = false; // some cell rejects equality of laws
};

RankViolationReport rank_violation_demo(const StructuralModel& model,
                                        int n,
                                        std::uint64_t seed,
                                        int component = 0,
                                        double alpha = 0.01);

//! Test set in U: the box [lower, upper] or the half-space {normal'u <= offset}.
struct TestSet
{
  enum class Kind { box, half_space };
  Kind kind = Kind::box;
  Vec lower;
  Vec upper;
  Vec normal;
  double offset = 0.0;

  bool contains(const Vec& u) const;
  std::string describe() const;
};

// Random boxes and half-space cuts through random points of U.
std::vector<TestSet> default_test_sets(const ReferenceDomain& domain,
                                       int boxes,
                                       int cuts,
                                       std::uint64_t seed);

// mu(B): polygon clipping for flat mu on the square, quadrature otherwise.
double test_set_mass(const ReferenceMeasure& measure, const TestSet& set);

struct ImplicationRow
{
  int z = 0;
  int set = 0;
  int n_z = 0;
  double estimate = 0.0; // P(Y in q_D(B) | Z = z)
  double mass = 0.0;     // mu(B)
  double deviation = 0.0;
  double bound = 0.0;    // sigmas * sqrt(mu(B)(1 - mu(B)) / n_z)
  bool pass = false;
};

struct ImplicationReport
{
  std::vector<ImplicationRow> rows;
  double max_deviation = 0.0;
  double max_ratio = 0.0; // deviation / bound
  int failed_inversions = 0;
  bool pass = false;
};

// Y in q_D(B) is decided by inverting q_D at Y.
ImplicationReport verify_implication(const StructuralModel& model,
                                     const ObservedSample& sample,
                                     const std::vector<TestSet>& sets,
                                     double sigmas = 3.0);

void write_sample_csv(const std::string& path, const ObservedSample& sample);
ObservedSample read_sample_csv(const std::string& path);

} // namespace ivmqr
