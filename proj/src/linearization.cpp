#include "ivmqr/linearization.hpp"

#include "ivmqr/error.hpp"
#include "ivmqr/geometry.hpp"
#include "ivmqr/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace ivmqr {

namespace {

const ExactDensity* as_exact(const DensityField& f)
{
  return dynamic_cast<const ExactDensity*>(&f);
}

void check_maps(const std::vector<const VectorMap*>& maps, const FieldSet& fields, int z)
{
  const int m = static_cast<int>(maps.size());
  if (m == 0 || fields.treatments() != m)
    throw Error(ErrorKind::size_mismatch, "need one field row per treatment");
  if (z < 0 || z >= fields.instruments())
    throw Error(ErrorKind::size_mismatch, "instrument label out of range");
}

// Slab boundaries along the coupling axis and the share of (d, z) in each.
struct Slabs
{
  int axis = 0;
  std::vector<double> breaks; // includes 0 and 1
  std::vector<double> share;  // per slab
};

Slabs slabs_for(const StructuralModel& m, int d, int z)
{
  Slabs s;
  s.axis = m.coupling.independent() ? 0 : m.coupling.axis;
  s.breaks.push_back(0.0);
  for (double b : m.coupling.slab_breaks)
    s.breaks.push_back(std::clamp(b, 0.0, 1.0));
  s.breaks.push_back(1.0);
  for (std::size_t k = 0; k + 1 < s.breaks.size(); ++k) {
    Vec probe = Vec::Constant(m.dim(), 0.5);
    probe(s.axis) = 0.5 * (s.breaks[k] + s.breaks[k + 1]);
    s.share.push_back(m.share(d, z, probe));
  }
  return s;
}

// Mass of the pullback of the linearized image of one cell.
double cell_image_mass(const VectorMap& q,
                       const ExactDensity& field,
                       const Slabs& slabs,
                       const Vec& c,
                       const Vec& width)
{
  const int p = q.dim();
  const QuantileMap& truth = field.map();
  const Vec yc = q.value(c);
  auto vc = truth.inverse_extended(yc, &c);
  if (!vc)
    return 0.0;
  const Mat M = truth.jacobian(*vc).ldlt().solve(q.jacobian(c));
  double mass = 0.0;
  for (std::size_t k = 0; k + 1 < slabs.breaks.size(); ++k) {
    const double lo = slabs.breaks[k], hi = slabs.breaks[k + 1];
    if (hi <= lo || slabs.share[k] == 0.0)
      continue;
    double a;
    if (p == 1) {
      const double half = 0.5 * std::abs(M(0, 0)) * width(0);
      a = std::max(0.0, std::min((*vc)(0) + half, hi) - std::max((*vc)(0) - half, lo));
    } else {
      const Eigen::Matrix2d edges = M * width.asDiagonal();
      geometry::Polygon poly =
        geometry::parallelogram(Eigen::Vector2d((*vc)(0), (*vc)(1)), edges);
      Eigen::Vector2d blo(0.0, 0.0), bhi(1.0, 1.0);
      blo(slabs.axis) = lo;
      bhi(slabs.axis) = hi;
      a = geometry::area(geometry::clip_box(poly, blo, bhi));
    }
    mass += slabs.share[k] * a;
  }
  return mass;
}

double frob_inner(const Mat& a, const Mat& b)
{
  return (a.array() * b.array()).sum();
}

} // namespace

SignedGridMeasure operator-(const SignedGridMeasure& a, const SignedGridMeasure& b)
{
  if (a.grid != b.grid && a.density.size() != b.density.size())
    throw Error(ErrorKind::size_mismatch, "measures live on different grids");
  return SignedGridMeasure(a.grid, a.density - b.density);
}

SignedGridMeasure operator*(double s, const SignedGridMeasure& a)
{
  return SignedGridMeasure(a.grid, s * a.density);
}

double tv_norm(const SignedGridMeasure& m)
{
  return m.grid->weights.dot(m.density.cwiseAbs());
}

SignedGridMeasure reference_measure_on(const ReferenceMeasure& mu,
                                       std::shared_ptr<const QuadratureGrid> grid)
{
  Vec rho(grid->size());
  for (int i = 0; i < grid->size(); ++i)
    rho(i) = mu.density(grid->node(i));
  return SignedGridMeasure(std::move(grid), std::move(rho));
}

Mat cofactor(const Mat& M)
{
  if (M.rows() != M.cols())
    throw Error(ErrorKind::size_mismatch, "cofactor needs a square matrix");
  Eigen::FullPivLU<Mat> lu(M);
  if (!lu.isInvertible())
    throw Error(ErrorKind::singular_matrix, "cofactor of a singular matrix");
  if (M.rows() == 1)
    return Mat::Ones(1, 1);
  if (M.rows() == 2) {
    Mat C(2, 2);
    C << M(1, 1), -M(0, 1), -M(1, 0), M(0, 0);
    return C;
  }
  return M.determinant() * lu.inverse();
}

bool cell_mode_supported(const FieldSet& fields, const QuadratureGrid& grid)
{
  if (!grid.tensor() || grid.dim() > 2 || fields.treatments() == 0)
    return false;
  const StructuralModel* model = nullptr;
  for (const auto& row : fields.f)
    for (const auto& f : row) {
      const ExactDensity* e = as_exact(*f);
      if (!e)
        return false;
      if (model && model != &e->model())
        return false;
      model = &e->model();
    }
  return model->domain().kind() == DomainKind::unit_cube && model->measure.flat();
}

SignedGridMeasure phi(const std::vector<const VectorMap*>& maps,
                      int z,
                      const FieldSet& fields,
                      std::shared_ptr<const QuadratureGrid> grid,
                      PhiMode mode)
{
  check_maps(maps, fields, z);
  const int m = static_cast<int>(maps.size());
  const int n = grid->size();
  Vec rho = Vec::Zero(n);
  if (mode == PhiMode::cell) {
    if (!cell_mode_supported(fields, *grid))
      throw Error(ErrorKind::unsupported_coupling,
                  "cell mode needs exact fields of one cube model and a tensor grid");
    std::vector<Slabs> slabs;
    for (int d = 0; d < m; ++d)
      slabs.push_back(slabs_for(as_exact(fields.at(d, z))->model(), d, z));
    const double vol = grid->cell_width.prod();
    parallel_for(n, [&](std::size_t i) {
      const Vec c = grid->node(static_cast<int>(i));
      double mass = 0.0;
      for (int d = 0; d < m; ++d)
        mass += cell_image_mass(*maps[d], *as_exact(fields.at(d, z)), slabs[d], c, grid->cell_width);
      rho(i) = mass / vol;
    });
    return SignedGridMeasure(std::move(grid), std::move(rho));
  }
  parallel_for(n, [&](std::size_t i) {
    const Vec u = grid->node(static_cast<int>(i));
    double s = 0.0;
    for (int d = 0; d < m; ++d) {
      const double f = fields.at(d, z).value(maps[d]->value(u));
      if (f != 0.0)
        s += f * maps[d]->jacobian(u).determinant();
    }
    rho(i) = s;
  });
  return SignedGridMeasure(std::move(grid), std::move(rho));
}

double piola_residual(const VectorMap& map, const QuadratureGrid& grid, double step)
{
  const int p = map.dim();
  const ReferenceDomain& dom = map.domain();
  std::vector<double> worst(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t k) {
    const Vec u = grid.node(static_cast<int>(k));
    if (dom.boundary_distance(u) < step)
      return;
    Vec div = Vec::Zero(p);
    for (int i = 0; i < p; ++i) {
      Vec a = u, b = u;
      a(i) += step;
      b(i) -= step;
      const Mat dc = (cofactor(map.jacobian(a)) - cofactor(map.jacobian(b))) / (2 * step);
      div += dc.row(i).transpose();
    }
    worst[k] = div.cwiseAbs().maxCoeff();
  });
  return worst.empty() ? 0.0 : *std::max_element(worst.begin(), worst.end());
}

double ScalarPotential::value(const Vec& u) const
{
  double v = 0.5 * u.dot(B * u) + g.dot(u);
  if (plus)
    v += plus->value(u);
  if (minus)
    v -= minus->value(u);
  return v;
}

Vec ScalarPotential::gradient(const Vec& u) const
{
  Vec v = B * u + g;
  if (plus)
    v += plus->gradient(u);
  if (minus)
    v -= minus->gradient(u);
  return v;
}

Mat ScalarPotential::hessian(const Vec& u) const
{
  Mat H = B;
  if (plus)
    H += plus->hessian(u);
  if (minus)
    H -= minus->hessian(u);
  return H;
}

PinnedField::PinnedField(ReferenceDomain domain, ScalarPotential psi)
  : domain_(domain)
  , psi_(std::move(psi))
{}

void PinnedField::cutoff(const Vec& u, double& chi, Vec& grad, Mat& hess) const
{
  const int p = dim();
  grad = Vec::Zero(p);
  hess = Mat::Zero(p, p);
  if (domain_.kind() == DomainKind::unit_ball) {
    // chi = cos^2(pi r / 2) = (1 + cos(pi r)) / 2
    const double r = u.norm();
    chi = 0.5 * (1.0 + std::cos(M_PI * r));
    const double g2 = -0.5 * M_PI * M_PI * std::cos(M_PI * r);
    if (r < 1e-8) {
      hess = -0.5 * M_PI * M_PI * Mat::Identity(p, p);
      return;
    }
    const double g1 = -0.5 * M_PI * std::sin(M_PI * r);
    const Vec e = u / r;
    grad = g1 * e;
    hess = g2 * e * e.transpose() + (g1 / r) * (Mat::Identity(p, p) - e * e.transpose());
    return;
  }
  // chi = prod_i sin^2(pi u_i)
  Vec sq(p), dsq(p), d2sq(p);
  for (int i = 0; i < p; ++i) {
    const double s = std::sin(M_PI * u(i));
    sq(i) = s * s;
    dsq(i) = M_PI * std::sin(2.0 * M_PI * u(i));
    d2sq(i) = 2.0 * M_PI * M_PI * std::cos(2.0 * M_PI * u(i));
  }
  chi = sq.prod();
  for (int j = 0; j < p; ++j) {
    double rest = 1.0;
    for (int i = 0; i < p; ++i)
      if (i != j)
        rest *= sq(i);
    grad(j) = dsq(j) * rest;
    hess(j, j) = d2sq(j) * rest;
    for (int k = j + 1; k < p; ++k) {
      double r2 = 1.0;
      for (int i = 0; i < p; ++i)
        if (i != j && i != k)
          r2 *= sq(i);
      hess(j, k) = hess(k, j) = dsq(j) * dsq(k) * r2;
    }
  }
}

Vec PinnedField::value(const Vec& u) const
{
  double chi;
  Vec gc;
  Mat hc;
  cutoff(u, chi, gc, hc);
  return psi_.value(u) * gc + chi * psi_.gradient(u);
}

Mat PinnedField::jacobian(const Vec& u) const
{
  double chi;
  Vec gc;
  Mat hc;
  cutoff(u, chi, gc, hc);
  const Vec gp = psi_.gradient(u);
  Mat J = psi_.value(u) * hc + gc * gp.transpose() + gp * gc.transpose() + chi * psi_.hessian(u);
  return 0.5 * (J + J.transpose());
}

std::string PinnedField::describe() const
{
  std::ostringstream os;
  os << "pinned(" << domain_.name() << ")";
  return os.str();
}

SineField::SineField(int dim, int axis, double weight)
  : dim_(dim)
  , axis_(axis)
  , weight_(weight)
{
  if (axis < 0 || axis >= dim)
    throw Error(ErrorKind::dimension_error, "sine field axis out of range");
}

Vec SineField::value(const Vec& u) const
{
  Vec v = Vec::Zero(dim_);
  v(axis_) = weight_ * std::sin(M_PI * u(axis_));
  return v;
}

Mat SineField::jacobian(const Vec& u) const
{
  Mat J = Mat::Zero(dim_, dim_);
  J(axis_, axis_) = weight_ * M_PI * std::cos(M_PI * u(axis_));
  return J;
}

std::string SineField::describe() const
{
  std::ostringstream os;
  os << "sine(axis=" << axis_ << ",weight=" << weight_ << ")";
  return os.str();
}

Mat tangent_lattice(const ReferenceDomain& domain)
{
  const int p = domain.dim();
  const int res = p == 1 ? 400 : (p == 2 ? 60 : 20);
  return sup_lattice(domain, res);
}

double sup_norm(const TangentDirection& h, const Mat& lattice)
{
  double s = 0.0;
  for (int d = 0; d < h.treatments(); ++d)
    for (Eigen::Index k = 0; k < lattice.cols(); ++k)
      s = std::max(s, h.value(d, lattice.col(k)).norm());
  return s;
}

double derivative_bound(const TangentDirection& h, const Mat& lattice)
{
  double s = 0.0;
  for (int d = 0; d < h.treatments(); ++d)
    for (Eigen::Index k = 0; k < lattice.cols(); ++k) {
      Eigen::SelfAdjointEigenSolver<Mat> eig(h.jacobian(d, lattice.col(k)), Eigen::EigenvaluesOnly);
      s = std::max(s, eig.eigenvalues().cwiseAbs().maxCoeff());
    }
  return s;
}

void normalize(TangentDirection& h, const Mat& lattice)
{
  h.scale = 1.0;
  const double s = sup_norm(h, lattice);
  if (!(s > 0))
    throw Error(ErrorKind::no_directions, "cannot normalize a zero direction");
  h.scale = 1.0 / s;
}

std::vector<PerturbedMap> perturb(const std::vector<const VectorMap*>& maps,
                                  const TangentDirection& h,
                                  double s)
{
  std::vector<PerturbedMap> out;
  for (int d = 0; d < static_cast<int>(maps.size()); ++d)
    out.emplace_back(*maps[d], h, d, s);
  return out;
}

std::vector<const VectorMap*> pointers(const std::vector<PerturbedMap>& maps)
{
  std::vector<const VectorMap*> out;
  for (const auto& q : maps)
    out.push_back(&q);
  return out;
}

SignedGridMeasure phi_prime(const std::vector<const VectorMap*>& maps,
                            const TangentDirection& h,
                            int z,
                            const FieldSet& fields,
                            std::shared_ptr<const QuadratureGrid> grid)
{
  check_maps(maps, fields, z);
  if (h.treatments() != static_cast<int>(maps.size()))
    throw Error(ErrorKind::size_mismatch, "direction must have one field per treatment");
  const int m = static_cast<int>(maps.size());
  const int n = grid->size();
  Vec rho = Vec::Zero(n);
  parallel_for(n, [&](std::size_t i) {
    const Vec u = grid->node(static_cast<int>(i));
    double s = 0.0;
    for (int d = 0; d < m; ++d) {
      const DensityField& f = fields.at(d, z);
      const Vec y = maps[d]->value(u);
      const double fv = f.value(y);
      if (fv == 0.0)
        continue;
      const Mat J = maps[d]->jacobian(u);
      s += J.determinant() * f.gradient(y).dot(h.value(d, u)) +
           fv * frob_inner(cofactor(J), h.jacobian(d, u));
    }
    rho(i) = s;
  });
  return SignedGridMeasure(std::move(grid), std::move(rho));
}

Vec divergence_form_density(const std::vector<const VectorMap*>& maps,
                            const TangentDirection& h,
                            int z,
                            const FieldSet& fields,
                            const QuadratureGrid& grid,
                            double step)
{
  check_maps(maps, fields, z);
  const int m = static_cast<int>(maps.size());
  const int p = maps[0]->dim();
  const ReferenceDomain& dom = maps[0]->domain();
  auto flux = [&](int d, const Vec& u) -> Vec {
    const Vec y = maps[d]->value(u);
    return fields.at(d, z).value(y) * (cofactor(maps[d]->jacobian(u)) * h.value(d, u));
  };
  Vec out(grid.size());
  parallel_for(grid.size(), [&](std::size_t k) {
    const Vec u = grid.node(static_cast<int>(k));
    if (dom.boundary_distance(u) < step) {
      out(k) = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    double s = 0.0;
    for (int d = 0; d < m; ++d)
      for (int i = 0; i < p; ++i) {
        Vec a = u, b = u;
        a(i) += step;
        b(i) -= step;
        s += (flux(d, a)(i) - flux(d, b)(i)) / (2 * step);
      }
    out(k) = s;
  });
  return out;
}

double admissible_alpha(const std::vector<const VectorMap*>& q_star,
                        const TangentDirection& h,
                        const QuadratureGrid& grid,
                        double lambda_lo,
                        double lambda_hi,
                        double alpha_max)
{
  auto inside = [&](double a) {
    auto maps = perturb(q_star, h, a);
    for (const auto& q : maps)
      if (!check_class_membership(q, grid, lambda_lo, lambda_hi).pass)
        return false;
    return true;
  };
  if (!inside(0.0))
    return 0.0;
  if (inside(alpha_max))
    return alpha_max;
  // bisection between an admissible and an inadmissible step
  double good = 0.0, bad = alpha_max;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (good + bad);
    if (inside(mid))
      good = mid;
    else
      bad = mid;
  }
  return good;
}

TangentSample sample_tangent(const std::vector<const VectorMap*>& q_star,
                             const TangentOptions& opts,
                             std::uint64_t seed,
                             int count)
{
  if (!(opts.K > 0))
    throw Error(ErrorKind::invalid_model, "derivative bound K must be positive");
  if (q_star.empty())
    throw Error(ErrorKind::size_mismatch, "need at least one map");
  const ReferenceDomain dom = q_star[0]->domain();
  const int p = dom.dim();
  const int m = static_cast<int>(q_star.size());
  const Mat lattice = tangent_lattice(dom);
  const QuadratureGrid member = build_grid(dom, opts.membership_resolution);
  const int max_attempts = opts.max_attempts > 0 ? opts.max_attempts : 20 * std::max(count, 1);

  struct Candidate
  {
    TangentDirection h;
    int status = 0; // 0 accepted, 1 derivative, 2 alpha
  };
  auto make = [&](int attempt) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::normal_distribution<double> normal(0.0, 1.0);
    Candidate c;
    for (int d = 0; d < m; ++d) {
      ScalarPotential psi;
      psi.B = Mat(p, p);
      for (int i = 0; i < p; ++i)
        for (int j = 0; j <= i; ++j)
          psi.B(i, j) = psi.B(j, i) = normal(rng);
      psi.g = Vec(p);
      for (int i = 0; i < p; ++i)
        psi.g(i) = normal(rng);
      for (int part = 0; part < 2; ++part) {
        const int pieces = 3;
        Mat slopes(pieces, p);
        Vec offsets(pieces);
        for (int k = 0; k < pieces; ++k) {
          for (int i = 0; i < p; ++i)
            slopes(k, i) = normal(rng);
          offsets(k) = 0.5 * normal(rng);
        }
        auto pot = ConvexPotential::smooth_max(dom, slopes, offsets, 0.0, 0.0);
        (part == 0 ? psi.plus : psi.minus) = pot;
      }
      c.h.fields.push_back(std::make_shared<PinnedField>(dom, std::move(psi)));
    }
    normalize(c.h, lattice);
    if (derivative_bound(c.h, lattice) > opts.K) {
      c.status = 1;
      return c;
    }
    c.h.alpha = admissible_alpha(q_star, c.h, member, opts.lambda_lo, opts.lambda_hi, opts.alpha_max);
    if (!(c.h.alpha > 0))
      c.status = 2;
    return c;
  };

  TangentSample out;
  const int batch = std::max(1, max_threads());
  int attempt = 0;
  while (static_cast<int>(out.directions.size()) < count && attempt < max_attempts) {
    const int nb = std::min(batch, max_attempts - attempt);
    std::vector<Candidate> cands(nb);
    parallel_for(nb, [&](std::size_t k) { cands[k] = make(attempt + static_cast<int>(k)); });
    for (int k = 0; k < nb && static_cast<int>(out.directions.size()) < count; ++k) {
      ++out.attempts;
      if (cands[k].status == 1)
        ++out.rejected_derivative;
      else if (cands[k].status == 2)
        ++out.rejected_alpha;
      else
        out.directions.push_back(std::move(cands[k].h));
    }
    attempt += nb;
  }
  out.exhausted = static_cast<int>(out.directions.size()) < count;
  return out;
}

TangentDirection swap_direction(const std::vector<const VectorMap*>& q_star,
                                const FieldSet& fields,
                                int z)
{
  if (q_star.size() != 2 || fields.treatments() != 2)
    throw Error(ErrorKind::dimension_error, "the swap direction is for two treatments");
  const ReferenceDomain& dom = q_star[0]->domain();
  const int p = dom.dim();
  const Vec c = dom.center();
  double a[2];
  for (int d = 0; d < 2; ++d) {
    const Mat J = q_star[d]->jacobian(c);
    a[d] = fields.at(d, z).share() * J.inverse()(0, 0);
  }
  double w0 = a[1], w1 = a[0];
  const double top = std::max(w0, w1);
  if (!(top > 0))
    throw Error(ErrorKind::no_directions, "swap direction needs positive shares");
  w0 /= top;
  w1 /= top;
  TangentDirection h;
  h.fields.push_back(std::make_shared<SineField>(p, 0, w0));
  h.fields.push_back(std::make_shared<SineField>(p, 0, -w1));
  return h;
}

ProbeResult full_rank_probe(const std::vector<const VectorMap*>& q_star,
                            const FieldSet& fields,
                            std::shared_ptr<const QuadratureGrid> grid,
                            const std::vector<TangentDirection>& directions)
{
  if (directions.empty())
    throw Error(ErrorKind::no_directions, "full-rank probe needs at least one direction");
  ProbeResult out;
  out.values.resize(directions.size());
  const int nz = fields.instruments();
  parallel_for(directions.size(), [&](std::size_t k) {
    double s = 0.0;
    for (int z = 0; z < nz; ++z)
      s += tv_norm(phi_prime(q_star, directions[k], z, fields, grid));
    out.values[k] = s;
  });
  out.min_value = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < out.values.size(); ++k)
    if (out.values[k] < out.min_value) {
      out.min_value = out.values[k];
      out.argmin = static_cast<int>(k);
    }
  return out;
}

ConormalReport conormal_check(const VectorMap& map, int resolution)
{
  const ReferenceDomain& dom = map.domain();
  const int p = dom.dim();
  const QuadratureGrid g = build_grid(dom, 60);
  Vec num = Vec::Zero(p);
  double den = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const Vec u = g.node(i);
    const double w = g.weights(i) * map.jacobian(u).determinant();
    num += w * map.value(u);
    den += w;
  }
  const Vec bary = num / den;
  const Mat lat = sup_lattice(dom, resolution);
  ConormalReport rep;
  rep.min_inner = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < lat.cols(); ++k) {
    const Vec u = lat.col(k);
    if (dom.boundary_distance(u) > 1e-12)
      continue;
    if (dom.kind() == DomainKind::unit_cube) {
      int active = 0;
      for (int i = 0; i < p; ++i)
        active += u(i) < 1e-12 || u(i) > 1.0 - 1e-12;
      if (active > 1)
        continue; // corners have no unique normal
    }
    const Vec n = dom.outward_normal(u);
    const Vec v = map.jacobian(u).ldlt().solve(n);
    rep.min_inner = std::min(rep.min_inner, v.dot(map.value(u) - bary));
    ++rep.points;
  }
  rep.pass = rep.points > 0 && rep.min_inner >= 0;
  return rep;
}

void write_measure_csv(const std::string& path, const SignedGridMeasure& m)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::io_error, "cannot write " + path);
  const QuadratureGrid& g = *m.grid;
  out << std::setprecision(17);
  for (int i = 0; i < g.dim(); ++i)
    out << 'u' << i + 1 << ',';
  out << "weight,density\n";
  for (int k = 0; k < g.size(); ++k) {
    for (int i = 0; i < g.dim(); ++i)
      out << g.nodes(i, k) << ',';
    out << g.weights(k) << ',' << m.density(k) << '\n';
  }
}

} // namespace ivmqr
