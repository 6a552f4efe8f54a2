#include "tapkit/qp.hpp"

#include "tapkit/error.hpp"
#include "tapkit/network.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace tapkit {

namespace {

using Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

double max_abs(const SparseMatrix& m) {
  double v = 0.0;
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) v = std::max(v, std::abs(it.value()));
  }
  return v;
}

VectorXd row_max_abs(const SparseMatrix& m) {
  VectorXd r = VectorXd::Zero(m.rows());
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) r[it.row()] = std::max(r[it.row()], std::abs(it.value()));
  }
  return r;
}

// Largest alpha in (0, 1] keeping v + alpha dv >= 0.
double max_step(const VectorXd& v, const VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  }
  return a;
}

void check_dimensions(const QuadProgram& p) {
  const Eigen::Index n = p.q.size();
  auto fail = [](const std::string& what) { throw DataError("quadratic program: " + what); };
  if (p.Q.rows() != n || p.Q.cols() != n) fail("Q must be n x n");
  if (p.A_eq.rows() != p.b_eq.size() || (p.A_eq.rows() > 0 && p.A_eq.cols() != n)) fail("A_eq/b_eq mismatch");
  if (p.A_in.rows() != p.b_in.size() || (p.A_in.rows() > 0 && p.A_in.cols() != n)) fail("A_in/b_in mismatch");
  if (p.lower.size() != 0 && p.lower.size() != n) fail("lower bound has wrong length");
  if (p.upper.size() != 0 && p.upper.size() != n) fail("upper bound has wrong length");
  if (!p.q.allFinite() || !p.b_eq.allFinite() || !p.b_in.allFinite()) fail("non-finite data");
  const SparseMatrix asym = SparseMatrix(p.Q.transpose()) - p.Q;
  if (max_abs(asym) > 1e-12 * std::max(1.0, max_abs(p.Q))) fail("Q is not symmetric");
  for (Eigen::Index j = 0; j < p.lower.size(); ++j) {
    if (p.upper.size() && p.lower[j] > p.upper[j]) fail("lower bound exceeds upper bound");
  }
}

// Smallest pivot of an LDL' factorization of Q + shift I; negative means
// Q + shift I is indefinite.
double min_pivot(const SparseMatrix& Q, double shift) {
  const Eigen::Index n = Q.rows();
  if (n == 0) return 0.0;
  SparseMatrix I(n, n);
  I.setIdentity();
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(SparseMatrix(Q + shift * I));
  if (ldlt.info() != Eigen::Success) return -1.0;
  return ldlt.vectorD().minCoeff();
}

// The program after folding bounds into inequality rows and equilibrating:
// with z = D zs, minimize c (1/2 zs'DQD zs + q'D zs) s.t. Ea A D zs = Ea b,
// Eg G D zs >= Eg h.
struct Scaled {
  SparseMatrix Q;
  VectorXd q;
  SparseMatrix A;
  VectorXd b;
  SparseMatrix G;
  VectorXd h;
  VectorXd d_scale;  // column factors: z = d_scale .* zs
  VectorXd a_scale;  // row factors of A
  VectorXd g_scale;  // row factors of G
  double cost_scale = 1.0;
  Eigen::Index n_in = 0;
  std::vector<Eigen::Index> lower_index;  // variable of each lower-bound row
  std::vector<Eigen::Index> upper_index;
};

Scaled scale_program(const QuadProgram& p) {
  Scaled s;
  const Eigen::Index n = p.q.size();
  s.n_in = p.A_in.rows();
  for (Eigen::Index j = 0; j < p.lower.size(); ++j) {
    if (std::isfinite(p.lower[j])) s.lower_index.push_back(j);
  }
  for (Eigen::Index j = 0; j < p.upper.size(); ++j) {
    if (std::isfinite(p.upper[j])) s.upper_index.push_back(j);
  }
  const auto n_lo = static_cast<Eigen::Index>(s.lower_index.size());
  const auto n_up = static_cast<Eigen::Index>(s.upper_index.size());
  const Eigen::Index mg = s.n_in + n_lo + n_up;

  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(p.A_in.nonZeros() + n_lo + n_up));
  for (int k = 0; k < p.A_in.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(p.A_in, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  }
  s.h.resize(mg);
  s.h.head(s.n_in) = p.b_in;
  for (Eigen::Index i = 0; i < n_lo; ++i) {
    trip.emplace_back(s.n_in + i, s.lower_index[i], 1.0);
    s.h[s.n_in + i] = p.lower[s.lower_index[i]];
  }
  for (Eigen::Index i = 0; i < n_up; ++i) {
    trip.emplace_back(s.n_in + n_lo + i, s.upper_index[i], -1.0);
    s.h[s.n_in + n_lo + i] = -p.upper[s.upper_index[i]];
  }
  s.G.resize(mg, n);
  s.G.setFromTriplets(trip.begin(), trip.end());

  // Ruiz equilibration: z = D zs, rows of A and G scaled by Ea and Eg, until
  // every row and column of the KKT matrix has max entry near one.
  SparseMatrix A = p.A_eq;
  if (A.rows() == 0) A.resize(0, n);
  SparseMatrix G = s.G;
  SparseMatrix Q = p.Q;
  s.d_scale = VectorXd::Ones(n);
  s.a_scale = VectorXd::Ones(A.rows());
  s.g_scale = VectorXd::Ones(mg);
  for (int pass = 0; pass < 20; ++pass) {
    VectorXd col = VectorXd::Zero(n);
    auto columns = [&col](const SparseMatrix& m) {
      for (int k = 0; k < m.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(m, k); it; ++it) col[k] = std::max(col[k], std::abs(it.value()));
      }
    };
    columns(Q);
    columns(A);
    columns(G);
    const VectorXd ra = row_max_abs(A);
    const VectorXd rg = row_max_abs(G);
    auto factor = [](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 1.0; };
    const VectorXd dc = col.unaryExpr(factor);
    const VectorXd da = ra.unaryExpr(factor);
    const VectorXd dg = rg.unaryExpr(factor);
    s.d_scale = s.d_scale.cwiseProduct(dc);
    s.a_scale = s.a_scale.cwiseProduct(da);
    s.g_scale = s.g_scale.cwiseProduct(dg);
    Q = dc.asDiagonal() * Q * dc.asDiagonal();
    A = da.asDiagonal() * A * dc.asDiagonal();
    G = dg.asDiagonal() * G * dc.asDiagonal();
    double spread = 0.0;
    for (const VectorXd* v : std::initializer_list<const VectorXd*>{&col, &ra, &rg}) {
      for (double x : *v) {
        if (x > 0.0) spread = std::max(spread, std::abs(1.0 - x));
      }
    }
    if (spread < 1e-2) break;
  }
  s.A = A;
  s.b = s.a_scale.cwiseProduct(p.b_eq);
  s.G = G;
  s.h = s.g_scale.cwiseProduct(s.h);
  const VectorXd q = s.d_scale.cwiseProduct(p.q);

  s.cost_scale = 1.0 / std::max({1.0, max_abs(Q), inf_norm(q)});
  s.Q = s.cost_scale * Q;
  s.q = s.cost_scale * q;
  return s;
}

// Newton systems in augmented form. Sparse inequality rows are folded into
// H = Q + G_s' W_s G_s; dense rows (which would fill H) stay as extra
// unknowns u = W_d G_d dz with diagonal -1/w_d, giving the quasidefinite
//   [H + rho I, A', G_d'; A, -delta I, 0; G_d, 0, -(1/w_d + delta) I].
class KktSolver {
 public:
  KktSolver(const Scaled& s, double rho, double delta) : s_(s), rho_(rho), delta_(delta) {
    n_ = s.Q.rows();
    m_ = s.A.rows();
    At_ = s.A.transpose();
    const SparseMatrix Gr = s.G;  // column-major; count entries per row
    std::vector<Eigen::Index> count(static_cast<std::size_t>(Gr.rows()), 0);
    for (int k = 0; k < Gr.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(Gr, k); it; ++it) ++count[it.row()];
    }
    const Eigen::Index threshold = std::max<Eigen::Index>(50, n_ / 10);
    std::vector<Eigen::Index> slot(count.size(), -1);
    for (std::size_t i = 0; i < count.size(); ++i) {
      if (count[i] > threshold) {
        slot[i] = static_cast<Eigen::Index>(dense_.size());
        dense_.push_back(static_cast<Eigen::Index>(i));
      }
    }
    d_ = static_cast<Eigen::Index>(dense_.size());
    std::vector<Triplet> sp;
    std::vector<Triplet> dn;
    for (int k = 0; k < Gr.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(Gr, k); it; ++it) {
        if (slot[it.row()] >= 0) {
          dn.emplace_back(slot[it.row()], it.col(), it.value());
        } else {
          sp.emplace_back(it.row(), it.col(), it.value());
        }
      }
    }
    Gs_.resize(Gr.rows(), n_);
    Gs_.setFromTriplets(sp.begin(), sp.end());
    Gst_ = Gs_.transpose();
    Gd_.resize(d_, n_);
    Gd_.setFromTriplets(dn.begin(), dn.end());
    Gdt_ = Gd_.transpose();
  }

  bool factor(const VectorXd& w) {
    VectorXd ws = w;
    wd_.resize(d_);
    for (Eigen::Index j = 0; j < d_; ++j) {
      wd_[j] = std::max(w[dense_[j]], 1e-20);
      ws[dense_[j]] = 0.0;
    }
    H_ = s_.Q + SparseMatrix(Gst_ * ws.asDiagonal() * Gs_);
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(H_.nonZeros() + s_.A.nonZeros() + Gd_.nonZeros() + n_ + m_ + d_));
    for (int k = 0; k < H_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(H_, k); it; ++it) {
        if (it.row() >= it.col()) trip.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (Eigen::Index j = 0; j < n_; ++j) trip.emplace_back(j, j, rho_);
    for (int k = 0; k < s_.A.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(s_.A, k); it; ++it) trip.emplace_back(n_ + it.row(), it.col(), it.value());
    }
    for (Eigen::Index i = 0; i < m_; ++i) trip.emplace_back(n_ + i, n_ + i, -delta_);
    for (int k = 0; k < Gd_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(Gd_, k); it; ++it) {
        trip.emplace_back(n_ + m_ + it.row(), it.col(), it.value());
      }
    }
    for (Eigen::Index j = 0; j < d_; ++j) trip.emplace_back(n_ + m_ + j, n_ + m_ + j, -(1.0 / wd_[j] + delta_));
    const Eigen::Index dim = n_ + m_ + d_;
    SparseMatrix K(dim, dim);
    K.setFromTriplets(trip.begin(), trip.end());
    if (!analyzed_) {
      ldlt_.analyzePattern(K);
      analyzed_ = true;
    }
    ldlt_.factorize(K);
    return ldlt_.info() == Eigen::Success;
  }

  // Solves [H, A'; A, 0] (dz, v) = (r1, r2) through the augmented system,
  // refining against the unregularized matrix.
  VectorXd solve(const VectorXd& rhs_small) const {
    VectorXd rhs = VectorXd::Zero(n_ + m_ + d_);
    rhs.head(n_ + m_) = rhs_small;
    VectorXd u = ldlt_.solve(rhs);
    for (int k = 0; k < 10; ++k) {
      const VectorXd r = rhs - apply(u);
      if (inf_norm(r) <= 1e-14 * (1.0 + inf_norm(rhs))) break;
      u += ldlt_.solve(r);
    }
    return u.head(n_ + m_);
  }

 private:
  VectorXd apply(const VectorXd& u) const {
    VectorXd out(n_ + m_ + d_);
    const auto z = u.head(n_);
    const auto v = u.segment(n_, m_);
    const auto e = u.tail(d_);
    out.head(n_) = H_ * z + At_ * v + Gdt_ * e;
    out.segment(n_, m_) = s_.A * z;
    out.tail(d_) = Gd_ * z - e.cwiseQuotient(wd_);
    return out;
  }

  const Scaled& s_;
  double rho_;
  double delta_;
  Eigen::Index n_ = 0;
  Eigen::Index m_ = 0;
  Eigen::Index d_ = 0;
  std::vector<Eigen::Index> dense_;
  SparseMatrix At_;
  SparseMatrix Gs_;
  SparseMatrix Gst_;
  SparseMatrix Gd_;
  SparseMatrix Gdt_;
  VectorXd wd_;
  SparseMatrix H_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analyzed_ = false;
};

// Maps scaled iterate (z, y, lambda) back to the original program's multipliers.
void unscale(const Scaled& s, const VectorXd& z, const VectorXd& y, const VectorXd& lambda, QpResult& out,
             Eigen::Index n) {
  out.z = s.d_scale.cwiseProduct(z);
  out.y_eq = s.a_scale.cwiseProduct(y) / s.cost_scale;
  const VectorXd l = s.g_scale.cwiseProduct(lambda) / s.cost_scale;
  out.y_in = l.head(s.n_in);
  out.y_lower = VectorXd::Zero(n);
  out.y_upper = VectorXd::Zero(n);
  const auto n_lo = static_cast<Eigen::Index>(s.lower_index.size());
  for (Eigen::Index i = 0; i < n_lo; ++i) out.y_lower[s.lower_index[i]] = l[s.n_in + i];
  for (std::size_t i = 0; i < s.upper_index.size(); ++i) {
    out.y_upper[s.upper_index[i]] = l[s.n_in + n_lo + static_cast<Eigen::Index>(i)];
  }
}


// Solves the KKT equations with the rows the interior point marks active
// (lambda > slack) held as equalities and the rest dropped. Writes the unscaled result into out; false when the system cannot
// be factored.
bool polish(const Scaled& s, const VectorXd& z0, const VectorXd& y0, const VectorXd& slack, const VectorXd& lambda,
            QpResult& out, Eigen::Index n) {
  const Eigen::Index m = s.A.rows();
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < slack.size(); ++i) {
    if (lambda[i] > slack[i]) active.push_back(i);
  }
  const auto na = static_cast<Eigen::Index>(active.size());
  const Eigen::Index dim = n + m + na;
  const double reg = 1e-8;
  std::vector<Triplet> trip;
  std::vector<Triplet> exact;
  auto add = [&](Eigen::Index r, Eigen::Index c, double v) {
    trip.emplace_back(r, c, v);
    exact.emplace_back(r, c, v);
    if (r != c) exact.emplace_back(c, r, v);
  };
  for (int k = 0; k < s.Q.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(s.Q, k); it; ++it) {
      if (it.row() >= it.col()) add(it.row(), it.col(), it.value());
    }
  }
  for (int k = 0; k < s.A.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(s.A, k); it; ++it) add(n + it.row(), it.col(), it.value());
  }
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(s.G.rows()), -1);
  for (Eigen::Index j = 0; j < na; ++j) slot[static_cast<std::size_t>(active[j])] = j;
  for (int k = 0; k < s.G.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(s.G, k); it; ++it) {
      const Eigen::Index j = slot[static_cast<std::size_t>(it.row())];
      if (j >= 0) add(n + m + j, it.col(), it.value());
    }
  }
  for (Eigen::Index i = 0; i < dim; ++i) trip.emplace_back(i, i, i < n ? reg : -reg);
  SparseMatrix K(dim, dim);
  K.setFromTriplets(trip.begin(), trip.end());
  SparseMatrix full(dim, dim);
  full.setFromTriplets(exact.begin(), exact.end());
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(K);
  if (ldlt.info() != Eigen::Success) return false;

  VectorXd rhs(dim);
  rhs.head(n) = -s.q;
  rhs.segment(n, m) = s.b;
  for (Eigen::Index j = 0; j < na; ++j) rhs[n + m + j] = s.h[active[j]];
  // The first solve is regularized toward the interior point, which fixes
  // directions the active set leaves free; refinement then targets the
  // exact system.
  VectorXd anchor(dim);
  anchor.head(n) = reg * z0;
  anchor.segment(n, m) = reg * y0;  // unknowns are -y and -lambda
  for (Eigen::Index j = 0; j < na; ++j) anchor[n + m + j] = reg * lambda[active[j]];
  VectorXd u = ldlt.solve(rhs + anchor);
  for (int k = 0; k < 10; ++k) {
    const VectorXd r = rhs - full.selfadjointView<Eigen::Lower>() * u;
    if (inf_norm(r) <= 1e-15 * (1.0 + inf_norm(rhs))) break;
    u += ldlt.solve(r);
  }
  if (!u.allFinite()) return false;
  VectorXd lam = VectorXd::Zero(s.G.rows());
  for (Eigen::Index j = 0; j < na; ++j) lam[active[j]] = -u[n + m + j];
  unscale(s, u.head(n), -u.segment(n, m), lam, out, n);
  return true;
}

}  // namespace

QuadProgram QuadProgram::unconstrained(std::size_t n) {
  QuadProgram p;
  const auto m = static_cast<Eigen::Index>(n);
  p.Q.resize(m, m);
  p.q = VectorXd::Zero(m);
  p.A_eq.resize(0, m);
  p.A_in.resize(0, m);
  return p;
}

double QuadProgram::objective(const VectorXd& z) const { return 0.5 * z.dot(Q * z) + q.dot(z); }

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::Unbounded: return "unbounded";
    case QpStatus::MaxIterations: return "max_iterations";
  }
  return "unknown";
}

double KktResiduals::max() const {
  return std::max({stationarity, primal_equality, primal_inequality, dual_feasibility, complementarity});
}

KktResiduals kkt_residuals(const QuadProgram& p, const QpResult& r) {
  KktResiduals k;
  const Eigen::Index n = p.q.size();
  VectorXd grad = p.Q * r.z + p.q;
  if (p.A_eq.rows()) grad -= p.A_eq.transpose() * r.y_eq;
  if (p.A_in.rows()) grad -= p.A_in.transpose() * r.y_in;
  if (r.y_lower.size()) grad -= r.y_lower;
  if (r.y_upper.size()) grad += r.y_upper;
  k.stationarity = inf_norm(grad);
  if (p.A_eq.rows()) k.primal_equality = inf_norm(p.A_eq * r.z - p.b_eq);
  auto inequality = [&k](double slack, double mult) {
    k.primal_inequality = std::max(k.primal_inequality, -slack);
    k.dual_feasibility = std::max(k.dual_feasibility, -mult);
    k.complementarity = std::max(k.complementarity, std::abs(mult * slack));
    k.duality_gap += std::abs(mult * slack);
  };
  if (p.A_in.rows()) {
    const VectorXd slack = p.A_in * r.z - p.b_in;
    for (Eigen::Index i = 0; i < slack.size(); ++i) inequality(slack[i], r.y_in[i]);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (p.lower.size() && std::isfinite(p.lower[j])) inequality(r.z[j] - p.lower[j], r.y_lower[j]);
    if (p.upper.size() && std::isfinite(p.upper[j])) inequality(p.upper[j] - r.z[j], r.y_upper[j]);
  }
  return k;
}

QpResult solve_qp(const QuadProgram& p, const QpOptions& options) {
  check_dimensions(p);
  QpResult out;
  const Eigen::Index n = p.q.size();
  const double target = options.tolerance * (1.0 + inf_norm(p.q));

  // PSD check: Q must factor with nonnegative pivots. Failing that, add
  // mu I and accept if the shifted matrix is PSD up to a 1e-8 diagonal shift.
  SparseMatrix Q = p.Q;
  const double qscale = std::max(1.0, max_abs(p.Q));
  if (n > 0 && p.Q.nonZeros() > 0 && min_pivot(Q, 0.0) < 0.0) {
    const double mu = 1e-10 * std::max(p.Q.diagonal().sum(), 0.0) / static_cast<double>(n);
    SparseMatrix I(n, n);
    I.setIdentity();
    Q = SparseMatrix(p.Q + mu * I);
    if (min_pivot(Q, 1e-8 * qscale) < 0.0) throw DataError("quadratic program: Q is not positive semidefinite");
    out.warnings.push_back("Q was numerically indefinite; added " + format_double(mu) + " * I");
  }
  QuadProgram work = p;
  work.Q = Q;
  const Scaled s = scale_program(work);
  const Eigen::Index m = s.A.rows();
  const Eigen::Index mg = s.G.rows();

  KktSolver kkt(s, 1e-12, 1e-12);
  VectorXd z = VectorXd::Zero(n);
  VectorXd y = VectorXd::Zero(m);
  VectorXd slack = VectorXd::Ones(mg);
  VectorXd lambda = VectorXd::Ones(mg);

  // Starting point: least-squares fit of the constraints plus the objective.
  {
    if (!kkt.factor(VectorXd::Ones(mg))) throw SolverError("quadratic program: KKT factorization failed");
    VectorXd rhs(n + m);
    rhs.head(n) = -s.q + s.G.transpose() * s.h;
    rhs.tail(m) = s.b;
    const VectorXd u = kkt.solve(rhs);
    z = u.head(n);
    y = -u.tail(m);
    // With W = I the solve gives lambda = -(Gz - h) satisfying stationarity;
    // start slack and lambda from that one vector, shifted to be positive.
    const VectorXd v = s.G * z - s.h;
    if (mg > 0) {
      const double ap = -v.minCoeff();
      const double ad = v.maxCoeff();
      slack = ap < 0.0 ? v : VectorXd(v.array() + 1.0 + ap);
      lambda = ad < 0.0 ? VectorXd(-v) : VectorXd(-v.array() + 1.0 + ad);
    }
  }

  const double big = 1e12;
  const SparseMatrix Gt = s.G.transpose();
  const SparseMatrix At = s.A.transpose();
  double best_primal = kInf;
  std::size_t stalled = 0;
  // Late iterations can lose accuracy once the scaling W is badly
  // conditioned; keep the best point seen and stop when it stops improving.
  QpResult best;
  VectorXd best_z;
  VectorXd best_y;
  VectorXd best_slack;
  VectorXd best_lambda;
  double best_residual = kInf;
  std::size_t since_best = 0;
  // Progress measure relative to the stopping targets; optimal at <= 1.
  auto measure = [&](QpResult& r) {
    r.residuals = kkt_residuals(work, r);
    const double gap_target = options.tolerance * (1.0 + std::abs(work.objective(r.z)));
    return std::max(r.residuals.max() / target, r.residuals.duality_gap / gap_target);
  };

  bool finished = false;
  for (std::size_t it = 0;; ++it) {
    out.iterations = it;
    unscale(s, z, y, lambda, out, n);
    const double residual = measure(out);
    if (residual <= 1.0) {
      out.status = QpStatus::Optimal;
      best_z = z;
      best_y = y;
      best_slack = slack;
      best_lambda = lambda;
      best_residual = residual;
      finished = true;
    } else if (residual < best_residual) {
      best_residual = residual;
      best = out;
      best_z = z;
      best_y = y;
      best_slack = slack;
      best_lambda = lambda;
      since_best = 0;
    } else if (std::isnan(residual) || (++since_best > 8 && best_residual < 1e4)) {
      finished = true;
    }
    if (!finished && it == options.max_iterations) finished = true;
    if (finished) {
      if (out.status != QpStatus::Optimal) {
        if (best_residual < kInf) out = best;
        out.status = QpStatus::MaxIterations;
      }
      // Interior points are accurate to about sqrt(tolerance); an active-set
      // solve usually lands on the exact optimum.
      if (best_residual < 1e4) {
        QpResult polished = out;
        if (polish(s, best_z, best_y, best_slack, best_lambda, polished, n)) {
          const double r = measure(polished);
          if (r <= std::max(best_residual, 1.0)) {
            polished.status = r <= 1.0 ? QpStatus::Optimal : out.status;
            out = std::move(polished);
          }
        }
      }
      break;
    }

    const VectorXd r_d = s.Q * z + s.q - At * y - Gt * lambda;
    const VectorXd r_p = s.A * z - s.b;
    const VectorXd r_g = s.G * z - slack - s.h;
    const double mu = mg ? slack.dot(lambda) / static_cast<double>(mg) : 0.0;

    // Divergence heuristics: exploding multipliers with persistent primal
    // infeasibility signal an empty feasible set; an exploding primal with a
    // decreasing objective signals unboundedness.
    const double primal = std::max(inf_norm(r_p), inf_norm(r_g));
    if (primal < 0.5 * best_primal) {
      best_primal = primal;
      stalled = 0;
    } else {
      ++stalled;
    }
    if ((inf_norm(y) > big || inf_norm(lambda) > big) && primal > 1e-6 && stalled > 5) {
      out.status = QpStatus::Infeasible;
      break;
    }
    if (inf_norm(z) > big * (1.0 + inf_norm(s.b) + inf_norm(s.h)) && primal <= 1e-6 * inf_norm(z)) {
      out.status = QpStatus::Unbounded;
      break;
    }

    const VectorXd w = lambda.cwiseQuotient(slack);
    if (!kkt.factor(w)) throw SolverError("quadratic program: KKT factorization failed");

    auto direction = [&](const VectorXd& r_c, VectorXd& dz, VectorXd& dy, VectorXd& ds, VectorXd& dl) {
      VectorXd rhs(n + m);
      rhs.head(n) = -r_d - Gt * (r_c.cwiseQuotient(slack) + w.cwiseProduct(r_g));
      rhs.tail(m) = -r_p;
      const VectorXd u = kkt.solve(rhs);
      dz = u.head(n);
      dy = -u.tail(m);
      ds = s.G * dz + r_g;
      dl = -(r_c + lambda.cwiseProduct(ds)).cwiseQuotient(slack);
    };

    VectorXd dz, dy, ds, dl;
    // Predictor (affine scaling).
    direction(slack.cwiseProduct(lambda), dz, dy, ds, dl);
    double alpha = std::min(max_step(slack, ds), max_step(lambda, dl));
    double sigma = 0.0;
    if (mg > 0) {
      const double mu_aff = (slack + alpha * ds).dot(lambda + alpha * dl) / static_cast<double>(mg);
      sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
      // Corrector with centering.
      const VectorXd r_c = slack.cwiseProduct(lambda) + ds.cwiseProduct(dl) - VectorXd::Constant(mg, sigma * mu);
      direction(r_c, dz, dy, ds, dl);
      alpha = std::min(1.0, 0.995 * std::min(max_step(slack, ds), max_step(lambda, dl)));
    }
    z += alpha * dz;
    y += alpha * dy;
    slack += alpha * ds;
    lambda += alpha * dl;
  }
  out.objective = p.objective(out.z);
  return out;
}

void require_optimal(const QpResult& result, const std::string& context) {
  if (result.optimal()) return;
  throw SolverError(context + ": quadratic program " + to_string(result.status) + " after " +
                    std::to_string(result.iterations) + " iterations (max KKT residual " +
                    format_double(result.residuals.max()) + ")");
}

}  // namespace tapkit
