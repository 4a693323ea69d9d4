#include "decompart/linear.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

namespace decompart {

namespace {

using boost::math::quadrature::gauss_kronrod;

// Adaptive Gauss-Kronrod 15 over vector integrands (interval subdivision on
// the summed entrywise error).
void gk15_vector(const std::function<VectorXd(double)>& f, double a, double b, double tol,
                 int depth, VectorXd& acc) {
  static const double xk[8] = {0.0,
                               0.2077849550078985,
                               0.4058451513773972,
                               0.5860872354676911,
                               0.7415311855993945,
                               0.8648644233597691,
                               0.9491079123427585,
                               0.9914553711208126};
  static const double wk[8] = {0.2094821410847278, 0.2044329400752989, 0.1903505780647854,
                               0.1690047266392679, 0.1406532597155259, 0.1047900103222502,
                               0.0630920926299785, 0.0229353220105292};
  static const double wg[4] = {0.4179591836734694, 0.3818300505051189, 0.2797053914892767,
                               0.1294849661688697};

  double c = 0.5 * (a + b), hw = 0.5 * (b - a);
  VectorXd fc = f(c);
  VectorXd k = wk[0] * fc;
  VectorXd g = wg[0] * fc;
  for (int i = 1; i < 8; ++i) {
    VectorXd lo = f(c - hw * xk[i]);
    VectorXd hi = f(c + hw * xk[i]);
    k += wk[i] * (lo + hi);
    if (i % 2 == 0) g += wg[i / 2] * (lo + hi);
  }
  k *= hw;
  g *= hw;
  double err = (k - g).cwiseAbs().sum();
  if (err <= tol || depth >= 28) {
    if (depth >= 28 && err > 100.0 * tol)
      throw QuadratureNonconvergence("vector quadrature failed to converge");
    acc += k;
    return;
  }
  gk15_vector(f, a, c, 0.5 * tol, depth + 1, acc);
  gk15_vector(f, c, b, 0.5 * tol, depth + 1, acc);
}

VectorXd integrate_vector(const std::function<VectorXd(double)>& f, double a, double b, double tol,
                          int dim) {
  VectorXd acc = VectorXd::Zero(dim);
  if (b > a) gk15_vector(f, a, b, tol, 0, acc);
  return acc;
}

// exp(dt*A) evaluator with the spectral factorization done once
std::function<MatrixXd(double)> make_propagator(const MatrixXd& A) {
  const int n = static_cast<int>(A.rows());
  Eigen::EigenSolver<MatrixXd> es(A);
  if (es.info() == Eigen::Success) {
    Eigen::MatrixXcd U = es.eigenvectors();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(U);
    double smin = svd.singularValues().minCoeff();
    double smax = svd.singularValues().maxCoeff();
    if (smin > 0.0 && smax / smin < 1e8) {
      Eigen::VectorXcd lam = es.eigenvalues();
      Eigen::MatrixXcd Uinv = U.colPivHouseholderQr().solve(Eigen::MatrixXcd::Identity(n, n));
      return [U, lam, Uinv](double dt) -> MatrixXd {
        Eigen::MatrixXcd V = U * (lam.array() * dt).exp().matrix().asDiagonal() * Uinv;
        return V.real();
      };
    }
  }
  MatrixXd Acopy = A;
  return [Acopy](double dt) -> MatrixXd { return MatrixXd(dt * Acopy).exp(); };
}

}  // namespace

LinearModel LinearModel::from_model(const CompartmentalModel& model) {
  using Kind = LinearityTag::Kind;
  const int n = model.n();
  LinearModel lm;
  lm.A = MatrixXd::Zero(n, n);
  lm.x0 = model.x0();
  lm.z.reserve(static_cast<std::size_t>(n));

  for (int j = 0; j < n; ++j) {
    double outflow = 0.0;
    for (int i = 0; i < n; ++i) {
      const Expr& e = model.flow(i, j);
      if (e.is_zero_constant()) continue;
      auto tag = e.classify_linearity(ExprRole::flow(i + 1, j + 1));
      if (tag.kind != Kind::LinearInDonor)
        throw SchemaError("flow (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                          ") is not linear in its donor");
      lm.A(i, j) += tag.coeff;
      outflow += tag.coeff;
    }
    if (!model.output(j).is_zero_constant()) {
      auto tag = model.output(j).classify_linearity(ExprRole::output(j + 1));
      if (tag.kind != Kind::LinearInDonor)
        throw SchemaError("output " + std::to_string(j + 1) + " is not linear in its donor");
      outflow += tag.coeff;
    }
    lm.A(j, j) -= outflow;
    auto ztag = model.input(j).classify_linearity(ExprRole::input());
    if (ztag.kind != Kind::ConstantInput && ztag.kind != Kind::TimeOnlyInput)
      throw SchemaError("input " + std::to_string(j + 1) + " is not constant or time-only");
    lm.z.push_back(model.input(j));
  }
  return lm;
}

VectorXd LinearModel::z_at(double t) const {
  VectorXd v(static_cast<int>(z.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = z[static_cast<std::size_t>(i)].eval(t, {});
  return v;
}

bool LinearModel::constant_input() const {
  for (const Expr& e : z)
    if (e.classify_linearity(ExprRole::input()).kind != LinearityTag::Kind::ConstantInput)
      return false;
  return true;
}

MatrixXd fundamental_matrix(const MatrixXd& A, double dt) {
  const int n = static_cast<int>(A.rows());
  if (dt == 0.0 || A.isZero(0.0)) return MatrixXd::Identity(n, n);
  return make_propagator(A)(dt);
}

LinearSolution solve_linear(const LinearModel& lm, const std::vector<double>& t_samples, double t0,
                            double quad_tol) {
  const int n = static_cast<int>(lm.A.rows());
  LinearSolution sol;
  sol.times = t_samples;
  MatrixXd X0 = lm.x0.asDiagonal();
  auto expA = make_propagator(lm.A);

  bool const_z = lm.constant_input();
  bool invertible = false;
  Eigen::PartialPivLU<MatrixXd> lu;
  VectorXd zc;
  if (const_z) {
    lu.compute(lm.A);
    invertible = std::abs(lu.determinant()) > 1e-300;
    zc = lm.z_at(t0);
  }

  for (double t : t_samples) {
    MatrixXd V = t == t0 ? MatrixXd::Identity(n, n) : expA(t - t0);
    MatrixXd Xinit = V * X0;
    MatrixXd X(n, n);
    if (const_z && invertible) {
      // X(t) = (exp((t-t0)A) - I) A^-1 Z
      X = (V - MatrixXd::Identity(n, n)) * lu.solve(MatrixXd(zc.asDiagonal()));
    } else {
      // column k: integral of exp((t-s)A) e_k z_k(s) ds
      for (int k = 0; k < n; ++k) {
        const Expr& zk = lm.z[static_cast<std::size_t>(k)];
        if (zk.is_zero_constant()) {
          X.col(k).setZero();
          continue;
        }
        auto integrand = [&](double s) -> VectorXd {
          return expA(t - s).col(k) * zk.eval(s, {});
        };
        X.col(k) = integrate_vector(integrand, t0, t, quad_tol, n);
      }
    }
    sol.x.push_back(Xinit.rowwise().sum() + X.rowwise().sum());
    sol.X.push_back(std::move(X));
    sol.Xinit.push_back(std::move(Xinit));
  }
  return sol;
}

double analytic_transient_storage(const std::function<double(double)>& r_inv,
                                  const std::function<double(double)>& f_in, double t1, double t,
                                  double tol) {
  if (t <= t1) return 0.0;
  using quad = gauss_kronrod<double, 15>;
  auto outer = [&](double s) {
    double decay;
    double err = 0.0;
    decay = quad::integrate(r_inv, s, t, 12, tol, &err);
    if (!(std::isfinite(decay))) throw QuadratureNonconvergence("inner decay integral diverged");
    return std::exp(-decay) * f_in(s);
  };
  double err = 0.0;
  double val = quad::integrate(outer, t1, t, 12, tol, &err);
  if (!std::isfinite(val) || err > std::max(1e3 * tol, 1e-6 * std::abs(val)))
    throw QuadratureNonconvergence("transient storage quadrature did not converge");
  return val;
}

}  // namespace decompart
