#include "oracles.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

Instance random_instance(std::mt19937_64& rng, Index n, Index p, double noise) {
  std::normal_distribution<double> normal;
  Instance inst{Matrix(n, p), Vector(n)};
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) inst.X(i, j) = normal(rng);
  Vector beta = Vector::Zero(p);
  for (Index j = 0; j < std::min<Index>(p, 3); ++j) beta[j] = (j % 2 == 0 ? 1.5 : -1.0) / (1.0 + j);
  for (Index i = 0; i < n; ++i) inst.y[i] = 0.5 + inst.X.row(i).dot(beta) + noise * normal(rng);
  return inst;
}

double objective(bool l1, const Matrix& X, const Vector& y, double mu, const Vector& beta, double lambda) {
  double loss = 0.0;
  for (Index i = 0; i < X.rows(); ++i) {
    double fit = mu;
    for (Index j = 0; j < X.cols(); ++j) fit += X(i, j) * beta[j];
    const double r = y[i] - fit;
    loss += l1 ? std::abs(r) : 0.5 * r * r;
  }
  double pen = 0.0;
  for (Index j = 0; j < beta.size(); ++j) pen += std::abs(beta[j]);
  return loss + lambda * pen;
}

double group_objective(const Matrix& X, const Vector& y, double mu, const Vector& beta, double lambda1,
                       double lambda2, const std::vector<int>& groups) {
  double f = objective(false, X, y, mu, beta, lambda1);
  int q = 0;
  for (int g : groups) q = std::max(q, g + 1);
  std::vector<double> sq(static_cast<std::size_t>(q), 0.0);
  for (std::size_t j = 0; j < groups.size(); ++j) sq[static_cast<std::size_t>(groups[j])] += beta[j] * beta[j];
  for (double s : sq) f += lambda2 * std::sqrt(s);
  return f;
}

double difference_quotient(const std::function<double(double, const Vector&)>& f, double mu, const Vector& beta,
                           Index slot, double direction, double h) {
  Vector moved = beta;
  double mu_moved = mu;
  if (slot == 0) mu_moved += direction * h;
  else moved[slot - 1] += direction * h;
  return (f(mu_moved, moved) - f(mu, beta)) / h;
}

Solution l2_lasso_by_sign_patterns(const Matrix& X, const Vector& y, double lambda) {
  const Index n = X.rows();
  const Index p = X.cols();
  Solution best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<int> signs(static_cast<std::size_t>(p), -1);
  while (true) {
    std::vector<Index> act;
    for (Index j = 0; j < p; ++j) {
      if (signs[static_cast<std::size_t>(j)] != 0) act.push_back(j);
    }
    // Intercept eliminated by centering.
    const double ybar = y.mean();
    const Index a = static_cast<Index>(act.size());
    Matrix Xa(n, a);
    Vector s(a);
    for (Index c = 0; c < a; ++c) {
      const Index j = act[static_cast<std::size_t>(c)];
      Xa.col(c) = X.col(j).array() - X.col(j).mean();
      s[c] = signs[static_cast<std::size_t>(j)];
    }
    Vector beta = Vector::Zero(p);
    bool ok = true;
    if (a > 0) {
      const Matrix G = Xa.transpose() * Xa;
      Eigen::FullPivLU<Matrix> lu(G);
      if (lu.rank() < a) {
        ok = false;
      } else {
        const Vector b = lu.solve(Xa.transpose() * (y.array() - ybar).matrix() - lambda * s);
        for (Index c = 0; c < a; ++c) {
          if (b[c] * s[c] <= 0.0) ok = false;
          beta[act[static_cast<std::size_t>(c)]] = b[c];
        }
      }
    }
    if (ok) {
      const double mu = ybar - (X * beta).mean();
      const double f = objective(false, X, y, mu, beta, lambda);
      if (f < best.objective) best = {mu, beta, f};
    }
    Index j = 0;
    while (j < p && signs[static_cast<std::size_t>(j)] == 1) signs[static_cast<std::size_t>(j++)] = -1;
    if (j == p) break;
    ++signs[static_cast<std::size_t>(j)];
  }
  return best;
}

Solution l1_lasso_by_vertices(const Matrix& X, const Vector& y, double lambda) {
  const Index n = X.rows();
  const Index p = X.cols();
  const Index d = p + 1;
  const Index m = n + p;
  // Hyperplane rows a^t (mu, beta) = b.
  Matrix A = Matrix::Zero(m, d);
  Vector b = Vector::Zero(m);
  for (Index i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A.row(i).tail(p) = X.row(i);
    b[i] = y[i];
  }
  for (Index j = 0; j < p; ++j) A(n + j, 1 + j) = 1.0;

  Solution best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<Index> pick(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) pick[static_cast<std::size_t>(i)] = i;
  while (true) {
    Matrix S(d, d);
    Vector rhs(d);
    for (Index r = 0; r < d; ++r) {
      S.row(r) = A.row(pick[static_cast<std::size_t>(r)]);
      rhs[r] = b[pick[static_cast<std::size_t>(r)]];
    }
    Eigen::FullPivLU<Matrix> lu(S);
    if (lu.rank() == d) {
      const Vector v = lu.solve(rhs);
      const Vector beta = v.tail(p);
      const double f = objective(true, X, y, v[0], beta, lambda);
      if (f < best.objective) best = {v[0], beta, f};
    }
    Index k = d - 1;
    while (k >= 0 && pick[static_cast<std::size_t>(k)] == m - d + k) --k;
    if (k < 0) break;
    ++pick[static_cast<std::size_t>(k)];
    for (Index r = k + 1; r < d; ++r) pick[static_cast<std::size_t>(r)] = pick[static_cast<std::size_t>(r - 1)] + 1;
  }
  return best;
}

Solution ols(const Matrix& X, const Vector& y, const std::vector<Index>& columns) {
  const Index n = X.rows();
  const Index a = static_cast<Index>(columns.size());
  Matrix D(n, a + 1);
  D.col(0).setOnes();
  for (Index c = 0; c < a; ++c) D.col(c + 1) = X.col(columns[static_cast<std::size_t>(c)]);
  const Vector coef = (D.transpose() * D).ldlt().solve(D.transpose() * y);
  Solution s;
  s.mu = coef[0];
  s.beta = Vector::Zero(X.cols());
  for (Index c = 0; c < a; ++c) s.beta[columns[static_cast<std::size_t>(c)]] = coef[c + 1];
  s.objective = objective(false, X, y, s.mu, s.beta, 0.0);
  return s;
}

double weighted_median_scan(const std::vector<double>& z, const std::vector<double>& w) {
  double best_t = 0.0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (double t : z) {
    double cost = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) cost += w[i] * std::abs(z[i] - t);
    if (!std::isfinite(best_cost) || cost < best_cost - 1e-12 * std::max(1.0, best_cost) ||
        (std::abs(cost - best_cost) <= 1e-12 * std::max(1.0, best_cost) && t < best_t)) {
      best_cost = cost;
      best_t = t;
    }
  }
  return best_t;
}

double grid_argmin(const std::function<double(double)>& f, double a, double b, int points) {
  double best_t = a;
  double best = f(a);
  for (int i = 1; i < points; ++i) {
    const double t = a + (b - a) * i / (points - 1);
    const double v = f(t);
    if (v < best) {
      best = v;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace oracle
