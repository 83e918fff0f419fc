#include "shine/problems.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace shine {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow for large |t|
double log1pexp(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

double logistic_mean_loss(const Dataset& ds, const Vector& z) {
  double acc = 0.0;
  for (const SparseRow& row : ds.rows) acc += log1pexp(-row.label * row_dot(row, z));
  return acc / static_cast<double>(ds.rows.size());
}

Vector logistic_mean_grad(const Dataset& ds, const Vector& z) {
  Vector g(z.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(ds.rows.size());
  for (const SparseRow& row : ds.rows) {
    const double u = row_dot(row, z);
    const double s = sigmoid(-row.label * u);  // d/du log1pexp(-y u) = -y s
    row_axpy(-row.label * s * inv_n, row, g);
  }
  return g;
}

Vector logistic_mean_hvp(const Dataset& ds, const Vector& z, const Vector& v) {
  Vector out(v.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(ds.rows.size());
  for (const SparseRow& row : ds.rows) {
    const double u = row_dot(row, z);
    const double s = sigmoid(-row.label * u);
    const double curv = s * (1.0 - s);  // y^2 = 1
    row_axpy(curv * row_dot(row, v) * inv_n, row, out);
  }
  return out;
}

double nls_data_loss(const Dataset& ds, const Vector& z) {
  double acc = 0.0;
  for (const SparseRow& row : ds.rows) {
    const double y01 = row.label > 0 ? 1.0 : 0.0;
    const double r = y01 - sigmoid(row_dot(row, z));
    acc += 0.5 * r * r;
  }
  return acc;
}

Vector nls_data_grad(const Dataset& ds, const Vector& z) {
  Vector g(z.size(), 0.0);
  for (const SparseRow& row : ds.rows) {
    const double y01 = row.label > 0 ? 1.0 : 0.0;
    const double s = sigmoid(row_dot(row, z));
    row_axpy((s - y01) * s * (1.0 - s), row, g);
  }
  return g;
}

Vector nls_data_hvp(const Dataset& ds, const Vector& z, const Vector& v) {
  Vector out(v.size(), 0.0);
  for (const SparseRow& row : ds.rows) {
    const double y01 = row.label > 0 ? 1.0 : 0.0;
    const double s = sigmoid(row_dot(row, z));
    const double sp = s * (1.0 - s);
    const double spp = sp * (1.0 - 2.0 * s);
    const double curv = sp * sp + (s - y01) * spp;
    row_axpy(curv * row_dot(row, v), row, out);
  }
  return out;
}

int split_dim(const DataSplit& split) {
  return std::max({split.train.n_features, split.validation.n_features, split.test.n_features});
}

// Regularization strength and its derivative in theta from the parametrization.
struct RegCoef {
  double value;
  double dtheta;  // d value / d theta
};

RegCoef reg_coef(Parametrization par, const Vector& theta) {
  if (par == Parametrization::log) {
    const double c = std::exp(theta.at(0));
    return {c, c};
  }
  return {theta.at(0), 1.0};
}

}  // namespace

BilevelProblem make_l2_logreg(const DataSplit& split, Parametrization par) {
  if (split.train.rows.empty() || split.validation.rows.empty())
    throw EmptySplit("logistic regression needs nonempty train and validation sets");

  auto data = std::make_shared<const DataSplit>(split);
  BilevelProblem p;
  p.name = "l2-logreg(" + data->train.name + ")";
  p.dim = split_dim(*data);
  p.theta_dim = 1;
  p.symmetric_inner = true;
  p.log_parametrized = (par == Parametrization::log);
  p.theta0 = {par == Parametrization::log ? std::log(1e-2) : 1e-2};

  p.inner_objective = [data, par](const Vector& theta, const Vector& z) {
    const double c = reg_coef(par, theta).value;
    return logistic_mean_loss(data->train, z) + c * dot(z, z);
  };
  p.inner_residual = [data, par](const Vector& theta, const Vector& z) {
    const double c = reg_coef(par, theta).value;
    Vector g = logistic_mean_grad(data->train, z);
    axpy_in_place(2.0 * c, z, g);
    return g;
  };
  p.inner_jvp = [data, par](const Vector& theta, const Vector& z, const Vector& v) {
    const double c = reg_coef(par, theta).value;
    Vector h = logistic_mean_hvp(data->train, z, v);
    axpy_in_place(2.0 * c, v, h);
    return h;
  };
  p.inner_vjp = p.inner_jvp;  // symmetric Hessian
  p.dg_dtheta_action = [par](const Vector& theta, const Vector& z, const Vector& dtheta) {
    return scaled(z, 2.0 * reg_coef(par, theta).dtheta * dtheta.at(0));
  };
  p.dg_dtheta_adjoint = [par](const Vector& theta, const Vector& z, const Vector& w) {
    return Vector{2.0 * reg_coef(par, theta).dtheta * dot(w, z)};
  };
  p.outer_loss = [data](const Vector&, const Vector& z) {
    return logistic_mean_loss(data->validation, z);
  };
  p.outer_grad = [data](const Vector&, const Vector& z) {
    return logistic_mean_grad(data->validation, z);
  };
  p.train_loss = [data](const Vector&, const Vector& z) {
    return logistic_mean_loss(data->train, z);
  };
  p.test_loss = [data](const Vector&, const Vector& z) {
    return data->test.rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : logistic_mean_loss(data->test, z);
  };
  return p;
}

BilevelProblem make_nls(const DataSplit& split, Parametrization par) {
  if (split.train.rows.empty() || split.validation.rows.empty())
    throw EmptySplit("nonlinear least squares needs nonempty train and validation sets");

  auto data = std::make_shared<const DataSplit>(split);
  BilevelProblem p;
  p.name = "nls(" + data->train.name + ")";
  p.dim = split_dim(*data);
  p.theta_dim = 1;
  p.symmetric_inner = true;
  p.log_parametrized = (par == Parametrization::log);
  p.theta0 = {par == Parametrization::log ? std::log(1e-2) : 1e-2};

  p.inner_objective = [data, par](const Vector& theta, const Vector& z) {
    const double c = reg_coef(par, theta).value;
    return nls_data_loss(data->train, z) + 0.5 * c * dot(z, z);
  };
  p.inner_residual = [data, par](const Vector& theta, const Vector& z) {
    const double c = reg_coef(par, theta).value;
    Vector g = nls_data_grad(data->train, z);
    axpy_in_place(c, z, g);
    return g;
  };
  p.inner_jvp = [data, par](const Vector& theta, const Vector& z, const Vector& v) {
    const double c = reg_coef(par, theta).value;
    Vector h = nls_data_hvp(data->train, z, v);
    axpy_in_place(c, v, h);
    return h;
  };
  p.inner_vjp = p.inner_jvp;
  p.dg_dtheta_action = [par](const Vector& theta, const Vector& z, const Vector& dtheta) {
    return scaled(z, reg_coef(par, theta).dtheta * dtheta.at(0));
  };
  p.dg_dtheta_adjoint = [par](const Vector& theta, const Vector& z, const Vector& w) {
    return Vector{reg_coef(par, theta).dtheta * dot(w, z)};
  };
  p.outer_loss = [data](const Vector&, const Vector& z) {
    return nls_data_loss(data->validation, z);
  };
  p.outer_grad = [data](const Vector&, const Vector& z) {
    return nls_data_grad(data->validation, z);
  };
  p.train_loss = [data](const Vector&, const Vector& z) { return nls_data_loss(data->train, z); };
  p.test_loss = [data](const Vector&, const Vector& z) {
    return data->test.rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : nls_data_loss(data->test, z);
  };
  return p;
}

BilevelProblem make_quadratic_oracle(const Vector& a, double theta0, const Vector& target) {
  const Vector t = target.empty() ? zeros(a.size()) : target;
  if (t.size() != a.size()) throw DimensionMismatch("quadratic oracle: target size mismatch");

  BilevelProblem p;
  p.name = "quadratic-oracle";
  p.dim = static_cast<int>(a.size());
  p.theta_dim = 1;
  p.symmetric_inner = true;
  p.log_parametrized = false;
  p.theta0 = {theta0};

  p.inner_objective = [a](const Vector& theta, const Vector& z) {
    const Vector r = sub(z, a);
    return 0.5 * dot(r, r) + 0.5 * theta.at(0) * dot(z, z);
  };
  p.inner_residual = [a](const Vector& theta, const Vector& z) {
    Vector g = sub(z, a);
    axpy_in_place(theta.at(0), z, g);
    return g;
  };
  p.inner_jvp = [](const Vector& theta, const Vector&, const Vector& v) {
    return scaled(v, 1.0 + theta.at(0));
  };
  p.inner_vjp = p.inner_jvp;
  p.dg_dtheta_action = [](const Vector&, const Vector& z, const Vector& dtheta) {
    return scaled(z, dtheta.at(0));
  };
  p.dg_dtheta_adjoint = [](const Vector&, const Vector& z, const Vector& w) {
    return Vector{dot(w, z)};
  };
  p.outer_loss = [t](const Vector&, const Vector& z) {
    const Vector r = sub(z, t);
    return 0.5 * dot(r, r);
  };
  p.outer_grad = [t](const Vector&, const Vector& z) { return sub(z, t); };
  p.train_loss = p.inner_objective;
  p.test_loss = p.outer_loss;
  return p;
}

Vector quadratic_oracle_zstar(const Vector& a, double theta) {
  return scaled(a, 1.0 / (1.0 + theta));
}

double quadratic_oracle_hypergrad(const Vector& a, double theta, const Vector& target) {
  const Vector zs = quadratic_oracle_zstar(a, theta);
  const Vector t = target.empty() ? zeros(a.size()) : target;
  // dz*/dtheta = -a/(1+theta)^2 and dL/dtheta = (z* - target) . dz*/dtheta
  return -dot(sub(zs, t), a) / ((1.0 + theta) * (1.0 + theta));
}

}  // namespace shine
