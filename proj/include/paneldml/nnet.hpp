#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "paneldml/common.hpp"
#include "paneldml/learners.hpp"
#include "paneldml/rng.hpp"

namespace paneldml {

inline double celu(double v) { return v >= 0 ? v : std::expm1(v); }
inline double celu_grad(double v) { return v >= 0 ? 1.0 : std::exp(v); }

struct NNetConfig {
  int width = 32;
  int epochs = 1000;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double bn_eps = 1e-5;
};

inline std::vector<int> default_width_grid() { return {2, 4, 8, 16, 32, 64, 128, 256}; }

namespace detail {

// Adam moment buffers for one parameter block.
struct AdamBlock {
  Eigen::MatrixXd m, v;
  AdamBlock(Eigen::Index rows, Eigen::Index cols)
      : m(Eigen::MatrixXd::Zero(rows, cols)), v(Eigen::MatrixXd::Zero(rows, cols)) {}
  void step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, const NNetConfig& c,
            double bias1, double bias2) {
    m = c.beta1 * m + (1 - c.beta1) * grad;
    v.array() = c.beta2 * v.array() + (1 - c.beta2) * grad.array().square();
    param.array() -= c.lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + c.adam_eps);
  }
};

}  // namespace detail

// One hidden layer: standardize -> dense -> batch norm -> CELU -> linear top
// with year dummies. Batch statistics are frozen after training so the fitted
// network is a fixed C1 map of the raw inputs.
struct NNetModel {
  NNetConfig cfg;
  Eigen::VectorXd in_mean, in_sd;
  Eigen::MatrixXd W1;  // width x inputs
  Eigen::VectorXd bn_gamma, bn_beta;
  Eigen::VectorXd w2;
  double b2 = 0;
  Eigen::VectorXd year_coef;
  std::vector<std::string> year_levels;
  Eigen::VectorXd bn_mean, bn_var;  // frozen
  double train_mse = 0;
  int epochs_run = 0;

  Eigen::MatrixXd standardize(const Eigen::MatrixXd& X_raw) const {
    Eigen::MatrixXd Z = X_raw;
    Z.rowwise() -= in_mean.transpose();
    return Z * in_sd.cwiseInverse().asDiagonal();
  }

  // CELU arguments in frozen mode: rows x width
  Eigen::MatrixXd hidden_pre(const Eigen::MatrixXd& X_raw) const {
    Eigen::MatrixXd A = standardize(X_raw) * W1.transpose();
    A.rowwise() -= bn_mean.transpose();
    Eigen::VectorXd scale =
        (bn_gamma.array() * (bn_var.array() + cfg.bn_eps).rsqrt()).matrix();
    A = A * scale.asDiagonal();
    A.rowwise() += bn_beta.transpose();
    return A;
  }

  // gamma(x) without year effects
  Eigen::VectorXd predict(const Eigen::MatrixXd& X_raw) const {
    Eigen::MatrixXd A = hidden_pre(X_raw);
    Eigen::VectorXd out = Eigen::VectorXd::Constant(A.rows(), b2);
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      for (int k = 0; k < cfg.width; ++k) out[i] += w2[k] * celu(A(i, k));
    return out;
  }

  // d gamma / d x_j per row, in raw input units
  Eigen::MatrixXd input_gradient(const Eigen::MatrixXd& X_raw) const {
    Eigen::MatrixXd A = hidden_pre(X_raw);
    Eigen::ArrayXd scale = bn_gamma.array() * (bn_var.array() + cfg.bn_eps).rsqrt();
    Eigen::MatrixXd G(X_raw.rows(), X_raw.cols());
    Eigen::VectorXd chain(cfg.width);
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      for (int k = 0; k < cfg.width; ++k) chain[k] = celu_grad(A(i, k)) * scale[k] * w2[k];
      G.row(i) = (W1.transpose() * chain).transpose();
    }
    return G * in_sd.cwiseInverse().asDiagonal();
  }
};

// Full-batch Adam on weighted squared error. Deterministic given the seed.
inline NNetModel fit_nnet(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
                          const Eigen::MatrixXd& D, const Eigen::VectorXd& w,
                          const std::vector<std::string>& year_levels, const NNetConfig& cfg,
                          std::uint64_t seed) {
  const int n = static_cast<int>(X_raw.rows());
  const int p = static_cast<int>(X_raw.cols());
  const int q = static_cast<int>(D.cols());
  const int h = cfg.width;
  if (n < 2) throw data_error("network training needs at least two rows");

  NNetModel net;
  net.cfg = cfg;
  net.year_levels = year_levels;
  net.in_mean = X_raw.colwise().mean().transpose();
  net.in_sd.resize(p);
  for (int j = 0; j < p; ++j) {
    double v = (X_raw.col(j).array() - net.in_mean[j]).square().sum() / n;
    net.in_sd[j] = v > 0 ? std::sqrt(v) : 1.0;
  }
  Eigen::MatrixXd Z = X_raw;
  Z.rowwise() -= net.in_mean.transpose();
  Z = Z * net.in_sd.cwiseInverse().asDiagonal();

  RngStream rng(seed);
  net.W1.resize(h, p);
  double w1_bound = 1.0 / std::sqrt(static_cast<double>(p));
  for (int k = 0; k < h; ++k)
    for (int j = 0; j < p; ++j) net.W1(k, j) = rng.uniform(-w1_bound, w1_bound);
  Eigen::MatrixXd w2(h, 1);
  double w2_bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (int k = 0; k < h; ++k) w2(k, 0) = rng.uniform(-w2_bound, w2_bound);
  Eigen::MatrixXd gam = Eigen::MatrixXd::Ones(h, 1);
  Eigen::MatrixXd bet = Eigen::MatrixXd::Zero(h, 1);
  Eigen::MatrixXd b2 = Eigen::MatrixXd::Zero(1, 1);
  Eigen::MatrixXd del = Eigen::MatrixXd::Zero(std::max(q, 1), 1);

  Eigen::ArrayXd wn = w.array() / w.sum();  // normalized row weights

  detail::AdamBlock aW1(h, p), agam(h, 1), abet(h, 1), aw2(h, 1), ab2(1, 1), adel(std::max(q, 1), 1);

  Eigen::MatrixXd H, Hc, Xhat, Act, C(n, h), dC, dAct(n, h), dXhat, dH;
  Eigen::VectorXd mu(h), var(h), inv_sd(h);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    H.noalias() = Z * net.W1.transpose();
    mu = H.colwise().mean().transpose();
    Hc = H.rowwise() - mu.transpose();
    var = (Hc.array().square().colwise().sum() / n).transpose().matrix();
    inv_sd = (var.array() + cfg.bn_eps).rsqrt().matrix();
    Xhat = Hc * inv_sd.asDiagonal();
    Act = Xhat * gam.col(0).asDiagonal();
    Act.rowwise() += bet.col(0).transpose();
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < h; ++k) C(i, k) = celu(Act(i, k));

    Eigen::VectorXd out = C * w2.col(0);
    out.array() += b2(0, 0);
    if (q > 0) out.noalias() += D * del.col(0);
    Eigen::VectorXd r = out - y;
    double loss = (wn * r.array().square()).sum();
    if (!std::isfinite(loss))
      throw numeric_error("network loss became non-finite at epoch " + std::to_string(epoch) +
                          " (seed " + std::to_string(seed) + ")");

    Eigen::VectorXd dout = 2.0 * (wn * r.array()).matrix();
    Eigen::MatrixXd gb2(1, 1);
    gb2(0, 0) = dout.sum();
    Eigen::MatrixXd gdel = Eigen::MatrixXd::Zero(std::max(q, 1), 1);
    if (q > 0) gdel.col(0).noalias() = D.transpose() * dout;
    Eigen::MatrixXd gw2 = C.transpose() * dout;
    dC.noalias() = dout * w2.col(0).transpose();
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < h; ++k) dAct(i, k) = dC(i, k) * celu_grad(Act(i, k));
    Eigen::MatrixXd gbet = dAct.colwise().sum().transpose();
    Eigen::MatrixXd ggam = (dAct.array() * Xhat.array()).colwise().sum().transpose().matrix();
    dXhat = dAct * gam.col(0).asDiagonal();
    // batch norm backward with population variance over the full batch
    Eigen::RowVectorXd mean_d = dXhat.colwise().mean();
    Eigen::RowVectorXd mean_dx =
        ((dXhat.array() * Xhat.array()).colwise().mean()).matrix();
    dH = dXhat;
    dH.rowwise() -= mean_d;
    dH -= Xhat * mean_dx.transpose().asDiagonal();
    dH = dH * inv_sd.asDiagonal();
    Eigen::MatrixXd gW1 = dH.transpose() * Z;

    double bias1 = 1.0 - std::pow(cfg.beta1, epoch);
    double bias2 = 1.0 - std::pow(cfg.beta2, epoch);
    aW1.step(net.W1, gW1, cfg, bias1, bias2);
    agam.step(gam, ggam, cfg, bias1, bias2);
    abet.step(bet, gbet, cfg, bias1, bias2);
    aw2.step(w2, gw2, cfg, bias1, bias2);
    ab2.step(b2, gb2, cfg, bias1, bias2);
    if (q > 0) adel.step(del, gdel, cfg, bias1, bias2);
    net.epochs_run = epoch;
  }

  net.w2 = w2.col(0);
  net.bn_gamma = gam.col(0);
  net.bn_beta = bet.col(0);
  net.b2 = b2(0, 0);
  net.year_coef = q > 0 ? Eigen::VectorXd(del.col(0)) : Eigen::VectorXd();

  // freeze batch statistics at the final weights over the full training set
  H.noalias() = Z * net.W1.transpose();
  net.bn_mean = H.colwise().mean().transpose();
  Eigen::MatrixXd Hf = H.rowwise() - net.bn_mean.transpose();
  net.bn_var = (Hf.array().square().colwise().sum() / n).transpose().matrix();

  Eigen::VectorXd fitted = net.predict(X_raw);
  if (q > 0) fitted += D * net.year_coef;
  net.train_mse = weighted_mse(y - fitted, w);
  return net;
}

}  // namespace paneldml
