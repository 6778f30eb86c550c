#include <catch2/catch_amalgamated.hpp>

#include "paneldml/nnet.hpp"

using namespace paneldml;

namespace {

NNetModel manual_net(int width, int inputs) {
  NNetModel net;
  net.cfg.width = width;
  net.in_mean = Eigen::VectorXd::Zero(inputs);
  net.in_sd = Eigen::VectorXd::Ones(inputs);
  net.W1 = Eigen::MatrixXd::Zero(width, inputs);
  net.bn_gamma = Eigen::VectorXd::Ones(width);
  net.bn_beta = Eigen::VectorXd::Zero(width);
  net.w2 = Eigen::VectorXd::Zero(width);
  net.bn_mean = Eigen::VectorXd::Zero(width);
  net.bn_var = Eigen::VectorXd::Ones(width);
  return net;
}

}  // namespace

TEST_CASE("zero weight network predicts its bias with zero gradient", "[nnet]") {
  NNetModel net = manual_net(3, 2);
  net.b2 = 1.5;
  Eigen::MatrixXd X(4, 2);
  X << 0, 0, 1, -1, 2, 3, -5, 7;
  Eigen::VectorXd pred = net.predict(X);
  for (int i = 0; i < 4; ++i) REQUIRE(pred[i] == 1.5);
  REQUIRE(net.input_gradient(X).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("activation is continuously differentiable at the knee", "[nnet]") {
  REQUIRE(celu(0.0) == 0.0);
  REQUIRE(std::abs(celu_grad(1e-7) - celu_grad(-1e-7)) < 1e-6);
  // through a 1-unit network: perturb the input across the kink
  NNetModel net = manual_net(1, 1);
  net.W1(0, 0) = 1.0;
  net.w2[0] = 1.0;
  Eigen::MatrixXd lo(1, 1), hi(1, 1);
  lo << -1e-7;
  hi << 1e-7;
  double glo = net.input_gradient(lo)(0, 0);
  double ghi = net.input_gradient(hi)(0, 0);
  REQUIRE(std::abs(ghi - glo) < 1e-6);
}

TEST_CASE("training recovers a linear map", "[nnet]") {
  RngStream rng(derive_seed(31, "nnet-linear"));
  int n = 200;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform(-1.0, 1.0);
    y[i] = 2.0 * X(i, 0);
  }
  NNetConfig cfg;
  cfg.width = 64;
  cfg.epochs = 2000;
  auto net = fit_nnet(X, y, Eigen::MatrixXd(n, 0), Eigen::VectorXd::Ones(n), {}, cfg,
                      derive_seed(31, "nnet-weights"));
  REQUIRE(net.train_mse < 1e-4);
  double avg_grad = net.input_gradient(X).col(0).mean();
  REQUIRE(avg_grad == Catch::Approx(2.0).margin(0.05));
}

TEST_CASE("analytic input gradients match central differences", "[nnet]") {
  RngStream rng(derive_seed(32, "nnet-fd"));
  int n = 60, p = 3;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal(0.0, 2.0);
    y[i] = std::sin(X(i, 0)) + 0.5 * X(i, 1) * X(i, 2) + rng.normal(0.0, 0.1);
  }
  NNetConfig cfg;
  cfg.width = 16;
  cfg.epochs = 50;  // arbitrary weights suffice for a chain rule check
  auto net = fit_nnet(X, y, Eigen::MatrixXd(n, 0), Eigen::VectorXd::Ones(n), {}, cfg,
                      derive_seed(32, "nnet-weights"));
  const double hstep = 1e-4;
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    Eigen::MatrixXd row = X.row(i % n);
    Eigen::MatrixXd grad = net.input_gradient(row);
    for (int j = 0; j < p; ++j) {
      Eigen::MatrixXd up = row, dn = row;
      up(0, j) += hstep;
      dn(0, j) -= hstep;
      double fd = (net.predict(up)[0] - net.predict(dn)[0]) / (2 * hstep);
      double rel = std::abs(grad(0, j) - fd) / std::max(std::abs(fd), 1e-8);
      worst = std::max(worst, rel);
    }
  }
  REQUIRE(worst < 1e-5);
}

TEST_CASE("year effects are learned alongside the network", "[nnet]") {
  RngStream rng(derive_seed(33, "nnet-years"));
  int n = 160;
  Eigen::MatrixXd X(n, 1);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform(-1.0, 1.0);
    D(i, 0) = i % 2;
    y[i] = 2.0 * X(i, 0) + 1.0 * D(i, 0);
  }
  NNetConfig cfg;
  cfg.width = 8;
  auto net = fit_nnet(X, y, D, Eigen::VectorXd::Ones(n), {"y0", "y1"}, cfg,
                      derive_seed(33, "nnet-weights"));
  REQUIRE(net.train_mse < 1e-3);
  REQUIRE(net.year_coef[0] == Catch::Approx(1.0).margin(0.15));
}

TEST_CASE("training is deterministic in the seed", "[nnet]") {
  RngStream rng(derive_seed(34, "nnet-det"));
  int n = 50;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
    y[i] = X(i, 0) - X(i, 1) + 0.1 * rng.normal();
  }
  NNetConfig cfg;
  cfg.width = 4;
  cfg.epochs = 120;
  auto a = fit_nnet(X, y, Eigen::MatrixXd(n, 0), Eigen::VectorXd::Ones(n), {}, cfg, 99);
  auto b = fit_nnet(X, y, Eigen::MatrixXd(n, 0), Eigen::VectorXd::Ones(n), {}, cfg, 99);
  auto c = fit_nnet(X, y, Eigen::MatrixXd(n, 0), Eigen::VectorXd::Ones(n), {}, cfg, 100);
  REQUIRE(a.W1 == b.W1);
  REQUIRE(a.predict(X) == b.predict(X));
  REQUIRE(a.W1 != c.W1);
}

TEST_CASE("exploding training reports the failing epoch", "[nnet]") {
  Eigen::MatrixXd X(8, 1);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    X(i, 0) = i;
    y[i] = i;
  }
  NNetConfig cfg;
  cfg.width = 2;
  cfg.epochs = 10;
  cfg.lr = 1e200;
  REQUIRE_THROWS_AS(
      fit_nnet(X, y, Eigen::MatrixXd(8, 0), Eigen::VectorXd::Ones(8), {}, cfg, 7),
      numeric_error);
  try {
    fit_nnet(X, y, Eigen::MatrixXd(8, 0), Eigen::VectorXd::Ones(8), {}, cfg, 7);
  } catch (const numeric_error& e) {
    REQUIRE(std::string(e.what()).find("epoch") != std::string::npos);
    REQUIRE(std::string(e.what()).find("seed 7") != std::string::npos);
  }
}

TEST_CASE("width grid covers the documented range", "[nnet]") {
  auto g = default_width_grid();
  REQUIRE(g == std::vector<int>{2, 4, 8, 16, 32, 64, 128, 256});
}
