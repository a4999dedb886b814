#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "vrank/core.hpp"
#include "vrank/rng.hpp"

namespace vrank {

// ---------------------------------------------------------------------------
// Softmax helpers. All exponentials subtract the max logit first.
// ---------------------------------------------------------------------------

inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd shifted = logits.array() - m;
  const double lse = std::log(shifted.array().exp().sum());
  return shifted.array() - lse;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  return log_softmax(logits).array().exp();
}

/// Row-wise softmax of a batch of logit rows, in place.
inline void softmax_rows_inplace(Eigen::MatrixXd& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - m).exp();
    logits.row(r) /= logits.row(r).sum();
  }
}

inline Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    Eigen::ArrayXd shifted = logits.row(r).transpose().array() - m;
    const double lse = std::log(shifted.exp().sum());
    out.row(r) = (shifted - lse).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parametric heads. Both are a single weight matrix of shape
// feature_dim x catalog_size; scores are features^T * weights.
// ---------------------------------------------------------------------------

/// Softmax policy over the item catalog with linear logits.
struct LinearSoftmaxPolicy {
  Eigen::MatrixXd weights;  // dim x catalog

  static LinearSoftmaxPolicy zeros(int dim, int catalog) {
    return LinearSoftmaxPolicy{Eigen::MatrixXd::Zero(dim, catalog)};
  }

  int dim() const { return static_cast<int>(weights.rows()); }
  int catalog() const { return static_cast<int>(weights.cols()); }

  Eigen::VectorXd logits(const Eigen::VectorXd& phi) const {
    if (phi.size() != weights.rows()) {
      throw std::invalid_argument("LinearSoftmaxPolicy: feature dimension mismatch");
    }
    return weights.transpose() * phi;
  }
};

inline Eigen::VectorXd policy_probs(const LinearSoftmaxPolicy& p, const Eigen::VectorXd& phi) {
  return softmax(p.logits(phi));
}

inline Eigen::VectorXd policy_log_probs(const LinearSoftmaxPolicy& p, const Eigen::VectorXd& phi) {
  return log_softmax(p.logits(phi));
}

/// Gradient of log p(action|phi) with respect to the weight matrix:
/// the outer product phi * (onehot(action) - probs)^T.
inline Eigen::MatrixXd log_prob_grad(const LinearSoftmaxPolicy& p, const Eigen::VectorXd& phi,
                                     ItemId action) {
  if (action < 0 || action >= p.catalog()) {
    throw std::out_of_range("log_prob_grad: action outside catalog");
  }
  Eigen::VectorXd residual = -policy_probs(p, phi);
  residual[action] += 1.0;
  return phi * residual.transpose();
}

/// Linear state-action value head: value(s, a) = phi(s)^T weights[:, a].
struct LinearQFunction {
  Eigen::MatrixXd weights;  // dim x catalog

  /// Small seeded uniform noise in [-scale, scale].
  static LinearQFunction init(int dim, int catalog, std::uint64_t seed, double scale = 1e-3) {
    Rng rng(seed);
    Eigen::MatrixXd w(dim, catalog);
    for (int c = 0; c < catalog; ++c) {
      for (int r = 0; r < dim; ++r) {
        w(r, c) = rng.uniform(-scale, scale);
      }
    }
    return LinearQFunction{std::move(w)};
  }

  int dim() const { return static_cast<int>(weights.rows()); }
  int catalog() const { return static_cast<int>(weights.cols()); }

  Eigen::VectorXd values(const Eigen::VectorXd& phi) const {
    if (phi.size() != weights.rows()) {
      throw std::invalid_argument("LinearQFunction: feature dimension mismatch");
    }
    return weights.transpose() * phi;
  }

  double value(const Eigen::VectorXd& phi, ItemId action) const {
    if (action < 0 || action >= catalog()) {
      throw std::out_of_range("LinearQFunction: action outside catalog");
    }
    return weights.col(action).dot(phi);
  }
};

inline Eigen::MatrixXd q_grad(const LinearQFunction& q, const Eigen::VectorXd& phi, ItemId action) {
  if (action < 0 || action >= q.catalog()) {
    throw std::out_of_range("q_grad: action outside catalog");
  }
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(q.dim(), q.catalog());
  g.col(action) = phi;
  return g;
}

/// Frozen copy of a value head, refreshed only by explicit sync.
struct TargetSnapshot {
  Eigen::MatrixXd weights;
  int sync_interval = 100;

  Eigen::VectorXd values(const Eigen::VectorXd& phi) const { return weights.transpose() * phi; }
  double value(const Eigen::VectorXd& phi, ItemId action) const {
    return weights.col(action).dot(phi);
  }
};

inline void sync_target(const LinearQFunction& live, TargetSnapshot& target) {
  target.weights = live.weights;
}

// ---------------------------------------------------------------------------
// Checkpoint format: self-describing text with hexfloat values so a load
// reproduces bitwise-equal parameters.
// ---------------------------------------------------------------------------

struct Checkpoint {
  int catalog_size = 0;
  double decay = 0.8;
  std::string algo = "MLE";
  std::int64_t step = 0;
  int epoch = 0;  // number of completed training epochs
  LinearSoftmaxPolicy policy;   // p_theta
  LinearSoftmaxPolicy logging;  // p_psi
  LinearQFunction q;
  TargetSnapshot target;
};

namespace detail {

inline void write_hexdouble(std::ostream& os, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  os << buf;
}

inline void write_matrix(std::ostream& os, const std::string& name, const Eigen::MatrixXd& m) {
  os << '[' << name << "] rows=" << m.rows() << " cols=" << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) os << ' ';
      write_hexdouble(os, m(r, c));
    }
    os << '\n';
  }
}

inline Eigen::MatrixXd read_matrix(std::istream& is, const std::string& name) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("checkpoint: missing matrix " + name);
  long rows = 0, cols = 0;
  const std::string expect = "[" + name + "]";
  if (header.rfind(expect, 0) != 0 ||
      std::sscanf(header.c_str() + expect.size(), " rows=%ld cols=%ld", &rows, &cols) != 2) {
    throw std::runtime_error("checkpoint: bad matrix header for " + name);
  }
  Eigen::MatrixXd m(rows, cols);
  std::string tok;
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated matrix " + name);
      m(r, c) = std::strtod(tok.c_str(), nullptr);
    }
  }
  is.ignore(1, '\n');
  return m;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << "vrank-checkpoint v1\n";
  os << "catalog_size=" << ck.catalog_size << '\n';
  os << "decay=";
  detail::write_hexdouble(os, ck.decay);
  os << '\n';
  os << "algo=" << ck.algo << '\n';
  os << "step=" << ck.step << '\n';
  os << "epoch=" << ck.epoch << '\n';
  os << "sync_interval=" << ck.target.sync_interval << '\n';
  detail::write_matrix(os, "policy", ck.policy.weights);
  detail::write_matrix(os, "logging", ck.logging.weights);
  detail::write_matrix(os, "qfunction", ck.q.weights);
  detail::write_matrix(os, "target", ck.target.weights);
}

inline Checkpoint load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "vrank-checkpoint v1") {
    throw std::runtime_error("checkpoint: bad magic line");
  }
  Checkpoint ck;
  auto read_kv = [&is, &line](const std::string& key) -> std::string {
    if (!std::getline(is, line) || line.rfind(key + "=", 0) != 0) {
      throw std::runtime_error("checkpoint: expected key " + key);
    }
    return line.substr(key.size() + 1);
  };
  ck.catalog_size = std::stoi(read_kv("catalog_size"));
  ck.decay = std::strtod(read_kv("decay").c_str(), nullptr);
  ck.algo = read_kv("algo");
  ck.step = std::stoll(read_kv("step"));
  ck.epoch = std::stoi(read_kv("epoch"));
  ck.target.sync_interval = std::stoi(read_kv("sync_interval"));
  ck.policy.weights = detail::read_matrix(is, "policy");
  ck.logging.weights = detail::read_matrix(is, "logging");
  ck.q.weights = detail::read_matrix(is, "qfunction");
  ck.target.weights = detail::read_matrix(is, "target");
  return ck;
}

}  // namespace vrank
