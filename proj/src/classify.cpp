#include "vidrep/classify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>

#include "vidrep/error.hpp"
#include "vidrep/eval.hpp"
#include "vidrep/random.hpp"

namespace vidrep {

std::vector<int> to_signed_labels(std::span<const int> labels01) {
  std::vector<int> y(labels01.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    require(labels01[i] == 0 || labels01[i] == 1, ErrorKind::Data, "labels must be 0 or 1");
    y[i] = labels01[i] ? 1 : -1;
  }
  return y;
}

namespace {

constexpr double kTau = 1e-12;

void check_targets(std::span<const int> y, std::size_t n) {
  require(y.size() == n, ErrorKind::Shape,
          "svm: " + std::to_string(y.size()) + " labels for " + std::to_string(n) + " rows");
  bool pos = false, neg = false;
  for (int v : y) {
    require(v == 1 || v == -1, ErrorKind::Data, "svm: targets must be -1 or +1");
    pos |= v == 1;
    neg |= v == -1;
  }
  require(pos && neg, ErrorKind::Data, "svm: training data must contain both classes");
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += static_cast<double>(a[d]) * b[d];
  return s;
}

// Kernel columns for the SMO solver (unsigned kernel values).
class ColumnSource {
 public:
  virtual ~ColumnSource() = default;
  virtual const double* column(std::size_t i) = 0;
  virtual double diag(std::size_t i) const = 0;
};

class DenseColumns final : public ColumnSource {
 public:
  explicit DenseColumns(const DenseMatrix& k) : k_(k) {}
  const double* column(std::size_t i) override { return k_.data.data() + i * k_.cols; }
  double diag(std::size_t i) const override { return k_(i, i); }

 private:
  const DenseMatrix& k_;
};

// Linear-kernel Gram columns computed on demand with an LRU column cache.
class LinearGram final : public ColumnSource {
 public:
  LinearGram(const DescriptorSet& x, std::size_t budget_bytes) : x_(x), slot_of_(x.n_items, -1), diag_(x.n_items) {
    const std::size_t n = x.n_items;
    capacity_ = std::clamp<std::size_t>(budget_bytes / (8 * std::max<std::size_t>(n, 1)), 2, n);
    for (std::size_t i = 0; i < n; ++i) diag_[i] = dot(x.row(i), x.row(i));
  }

  const double* column(std::size_t i) override {
    ++clock_;
    if (slot_of_[i] >= 0) {
      last_used_[static_cast<std::size_t>(slot_of_[i])] = clock_;
      return columns_[static_cast<std::size_t>(slot_of_[i])].data();
    }
    std::size_t slot = columns_.size();
    if (columns_.size() < capacity_) {
      columns_.emplace_back(x_.n_items);
      owner_.push_back(i);
      last_used_.push_back(clock_);
    } else {
      slot = static_cast<std::size_t>(std::min_element(last_used_.begin(), last_used_.end()) - last_used_.begin());
      slot_of_[owner_[slot]] = -1;
      owner_[slot] = i;
      last_used_[slot] = clock_;
    }
    slot_of_[i] = static_cast<long>(slot);
    auto& col = columns_[slot];
    const auto xi = x_.row(i);
    for (std::size_t j = 0; j < x_.n_items; ++j) col[j] = dot(xi, x_.row(j));
    return col.data();
  }

  double diag(std::size_t i) const override { return diag_[i]; }

 private:
  const DescriptorSet& x_;
  std::vector<long> slot_of_;
  std::vector<double> diag_;
  std::vector<std::vector<double>> columns_;
  std::vector<std::size_t> owner_;
  std::vector<std::uint64_t> last_used_;
  std::size_t capacity_ = 2;
  std::uint64_t clock_ = 0;
};

// Sequential minimal optimization on
//   min f(a) = 1/2 a'Qa - e'a,  0 <= a <= C,  y'a = 0,  Q_ij = y_i y_j K_ij
// with second-order working-set selection.
class SmoSolver {
 public:
  SmoSolver(ColumnSource& cols, std::span<const int> y, double C)
      : cols_(cols), y_(y.begin(), y.end()), C_(C), alpha_(y.size(), 0.0), grad_(y.size(), -1.0) {}

  // Iterates until the maximal violation drops below tol. Calls on_epoch
  // after every n updates. Returns the final violation.
  double run(double tol, std::size_t max_iter, const std::function<void()>& on_epoch) {
    const std::size_t n = y_.size();
    std::size_t since_epoch = 0;
    while (iterations_ < max_iter) {
      std::size_t i = 0, j = 0;
      const double violation = select(i, j);
      violation_ = violation;
      if (violation < tol) break;
      update(i, j);
      ++iterations_;
      if (++since_epoch == n) {
        since_epoch = 0;
        if (on_epoch) on_epoch();
      }
    }
    return violation_;
  }

  double rho() const {
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < y_.size(); ++t) {
      const double yg = y_[t] * grad_[t];
      if (at_upper(t)) {
        if (y_[t] == -1) {
          ub = std::min(ub, yg);
        } else {
          lb = std::max(lb, yg);
        }
      } else if (at_lower(t)) {
        if (y_[t] == 1) {
          ub = std::min(ub, yg);
        } else {
          lb = std::max(lb, yg);
        }
      } else {
        ++n_free;
        sum_free += yg;
      }
    }
    return n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  }

  // Dual objective in maximization form.
  double objective() const {
    double v = 0.0;
    for (std::size_t t = 0; t < y_.size(); ++t) v += alpha_[t] * (grad_[t] - 1.0);
    return -v / 2.0;
  }

  const std::vector<double>& alpha() const { return alpha_; }
  std::size_t iterations() const { return iterations_; }
  double violation() const { return violation_; }

 private:
  bool at_upper(std::size_t t) const { return alpha_[t] >= C_; }
  bool at_lower(std::size_t t) const { return alpha_[t] <= 0.0; }

  double select(std::size_t& out_i, std::size_t& out_j) {
    const std::size_t n = y_.size();
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    long i = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y_[t] == 1) {
        if (!at_upper(t) && -grad_[t] >= gmax) {
          gmax = -grad_[t];
          i = static_cast<long>(t);
        }
      } else if (!at_lower(t) && grad_[t] >= gmax) {
        gmax = grad_[t];
        i = static_cast<long>(t);
      }
    }
    if (i < 0) return 0.0;
    const auto ii = static_cast<std::size_t>(i);
    const double* ki = cols_.column(ii);
    const double kii = cols_.diag(ii);
    long j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (y_[t] == 1) {
        if (at_lower(t)) continue;
        const double diff = gmax + grad_[t];
        gmax2 = std::max(gmax2, grad_[t]);
        if (diff > 0.0) {
          double quad = kii + cols_.diag(t) - 2.0 * y_[ii] * ki[t];
          if (quad <= 0.0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= best) {
            best = obj;
            j = static_cast<long>(t);
          }
        }
      } else {
        if (at_upper(t)) continue;
        const double diff = gmax - grad_[t];
        gmax2 = std::max(gmax2, -grad_[t]);
        if (diff > 0.0) {
          double quad = kii + cols_.diag(t) + 2.0 * y_[ii] * ki[t];
          if (quad <= 0.0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= best) {
            best = obj;
            j = static_cast<long>(t);
          }
        }
      }
    }
    const double violation = gmax + gmax2;
    if (j < 0) return std::min(violation, 0.0);
    out_i = ii;
    out_j = static_cast<std::size_t>(j);
    return violation;
  }

  void update(std::size_t i, std::size_t j) {
    const double* ki = cols_.column(i);
    const double* kj = cols_.column(j);
    const double qij = y_[i] * y_[j] * ki[j];
    const double qii = cols_.diag(i);
    const double qjj = cols_.diag(j);
    const double old_i = alpha_[i];
    const double old_j = alpha_[j];
    double& ai = alpha_[i];
    double& aj = alpha_[j];
    if (y_[i] != y_[j]) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad_[i] - grad_[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > C_) {
          ai = C_;
          aj = C_ - diff;
        }
      } else if (aj > C_) {
        aj = C_;
        ai = C_ + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad_[i] - grad_[j]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > C_) {
        if (ai > C_) {
          ai = C_;
          aj = sum - C_;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > C_) {
        if (aj > C_) {
          aj = C_;
          ai = sum - C_;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    const double di = (ai - old_i) * y_[i];
    const double dj = (aj - old_j) * y_[j];
    for (std::size_t t = 0; t < y_.size(); ++t) grad_[t] += y_[t] * (ki[t] * di + kj[t] * dj);
  }

  ColumnSource& cols_;
  std::vector<int> y_;
  double C_;
  std::vector<double> alpha_;
  std::vector<double> grad_;
  std::size_t iterations_ = 0;
  double violation_ = std::numeric_limits<double>::infinity();
};

std::size_t max_solver_iterations(std::size_t n) { return std::max<std::size_t>(10'000'000, 100 * n); }

// Minimizes sum_i C max(0, 1 - y_i (s_i + b)) over b exactly. The loss is
// convex piecewise linear with kinks at t_i = y_i - s_i.
double optimal_bias(std::span<const double> s, std::span<const int> y) {
  const std::size_t n = s.size();
  std::vector<std::pair<double, int>> kinks(n);
  std::size_t pos_total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    kinks[i] = {y[i] - s[i], y[i]};
    pos_total += y[i] == 1;
  }
  std::sort(kinks.begin(), kinks.end());
  // Right derivative / C at kink k: #neg with t <= t_k  -  #pos with t > t_k.
  std::size_t neg_le = 0, pos_le = 0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t e = k;
    while (e < n && kinks[e].first == kinks[k].first) {
      (kinks[e].second == 1 ? pos_le : neg_le) += 1;
      ++e;
    }
    if (static_cast<double>(neg_le) - static_cast<double>(pos_total - pos_le) >= 0.0) return kinks[k].first;
    k = e - 1;
  }
  return kinks.back().first;
}

}  // namespace

double linear_primal_objective(std::span<const double> w, double bias, const DescriptorSet& x, std::span<const int> y,
                               double C) {
  double reg = 0.0;
  for (double v : w) reg += v * v;
  double loss = 0.0;
  for (std::size_t i = 0; i < x.n_items; ++i) {
    const auto row = x.row(i);
    double s = bias;
    for (std::size_t d = 0; d < row.size(); ++d) s += w[d] * row[d];
    loss += std::max(0.0, 1.0 - y[i] * s);
  }
  return 0.5 * reg + C * loss;
}

LinearClassifier train_linear_svm(const DescriptorSet& x, std::span<const int> y, double C, std::uint64_t /*seed*/,
                                  SvmTrace* trace) {
  check_targets(y, x.n_items);
  require(C > 0.0 && std::isfinite(C), ErrorKind::Parameter, "train_linear_svm: C must be positive");
  for (float v : x.data) require(std::isfinite(v), ErrorKind::Data, "train_linear_svm: non-finite feature");

  const std::size_t n = x.n_items;
  const std::size_t dim = x.dim;
  LinearGram gram(x, std::size_t{512} << 20);
  SmoSolver smo(gram, y, C);

  std::vector<double> w(dim), best_w(dim, 0.0), s(n);
  double best_b = 0.0;
  double best_primal = std::numeric_limits<double>::infinity();

  // Evaluates the primal at the current dual iterate (bias re-fit exactly)
  // and keeps the best iterate seen so far.
  auto consider = [&] {
    std::fill(w.begin(), w.end(), 0.0);
    const auto& alpha = smo.alpha();
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] == 0.0) continue;
      const double coef = alpha[i] * y[i];
      const auto row = x.row(i);
      for (std::size_t d = 0; d < dim; ++d) w[d] += coef * row[d];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = x.row(i);
      double acc = 0.0;
      for (std::size_t d = 0; d < dim; ++d) acc += w[d] * row[d];
      s[i] = acc;
    }
    for (double b : {optimal_bias(s, y), -smo.rho()}) {
      const double primal = linear_primal_objective(w, b, x, y, C);
      if (primal < best_primal) {
        best_primal = primal;
        best_w = w;
        best_b = b;
      }
    }
    if (trace) {
      trace->primal.push_back(best_primal);
      trace->dual.push_back(smo.objective());
    }
  };

  double tol = 1e-3;
  double gap = 0.0;
  for (;;) {
    smo.run(tol, max_solver_iterations(n), consider);
    consider();
    gap = (best_primal - smo.objective()) / std::max(std::abs(best_primal), 1e-12);
    if (gap <= 1e-3 || tol < 1e-10 || smo.iterations() >= max_solver_iterations(n)) break;
    tol *= 0.1;
  }
  if (trace) {
    trace->duality_gap = gap;
    trace->iterations = smo.iterations();
  }

  LinearClassifier clf;
  clf.w.assign(best_w.begin(), best_w.end());
  clf.bias = best_b;
  clf.C = C;
  return clf;
}

double predict_linear(const LinearClassifier& clf, std::span<const float> x) {
  require(x.size() == clf.w.size(), ErrorKind::Shape,
          "predict_linear: length " + std::to_string(x.size()) + " != " + std::to_string(clf.w.size()));
  return dot(clf.w, x) + clf.bias;
}

std::vector<double> predict_linear(const LinearClassifier& clf, const DescriptorSet& x) {
  std::vector<double> out(x.n_items);
  for (std::size_t i = 0; i < x.n_items; ++i) out[i] = predict_linear(clf, x.row(i));
  return out;
}

// ---- kernels ---------------------------------------------------------------

const char* to_string(KernelKind kind) noexcept { return kind == KernelKind::ExpChi2 ? "exp_chi2" : "rbf"; }

KernelKind parse_kernel(const std::string& name) {
  if (name == "exp_chi2" || name == "expchi2" || name == "chi2") return KernelKind::ExpChi2;
  if (name == "rbf") return KernelKind::Rbf;
  fail(ErrorKind::Parameter, "unknown kernel '" + name + "' (expected exp_chi2 or rbf)");
}

double chi2_distance(std::span<const float> a, std::span<const float> b, double eps) {
  require(a.size() == b.size(), ErrorKind::Shape, "chi2_distance: length mismatch");
  double sum = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    if (a[d] < 0.0f || b[d] < 0.0f) fail(ErrorKind::Domain, "chi2_distance: negative component at index " + std::to_string(d));
    const double diff = static_cast<double>(a[d]) - b[d];
    if (diff == 0.0) continue;
    sum += diff * diff / (static_cast<double>(a[d]) + b[d] + eps);
  }
  return 0.5 * sum;
}

double rbf_distance(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), ErrorKind::Shape, "rbf_distance: length mismatch");
  double sum = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = static_cast<double>(a[d]) - b[d];
    sum += diff * diff;
  }
  return 0.5 * sum;
}

double kernel_distance(KernelKind kind, std::span<const float> a, std::span<const float> b) {
  return kind == KernelKind::ExpChi2 ? chi2_distance(a, b) : rbf_distance(a, b);
}

double mean_distance(const DescriptorSet& x, KernelKind kind) {
  require(x.n_items >= 2, ErrorKind::InsufficientData, "mean_distance: need at least two rows");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.n_items; ++i) {
    for (std::size_t j = i + 1; j < x.n_items; ++j) sum += kernel_distance(kind, x.row(i), x.row(j));
  }
  const double pairs = static_cast<double>(x.n_items) * static_cast<double>(x.n_items - 1) / 2.0;
  return sum / pairs;
}

DenseMatrix distance_matrix(const DescriptorSet& a, const DescriptorSet& b, KernelKind kind) {
  require(a.dim == b.dim, ErrorKind::Shape, "distance_matrix: dimension mismatch");
  DenseMatrix out(a.n_items, b.n_items);
  const bool same = &a == &b;
  for (std::size_t i = 0; i < a.n_items; ++i) {
    for (std::size_t j = same ? i : 0; j < b.n_items; ++j) {
      const double d = kernel_distance(kind, a.row(i), b.row(j));
      out(i, j) = d;
      if (same) out(j, i) = d;
    }
  }
  return out;
}

DenseMatrix kernel_from_distances(const DenseMatrix& distances, double sigma, double A) {
  require(A > 0.0 && std::isfinite(A), ErrorKind::Parameter, "kernel: mean distance A must be positive");
  require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::Parameter, "kernel: sigma must be positive");
  DenseMatrix k = distances;
  const double scale = 1.0 / (A * sigma * sigma);
  for (double& v : k.data) v = std::exp(-v * scale);
  return k;
}

DenseMatrix kernel_matrix(const DescriptorSet& a, const DescriptorSet& b, KernelKind kind, double sigma, double A) {
  require(A > 0.0 && std::isfinite(A), ErrorKind::Parameter, "kernel_matrix: mean distance A must be positive");
  require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::Parameter, "kernel_matrix: sigma must be positive");
  return kernel_from_distances(distance_matrix(a, b, kind), sigma, A);
}

double dual_objective(const DenseMatrix& kernel, std::span<const int> y, std::span<const double> alpha) {
  double linear = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    linear += alpha[i];
    if (alpha[i] == 0.0) continue;
    for (std::size_t j = 0; j < alpha.size(); ++j) quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel(i, j);
  }
  return linear - 0.5 * quad;
}

DualSolution train_kernel_svm(const DenseMatrix& kernel, std::span<const int> y, double C, double tol) {
  require(kernel.rows == kernel.cols, ErrorKind::Shape, "train_kernel_svm: kernel must be square");
  check_targets(y, kernel.rows);
  require(C > 0.0 && std::isfinite(C), ErrorKind::Parameter, "train_kernel_svm: C must be positive");
  for (std::size_t i = 0; i < kernel.rows; ++i) {
    for (std::size_t j = i + 1; j < kernel.cols; ++j) {
      const double a = kernel(i, j), b = kernel(j, i);
      if (!(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)))) {
        fail(ErrorKind::Data, "train_kernel_svm: kernel is not symmetric at (" + std::to_string(i) + ", " +
                                  std::to_string(j) + ")");
      }
    }
  }
  DenseColumns cols(kernel);
  SmoSolver smo(cols, y, C);
  smo.run(tol, max_solver_iterations(kernel.rows), nullptr);
  DualSolution sol;
  sol.alpha = smo.alpha();
  sol.bias = -smo.rho();
  sol.objective = smo.objective();
  sol.kkt_violation = std::max(0.0, smo.violation());
  sol.iterations = smo.iterations();
  return sol;
}

KernelSvmModel fit_kernel_svm(const DescriptorSet& x, std::span<const int> y, KernelKind kind, double sigma, double C) {
  check_targets(y, x.n_items);
  const double A = mean_distance(x, kind);
  const DenseMatrix k = kernel_matrix(x, x, kind, sigma, A);
  const DualSolution sol = train_kernel_svm(k, y, C);
  KernelSvmModel model;
  model.kernel = kind;
  model.sigma = sigma;
  model.A = A;
  model.C = C;
  model.bias = sol.bias;
  model.support_vectors.dim = x.dim;
  for (std::size_t i = 0; i < x.n_items; ++i) {
    if (sol.alpha[i] <= 0.0) continue;
    model.support_vectors.append_row(x.row(i));
    model.dual_coefs.push_back(static_cast<float>(sol.alpha[i] * y[i]));
  }
  return model;
}

double predict_kernel(const KernelSvmModel& model, std::span<const float> x) {
  require(x.size() == model.support_vectors.dim, ErrorKind::Shape, "predict_kernel: dimension mismatch");
  const double scale = 1.0 / (model.A * model.sigma * model.sigma);
  double s = model.bias;
  for (std::size_t i = 0; i < model.support_vectors.n_items; ++i) {
    s += model.dual_coefs[i] * std::exp(-kernel_distance(model.kernel, model.support_vectors.row(i), x) * scale);
  }
  return s;
}

std::vector<double> predict_kernel(const KernelSvmModel& model, const DescriptorSet& x) {
  std::vector<double> out(x.n_items);
  for (std::size_t i = 0; i < x.n_items; ++i) out[i] = predict_kernel(model, x.row(i));
  return out;
}

// ---- cross-validation ------------------------------------------------------

std::vector<std::size_t> stratified_folds(std::span<const int> y, std::size_t folds, std::uint64_t seed,
                                          std::size_t* folds_used, std::vector<std::string>* warnings) {
  require(folds >= 2, ErrorKind::Parameter, "cross-validation needs at least 2 folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] > 0 ? pos : neg).push_back(i);
  std::size_t used = std::min({folds, pos.size(), neg.size()});
  if (used < 2) {
    fail(ErrorKind::InsufficientData, "cross-validation: too few positives (" + std::to_string(pos.size()) +
                                          ") or negatives (" + std::to_string(neg.size()) + ") to stratify");
  }
  if (used < folds && warnings) {
    warnings->push_back("reduced folds from " + std::to_string(folds) + " to " + std::to_string(used) +
                        " so every fold holds a positive and a negative");
  }
  if (folds_used) *folds_used = used;
  Rng rng(seed);
  auto shuffle = [&](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
  };
  shuffle(pos);
  shuffle(neg);
  std::vector<std::size_t> fold(y.size());
  for (std::size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = i % used;
  for (std::size_t i = 0; i < neg.size(); ++i) fold[neg[i]] = i % used;
  return fold;
}

namespace {

std::vector<double> sorted_unique(std::span<const double> grid, const char* what) {
  require(!grid.empty(), ErrorKind::Parameter, std::string("cross-validation: empty ") + what + " grid");
  std::set<double> values;
  for (double v : grid) {
    require(v > 0.0 && std::isfinite(v), ErrorKind::Parameter, std::string("cross-validation: ") + what + " must be positive");
    values.insert(v);
  }
  return {values.begin(), values.end()};
}

DescriptorSet select_rows(const DescriptorSet& x, const std::vector<std::size_t>& rows) {
  DescriptorSet out(rows.size(), x.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(x.row(rows[i]).begin(), x.dim, out.row(i).begin());
  return out;
}

struct FoldSplit {
  std::vector<std::size_t> train, test;
};

std::vector<FoldSplit> make_splits(const std::vector<std::size_t>& fold, std::size_t folds) {
  std::vector<FoldSplit> splits(folds);
  for (std::size_t i = 0; i < fold.size(); ++i) {
    for (std::size_t f = 0; f < folds; ++f) (fold[i] == f ? splits[f].test : splits[f].train).push_back(i);
  }
  return splits;
}

double held_out_ap(std::span<const double> scores, const std::vector<std::size_t>& rows, std::span<const int> y) {
  std::vector<int> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = y[rows[i]] > 0 ? 1 : 0;
  return average_precision(scores, labels);
}

}  // namespace

CvResult cross_validate_linear(const DescriptorSet& x, std::span<const int> y, std::span<const double> c_grid,
                               std::size_t folds, std::uint64_t seed) {
  check_targets(y, x.n_items);
  const auto cs = sorted_unique(c_grid, "C");
  CvResult result;
  const auto fold = stratified_folds(y, folds, seed, &result.folds, &result.warnings);
  const auto splits = make_splits(fold, result.folds);

  std::vector<DescriptorSet> train_x, test_x;
  std::vector<std::vector<int>> train_y;
  for (const auto& sp : splits) {
    train_x.push_back(select_rows(x, sp.train));
    test_x.push_back(select_rows(x, sp.test));
    std::vector<int> ty;
    for (auto i : sp.train) ty.push_back(y[i]);
    train_y.push_back(std::move(ty));
  }

  result.mean_ap = -1.0;
  for (double c : cs) {
    double total = 0.0;
    for (std::size_t f = 0; f < splits.size(); ++f) {
      const auto clf = train_linear_svm(train_x[f], train_y[f], c, seed);
      total += held_out_ap(predict_linear(clf, test_x[f]), splits[f].test, y);
    }
    const double score = total / static_cast<double>(splits.size());
    result.grid.push_back({c, 0.0, score});
    if (score > result.mean_ap) {
      result.mean_ap = score;
      result.C = c;
    }
  }
  return result;
}

CvResult cross_validate_kernel(const DescriptorSet& x, std::span<const int> y, KernelKind kind,
                               std::span<const double> c_grid, std::span<const double> sigma_grid, std::size_t folds,
                               std::uint64_t seed) {
  check_targets(y, x.n_items);
  const auto cs = sorted_unique(c_grid, "C");
  const auto sigmas = sorted_unique(sigma_grid, "sigma");
  CvResult result;
  const auto fold = stratified_folds(y, folds, seed, &result.folds, &result.warnings);
  const auto splits = make_splits(fold, result.folds);
  const DenseMatrix dist = distance_matrix(x, x, kind);

  struct FoldData {
    DenseMatrix train_dist, test_dist;
    std::vector<int> train_y;
    double A = 0.0;
  };
  std::vector<FoldData> data;
  for (const auto& sp : splits) {
    FoldData fd;
    fd.train_dist = DenseMatrix(sp.train.size(), sp.train.size());
    fd.test_dist = DenseMatrix(sp.test.size(), sp.train.size());
    double sum = 0.0;
    for (std::size_t a = 0; a < sp.train.size(); ++a) {
      for (std::size_t b = 0; b < sp.train.size(); ++b) {
        fd.train_dist(a, b) = dist(sp.train[a], sp.train[b]);
        if (b > a) sum += fd.train_dist(a, b);
      }
      fd.train_y.push_back(y[sp.train[a]]);
    }
    for (std::size_t a = 0; a < sp.test.size(); ++a) {
      for (std::size_t b = 0; b < sp.train.size(); ++b) fd.test_dist(a, b) = dist(sp.test[a], sp.train[b]);
    }
    const double pairs = static_cast<double>(sp.train.size()) * static_cast<double>(sp.train.size() - 1) / 2.0;
    fd.A = sum / pairs;
    data.push_back(std::move(fd));
  }

  std::vector<double> score_of(cs.size() * sigmas.size(), 0.0);
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    for (std::size_t f = 0; f < splits.size(); ++f) {
      const auto& fd = data[f];
      const DenseMatrix k_train = kernel_from_distances(fd.train_dist, sigmas[si], fd.A);
      const DenseMatrix k_test = kernel_from_distances(fd.test_dist, sigmas[si], fd.A);
      for (std::size_t ci = 0; ci < cs.size(); ++ci) {
        const DualSolution sol = train_kernel_svm(k_train, fd.train_y, cs[ci]);
        std::vector<double> scores(k_test.rows, sol.bias);
        for (std::size_t a = 0; a < k_test.rows; ++a) {
          for (std::size_t b = 0; b < k_test.cols; ++b) scores[a] += sol.alpha[b] * fd.train_y[b] * k_test(a, b);
        }
        score_of[ci * sigmas.size() + si] += held_out_ap(scores, splits[f].test, y);
      }
    }
  }

  result.mean_ap = -1.0;
  for (std::size_t ci = 0; ci < cs.size(); ++ci) {
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
      const double score = score_of[ci * sigmas.size() + si] / static_cast<double>(splits.size());
      result.grid.push_back({cs[ci], sigmas[si], score});
      if (score > result.mean_ap) {
        result.mean_ap = score;
        result.C = cs[ci];
        result.sigma = sigmas[si];
      }
    }
  }
  return result;
}

// ---- persistence -----------------------------------------------------------

io::ModelFile to_model_file(const LinearClassifier& clf) {
  io::ModelFile file;
  file.kind = "linsvm";
  file.params = {{"dim", clf.w.size()}, {"bias", clf.bias}, {"C", clf.C}};
  file.blocks.push_back({"w", {clf.w.size()}, clf.w});
  return file;
}

LinearClassifier linear_from_model(const io::ModelFile& file) {
  require(file.kind == "linsvm", ErrorKind::Format, "expected a linsvm model, got '" + file.kind + "'");
  io::validate_model(file);
  LinearClassifier clf;
  std::size_t dim = 0;
  try {
    dim = file.params.at("dim").get<std::size_t>();
    clf.bias = file.params.at("bias").get<double>();
    clf.C = file.params.at("C").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("linsvm model params: ") + e.what());
  }
  require(file.block("w").shape == std::vector<std::size_t>{dim}, ErrorKind::Format, "linsvm w shape disagrees with dim");
  clf.w = file.block("w").data;
  return clf;
}

io::ModelFile to_model_file(const KernelSvmModel& model) {
  io::ModelFile file;
  file.kind = "ksvm";
  file.params = {{"kernel", to_string(model.kernel)}, {"sigma", model.sigma}, {"A", model.A},
                 {"C", model.C},                      {"bias", model.bias},   {"dim", model.support_vectors.dim}};
  file.blocks.push_back(
      {"support_vectors", {model.support_vectors.n_items, model.support_vectors.dim}, model.support_vectors.data});
  file.blocks.push_back({"dual_coefs", {model.dual_coefs.size()}, model.dual_coefs});
  return file;
}

KernelSvmModel kernel_svm_from_model(const io::ModelFile& file) {
  require(file.kind == "ksvm", ErrorKind::Format, "expected a ksvm model, got '" + file.kind + "'");
  io::validate_model(file);
  KernelSvmModel model;
  std::size_t dim = 0;
  try {
    model.kernel = parse_kernel(file.params.at("kernel").get<std::string>());
    model.sigma = file.params.at("sigma").get<double>();
    model.A = file.params.at("A").get<double>();
    model.C = file.params.at("C").get<double>();
    model.bias = file.params.at("bias").get<double>();
    dim = file.params.at("dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("ksvm model params: ") + e.what());
  }
  const auto& sv = file.block("support_vectors");
  const auto& coefs = file.block("dual_coefs");
  require(sv.shape.size() == 2 && sv.shape[1] == dim && coefs.shape == std::vector<std::size_t>{sv.shape[0]},
          ErrorKind::Format, "ksvm block shapes disagree");
  require(model.A > 0.0 && model.sigma > 0.0, ErrorKind::Format, "ksvm A and sigma must be positive");
  model.support_vectors = DescriptorSet(sv.shape[0], dim, sv.data);
  model.dual_coefs = coefs.data;
  return model;
}

}  // namespace vidrep
