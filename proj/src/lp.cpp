#include "hydrosddp/lp.hpp"

#include "hydrosddp/error.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace hydro {

const char* to_string(CutSource source) {
  switch (source) {
    case CutSource::Benders: return "Benders";
    case CutSource::SocSeparation: return "SocSeparation";
    case CutSource::PsdSeparation: return "PsdSeparation";
    case CutSource::DcllTangent: return "DcllTangent";
    case CutSource::FlowLimit: return "FlowLimit";
    case CutSource::Other: return "Other";
  }
  return "Other";
}

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "Optimal";
    case LpStatus::Infeasible: return "Infeasible";
    case LpStatus::Unbounded: return "Unbounded";
    case LpStatus::IterationLimit: return "IterationLimit";
  }
  return "Unknown";
}

double Cut::violation(const Eigen::VectorXd& x) const {
  double lhs = 0.0;
  for (std::size_t k = 0; k < index.size(); ++k) lhs += value[k] * x[index[k]];
  switch (sense) {
    case Sense::LessEqual: return lhs - rhs;
    case Sense::GreaterEqual: return rhs - lhs;
    case Sense::Equal: return std::abs(lhs - rhs);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// LinearProgram
// ---------------------------------------------------------------------------

int LinearProgram::add_variable(double lb, double ub, double cost, std::string name) {
  lb_.push_back(lb);
  ub_.push_back(ub);
  cost_.push_back(cost);
  names_.push_back(std::move(name));
  return static_cast<int>(cost_.size()) - 1;
}

int LinearProgram::add_row(std::span<const int> index, std::span<const double> value, Sense sense, double rhs,
                           std::string name) {
  if (index.size() != value.size()) throw Error(ErrorKind::DimensionMismatch, "row index/value length mismatch");
  Row r;
  r.sense = sense;
  r.rhs = rhs;
  r.name = std::move(name);
  r.index.reserve(index.size());
  r.value.reserve(value.size());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= num_variables()) {
      throw Error(ErrorKind::DimensionMismatch, "row references column " + std::to_string(index[k]));
    }
    if (value[k] == 0.0) continue;
    auto it = std::find(r.index.begin(), r.index.end(), index[k]);
    if (it != r.index.end()) {
      r.value[static_cast<std::size_t>(it - r.index.begin())] += value[k];
    } else {
      r.index.push_back(index[k]);
      r.value.push_back(value[k]);
    }
  }
  rows_.push_back(std::move(r));
  return static_cast<int>(rows_.size()) - 1;
}

int LinearProgram::add_row(std::initializer_list<std::pair<int, double>> terms, Sense sense, double rhs,
                           std::string name) {
  std::vector<int> idx;
  std::vector<double> val;
  for (const auto& [i, v] : terms) {
    idx.push_back(i);
    val.push_back(v);
  }
  return add_row(idx, val, sense, rhs, std::move(name));
}

int LinearProgram::append_cut(const Cut& cut) {
  if (cut.arity != num_variables()) {
    throw Error(ErrorKind::DimensionMismatch, "cut arity " + std::to_string(cut.arity) + " vs " +
                                                  std::to_string(num_variables()) + " columns");
  }
  return add_row(cut.index, cut.value, cut.sense, cut.rhs, to_string(cut.source));
}

void LinearProgram::set_bounds(int var, double lb, double ub) {
  lb_.at(static_cast<std::size_t>(var)) = lb;
  ub_.at(static_cast<std::size_t>(var)) = ub;
}

void LinearProgram::set_coefficient(int row, int var, double value) {
  auto& r = rows_.at(static_cast<std::size_t>(row));
  auto it = std::find(r.index.begin(), r.index.end(), var);
  if (it != r.index.end()) {
    r.value[static_cast<std::size_t>(it - r.index.begin())] = value;
  } else if (value != 0.0) {
    r.index.push_back(var);
    r.value.push_back(value);
  }
}

void LinearProgram::set_row(int row, std::span<const int> index, std::span<const double> value, double rhs) {
  auto& r = rows_.at(static_cast<std::size_t>(row));
  r.index.assign(index.begin(), index.end());
  r.value.assign(value.begin(), value.end());
  r.rhs = rhs;
}

double LinearProgram::row_activity(int i, const Eigen::VectorXd& x) const {
  const Row& r = rows_[static_cast<std::size_t>(i)];
  double s = 0.0;
  for (std::size_t k = 0; k < r.index.size(); ++k) s += r.value[k] * x[r.index[k]];
  return s;
}

double LinearProgram::objective(const Eigen::VectorXd& x) const {
  double s = 0.0;
  for (std::size_t j = 0; j < cost_.size(); ++j) s += cost_[j] * x[static_cast<Eigen::Index>(j)];
  return s;
}

void LinearProgram::write_mps(std::ostream& os, const std::string& problem_name) const {
  auto col = [](int j) { return "C" + std::to_string(j); };
  auto rowname = [](int i) { return "R" + std::to_string(i); };
  os.precision(17);
  os << "NAME " << problem_name << "\nROWS\n N  COST\n";
  for (int i = 0; i < num_rows(); ++i) {
    const char* s = rows_[static_cast<std::size_t>(i)].sense == Sense::LessEqual
                        ? "L"
                        : (rows_[static_cast<std::size_t>(i)].sense == Sense::GreaterEqual ? "G" : "E");
    os << ' ' << s << "  " << rowname(i) << '\n';
  }
  std::vector<std::vector<std::pair<int, double>>> by_col(static_cast<std::size_t>(num_variables()));
  for (int i = 0; i < num_rows(); ++i) {
    const Row& r = rows_[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < r.index.size(); ++k) by_col[static_cast<std::size_t>(r.index[k])].push_back({i, r.value[k]});
  }
  os << "COLUMNS\n";
  for (int j = 0; j < num_variables(); ++j) {
    if (cost_[static_cast<std::size_t>(j)] != 0.0) os << "    " << col(j) << " COST " << cost_[static_cast<std::size_t>(j)] << '\n';
    for (const auto& [i, v] : by_col[static_cast<std::size_t>(j)]) os << "    " << col(j) << ' ' << rowname(i) << ' ' << v << '\n';
  }
  os << "RHS\n";
  for (int i = 0; i < num_rows(); ++i) {
    if (rows_[static_cast<std::size_t>(i)].rhs != 0.0) os << "    RHS " << rowname(i) << ' ' << rows_[static_cast<std::size_t>(i)].rhs << '\n';
  }
  os << "BOUNDS\n";
  for (int j = 0; j < num_variables(); ++j) {
    const double l = lb_[static_cast<std::size_t>(j)], u = ub_[static_cast<std::size_t>(j)];
    if (l == u) {
      os << " FX BND " << col(j) << ' ' << l << '\n';
      continue;
    }
    if (std::isinf(l) && std::isinf(u)) {
      os << " FR BND " << col(j) << '\n';
      continue;
    }
    if (std::isinf(l)) os << " MI BND " << col(j) << '\n';
    else if (l != 0.0) os << " LO BND " << col(j) << ' ' << l << '\n';
    if (!std::isinf(u)) os << " UP BND " << col(j) << ' ' << u << '\n';
  }
  os << "ENDATA\n";
}

// ---------------------------------------------------------------------------
// Bounded revised simplex
// ---------------------------------------------------------------------------

namespace {

constexpr int kStallPivots = 60;
constexpr double kMarginalInfeasibility = 1e-6;

class Simplex {
 public:
  Simplex(const LinearProgram& lp, const LpTolerances& tol) : lp_(lp), tol_(tol) {
    n_ = lp.num_variables();
    m_ = lp.num_rows();
    total_ = n_ + m_;
    A_.setZero(m_, n_);
    b_.resize(m_);
    row_scale_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      const Row& r = lp.row(i);
      double big = 0.0;
      for (double v : r.value) big = std::max(big, std::abs(v));
      const double s = big > 0.0 ? 1.0 / big : 1.0;
      row_scale_[i] = s;
      for (std::size_t k = 0; k < r.index.size(); ++k) A_(i, r.index[k]) += r.value[k] * s;
      b_[i] = r.rhs * s;
    }
    cost_scale_ = 0.0;
    for (int j = 0; j < n_; ++j) cost_scale_ = std::max(cost_scale_, std::abs(lp.cost(j)));
    if (cost_scale_ == 0.0) cost_scale_ = 1.0;
    c_.setZero(total_);
    lo_.resize(total_);
    hi_.resize(total_);
    for (int j = 0; j < n_; ++j) {
      c_[j] = lp.cost(j) / cost_scale_;
      lo_[j] = lp.lower(j);
      hi_[j] = lp.upper(j);
    }
    for (int i = 0; i < m_; ++i) {
      switch (lp.row(i).sense) {
        case Sense::LessEqual: lo_[n_ + i] = 0.0; hi_[n_ + i] = kInf; break;
        case Sense::GreaterEqual: lo_[n_ + i] = -kInf; hi_[n_ + i] = 0.0; break;
        case Sense::Equal: lo_[n_ + i] = 0.0; hi_[n_ + i] = 0.0; break;
      }
    }
  }

  LpSolution run(const Basis* warm) {
    LpSolution out;
    for (int j = 0; j < total_; ++j) {
      if (lo_[j] > hi_[j] + tol_.feasibility) {
        out.status = LpStatus::Infeasible;
        out.x = Eigen::VectorXd::Zero(n_);
        out.duals = Eigen::VectorXd::Zero(m_);
        out.reduced_costs = Eigen::VectorXd::Zero(n_);
        return out;
      }
    }
    const bool warm_used = warm && load_basis(*warm);
    if (!warm_used) cold_basis();
    if (!refactor()) {
      cold_basis();
      refactor();
    }
    LpStatus status = iterate();
    if (status == LpStatus::IterationLimit && warm_used) {
      // a bad warm basis should not sink the solve
      iterations_ = 0;
      cold_basis();
      refactor();
      status = iterate();
    }
    out.status = status;
    finish(out);
    return out;
  }

 private:
  const LinearProgram& lp_;
  const LpTolerances& tol_;
  int n_ = 0, m_ = 0, total_ = 0;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_, row_scale_, c_, lo_, hi_;
  double cost_scale_ = 1.0;
  std::vector<VarStatus> status_;
  std::vector<int> head_;  // basic variable per basis position
  Eigen::VectorXd x_;
  Eigen::MatrixXd binv_;
  int since_refactor_ = 0;
  int iterations_ = 0;
  bool fresh_ = false;

  VarStatus nonbasic_status_for(int j, VarStatus wanted) const {
    const bool lf = std::isfinite(lo_[j]), uf = std::isfinite(hi_[j]);
    if (lf && uf && lo_[j] == hi_[j]) return VarStatus::Fixed;
    switch (wanted) {
      case VarStatus::AtUpper:
        if (uf) return VarStatus::AtUpper;
        return lf ? VarStatus::AtLower : VarStatus::Free;
      case VarStatus::Free:
        if (!lf && !uf) return VarStatus::Free;
        return lf ? VarStatus::AtLower : VarStatus::AtUpper;
      default:
        if (lf) return VarStatus::AtLower;
        return uf ? VarStatus::AtUpper : VarStatus::Free;
    }
  }

  double nonbasic_value(int j) const {
    switch (status_[static_cast<std::size_t>(j)]) {
      case VarStatus::AtLower:
      case VarStatus::Fixed: return lo_[j];
      case VarStatus::AtUpper: return hi_[j];
      default: return 0.0;
    }
  }

  void cold_basis() {
    status_.assign(static_cast<std::size_t>(total_), VarStatus::AtLower);
    for (int j = 0; j < n_; ++j) {
      // start at the bound nearest zero
      VarStatus want = VarStatus::AtLower;
      if (std::isfinite(lo_[j]) && std::isfinite(hi_[j])) {
        want = std::abs(lo_[j]) <= std::abs(hi_[j]) ? VarStatus::AtLower : VarStatus::AtUpper;
      } else if (!std::isfinite(lo_[j]) && std::isfinite(hi_[j])) {
        want = VarStatus::AtUpper;
      } else if (!std::isfinite(lo_[j])) {
        want = VarStatus::Free;
      }
      status_[static_cast<std::size_t>(j)] = nonbasic_status_for(j, want);
    }
    head_.resize(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_; ++i) {
      status_[static_cast<std::size_t>(n_ + i)] = VarStatus::Basic;
      head_[static_cast<std::size_t>(i)] = n_ + i;
    }
  }

  bool load_basis(const Basis& warm) {
    if (warm.n_structural != n_) return false;
    const int old_m = static_cast<int>(warm.status.size()) - n_;
    if (old_m < 0 || old_m > m_) return false;
    status_.assign(static_cast<std::size_t>(total_), VarStatus::Basic);
    for (int j = 0; j < n_ + old_m; ++j) status_[static_cast<std::size_t>(j)] = warm.status[static_cast<std::size_t>(j)];
    head_.clear();
    for (int j = 0; j < total_; ++j) {
      auto& s = status_[static_cast<std::size_t>(j)];
      if (s == VarStatus::Basic) {
        head_.push_back(j);
      } else {
        s = nonbasic_status_for(j, s);
      }
    }
    return static_cast<int>(head_.size()) == m_;
  }

  template <typename Vec>
  void column_times(int j, Vec&& out) const {
    if (j < n_) out = binv_ * A_.col(j);
    else out = binv_.col(j - n_);
  }

  double dot_column(const Eigen::VectorXd& y, int j) const {
    if (j < n_) return y.dot(A_.col(j));
    return y[j - n_];
  }

  bool refactor() {
    since_refactor_ = 0;
    if (m_ == 0) {
      binv_.resize(0, 0);
      recompute_x();
      fresh_ = true;
      return true;
    }
    // Basic slacks are unit columns, so only the block of structural columns
    // against the rows without a basic slack needs a factorization:
    //   x_S = M r_R with M = A_RS^-1, and x_slack(i) = r_i - A_iS x_S.
    std::vector<int> spos, scol, krow, kpos;
    std::vector<char> covered(static_cast<std::size_t>(m_), 0);
    for (int r = 0; r < m_; ++r) {
      const int j = head_[static_cast<std::size_t>(r)];
      if (j < n_) {
        spos.push_back(r);
        scol.push_back(j);
      } else {
        covered[static_cast<std::size_t>(j - n_)] = 1;
        krow.push_back(j - n_);
        kpos.push_back(r);
      }
    }
    std::vector<int> rrow;
    for (int i = 0; i < m_; ++i)
      if (!covered[static_cast<std::size_t>(i)]) rrow.push_back(i);
    const int k = static_cast<int>(scol.size());
    if (static_cast<int>(rrow.size()) != k) return false;
    binv_.setZero(m_, m_);
    for (std::size_t t = 0; t < krow.size(); ++t) binv_(kpos[t], krow[t]) = 1.0;
    if (k > 0) {
      Eigen::MatrixXd ars(k, k);
      for (int c = 0; c < k; ++c)
        for (int r = 0; r < k; ++r) ars(r, c) = A_(rrow[static_cast<std::size_t>(r)], scol[static_cast<std::size_t>(c)]);
      // partial pivoting is enough here; a pivot that is tiny relative to the
      // largest one flags a (numerically) singular basis
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(ars);
      const Eigen::VectorXd piv = lu.matrixLU().diagonal().cwiseAbs();
      if (!(piv.minCoeff() > 1e-11 * std::max(1.0, piv.maxCoeff()))) return false;
      const Eigen::MatrixXd minv = lu.inverse();
      Eigen::MatrixXd aks(static_cast<Eigen::Index>(krow.size()), k);
      for (int c = 0; c < k; ++c)
        for (std::size_t r = 0; r < krow.size(); ++r) aks(static_cast<Eigen::Index>(r), c) = A_(krow[r], scol[static_cast<std::size_t>(c)]);
      const Eigen::MatrixXd km = aks * minv;
      for (int c = 0; c < k; ++c) {
        const int col = rrow[static_cast<std::size_t>(c)];
        for (int r = 0; r < k; ++r) binv_(spos[static_cast<std::size_t>(r)], col) = minv(r, c);
        for (std::size_t r = 0; r < krow.size(); ++r) binv_(kpos[r], col) = -km(static_cast<Eigen::Index>(r), c);
      }
    }
    recompute_x();
    fresh_ = true;
    return true;
  }

  void recompute_x() {
    x_.resize(total_);
    Eigen::VectorXd rhs = b_;
    for (int j = 0; j < total_; ++j) {
      if (status_[static_cast<std::size_t>(j)] == VarStatus::Basic) continue;
      const double v = nonbasic_value(j);
      x_[j] = v;
      if (v == 0.0) continue;
      if (j < n_) rhs -= A_.col(j) * v;
      else rhs[j - n_] -= v;
    }
    if (m_ > 0) {
      Eigen::VectorXd xb = binv_ * rhs;
      for (int r = 0; r < m_; ++r) x_[head_[static_cast<std::size_t>(r)]] = xb[r];
    }
  }

  LpStatus iterate() {
    const double ftol = tol_.feasibility;
    const double otol = tol_.optimality;
    int degenerate = 0;
    bool bland = false;
    Eigen::VectorXd cb(m_), y(m_), w(m_);
    std::vector<char> rejected(static_cast<std::size_t>(total_), 0);
    bool any_rejected = false;
    // best merit per phase; a phase change alone is not progress, since
    // marginal infeasibility can toggle phases on every pivot
    double stall_best[2] = {kInf, kInf};
    bool stall_prev = false;
    int stall_count = 0;
    int marginal_repairs = 0;
    for (;;) {
      if (iterations_ >= tol_.max_pivots) return LpStatus::IterationLimit;
      if (since_refactor_ >= tol_.refactor_interval) {
        if (!refactor()) {
          cold_basis();
          if (!refactor()) return LpStatus::IterationLimit;
        }
      }

      bool phase1 = false;
      for (int r = 0; r < m_; ++r) {
        const int j = head_[static_cast<std::size_t>(r)];
        if (x_[j] < lo_[j] - ftol) {
          cb[r] = -1.0;
          phase1 = true;
        } else if (x_[j] > hi_[j] + ftol) {
          cb[r] = 1.0;
          phase1 = true;
        } else {
          cb[r] = 0.0;
        }
      }
      if (!phase1) {
        for (int r = 0; r < m_; ++r) cb[r] = c_[head_[static_cast<std::size_t>(r)]];
      }
      // Tiny but nonzero steps can cycle under the relaxed ratio test without
      // tripping the degeneracy counter, so watch the merit itself.
      {
        double merit = 0.0;
        if (phase1) {
          for (int r = 0; r < m_; ++r) {
            const int j = head_[static_cast<std::size_t>(r)];
            merit += std::max(0.0, lo_[j] - x_[j]) + std::max(0.0, x_[j] - hi_[j]);
          }
        } else {
          for (int j = 0; j < total_; ++j) merit += c_[j] * x_[j];
        }
        double& best_here = stall_best[phase1 ? 1 : 0];
        // a new phase 1 episode measures progress from where it starts
        if (phase1 && !stall_prev) best_here = kInf;
        const bool first = best_here == kInf;
        stall_prev = phase1;
        if (first || merit < best_here - 1e-9 * (1.0 + std::abs(best_here))) {
          // entering phase 1 is not progress; the first phase 2 value is
          if (!first || !phase1) stall_count = 0;
          best_here = merit;
        } else if (++stall_count > kStallPivots) {
          bland = true;
        }
      }
      if (m_ > 0) y.noalias() = binv_.transpose() * cb;

      // pricing
      int enter = -1;
      double enter_dir = 0.0;
      double best = 0.0;
      for (int j = 0; j < total_; ++j) {
        const VarStatus s = status_[static_cast<std::size_t>(j)];
        if (s == VarStatus::Basic || s == VarStatus::Fixed || rejected[static_cast<std::size_t>(j)]) continue;
        const double cj = phase1 ? 0.0 : c_[j];
        const double d = cj - (m_ > 0 ? dot_column(y, j) : 0.0);
        double dir = 0.0;
        if (s == VarStatus::AtLower && d < -otol) dir = 1.0;
        else if (s == VarStatus::AtUpper && d > otol) dir = -1.0;
        else if (s == VarStatus::Free && std::abs(d) > otol) dir = d < 0.0 ? 1.0 : -1.0;
        if (dir == 0.0) continue;
        if (bland) {
          enter = j;
          enter_dir = dir;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          enter = j;
          enter_dir = dir;
        }
      }

      if (enter < 0) {
        if (any_rejected && !fresh_) {
          std::fill(rejected.begin(), rejected.end(), 0);
          any_rejected = false;
        }
        if (!fresh_) {
          if (!refactor()) {
            cold_basis();
            if (!refactor()) return LpStatus::IterationLimit;
          }
          // Nearly parallel rows can leave a dual feasible basis whose exact
          // primal sits just outside the bounds, and repairing it only leads
          // back here. Accept it the second time round.
          if (!phase1) {
            double worst = 0.0;
            for (int r = 0; r < m_; ++r) {
              const int j = head_[static_cast<std::size_t>(r)];
              worst = std::max({worst, lo_[j] - x_[j], x_[j] - hi_[j]});
            }
            if (worst > ftol && worst <= kMarginalInfeasibility && ++marginal_repairs > 1) return LpStatus::Optimal;
          }
          continue;
        }
        return phase1 ? LpStatus::Infeasible : LpStatus::Optimal;
      }

      if (m_ > 0) column_times(enter, w);

      // ratio test
      auto bound_target = [&](int r, double rate, double& exact, double& relaxed, double& target) -> bool {
        const int j = head_[static_cast<std::size_t>(r)];
        const double xj = x_[j];
        if (phase1 && xj < lo_[j] - ftol) {
          if (rate <= 0.0) return false;
          target = lo_[j];
          exact = (lo_[j] - xj) / rate;
          relaxed = (lo_[j] - xj + ftol) / rate;
          return true;
        }
        if (phase1 && xj > hi_[j] + ftol) {
          if (rate >= 0.0) return false;
          target = hi_[j];
          exact = (xj - hi_[j]) / -rate;
          relaxed = (xj - hi_[j] + ftol) / -rate;
          return true;
        }
        if (rate < 0.0) {
          if (!std::isfinite(lo_[j])) return false;
          target = lo_[j];
          exact = (xj - lo_[j]) / -rate;
          relaxed = (xj - lo_[j] + ftol) / -rate;
          return true;
        }
        if (!std::isfinite(hi_[j])) return false;
        target = hi_[j];
        exact = (hi_[j] - xj) / rate;
        relaxed = (hi_[j] - xj + ftol) / rate;
        return true;
      };

      int leave = -1;
      double step = kInf;
      double leave_target = 0.0;
      if (!bland) {
        double t_relaxed = kInf;
        for (int r = 0; r < m_; ++r) {
          if (std::abs(w[r]) < tol_.pivot) continue;
          double ex, rl, tg;
          if (bound_target(r, -enter_dir * w[r], ex, rl, tg)) t_relaxed = std::min(t_relaxed, rl);
        }
        double best_pivot = 0.0;
        for (int r = 0; r < m_; ++r) {
          if (std::abs(w[r]) < tol_.pivot) continue;
          double ex, rl, tg;
          if (!bound_target(r, -enter_dir * w[r], ex, rl, tg)) continue;
          if (ex <= t_relaxed && std::abs(w[r]) > best_pivot) {
            best_pivot = std::abs(w[r]);
            leave = r;
            step = std::max(ex, 0.0);
            leave_target = tg;
          }
        }
      } else {
        for (int r = 0; r < m_; ++r) {
          if (std::abs(w[r]) < tol_.pivot) continue;
          double ex, rl, tg;
          if (!bound_target(r, -enter_dir * w[r], ex, rl, tg)) continue;
          ex = std::max(ex, 0.0);
          const bool better = ex < step - 1e-12 ||
                              (ex <= step + 1e-12 && leave >= 0 &&
                               head_[static_cast<std::size_t>(r)] < head_[static_cast<std::size_t>(leave)]);
          if (leave < 0 || better) {
            leave = r;
            step = ex;
            leave_target = tg;
          }
        }
      }

      const double span = hi_[enter] - lo_[enter];
      const bool flip = std::isfinite(span) && span <= step;
      if (flip) step = span;

      if (!std::isfinite(step)) {
        if (!phase1) return LpStatus::Unbounded;
        // Phase 1 is bounded below, so only pivots under the tolerance can
        // leave the step open. Skip this column until the next pivot.
        rejected[static_cast<std::size_t>(enter)] = 1;
        any_rejected = true;
        continue;
      }

      ++iterations_;
      if (any_rejected) {
        std::fill(rejected.begin(), rejected.end(), 0);
        any_rejected = false;
      }
      if (step < 1e-12) {
        if (++degenerate >= tol_.degenerate_before_bland) bland = true;
      } else if (stall_count <= kStallPivots) {
        degenerate = 0;
        bland = false;
      }

      x_[enter] += enter_dir * step;
      if (step != 0.0) {
        for (int r = 0; r < m_; ++r) x_[head_[static_cast<std::size_t>(r)]] -= enter_dir * step * w[r];
      }
      fresh_ = false;

      if (flip) {
        status_[static_cast<std::size_t>(enter)] = enter_dir > 0.0 ? VarStatus::AtUpper : VarStatus::AtLower;
        x_[enter] = enter_dir > 0.0 ? hi_[enter] : lo_[enter];
        continue;
      }

      const int out = head_[static_cast<std::size_t>(leave)];
      x_[out] = leave_target;
      if (lo_[out] == hi_[out]) status_[static_cast<std::size_t>(out)] = VarStatus::Fixed;
      else status_[static_cast<std::size_t>(out)] = leave_target == lo_[out] ? VarStatus::AtLower : VarStatus::AtUpper;
      status_[static_cast<std::size_t>(enter)] = VarStatus::Basic;
      head_[static_cast<std::size_t>(leave)] = enter;

      const double pivot = w[leave];
      Eigen::RowVectorXd prow = binv_.row(leave) / pivot;
      w[leave] = 0.0;
      binv_.noalias() -= w * prow;
      binv_.row(leave) = prow;
      ++since_refactor_;
    }
  }

  void finish(LpSolution& out) {
    out.iterations = iterations_;
    out.x = x_.head(n_);
    // Snap nonbasic structurals exactly onto their bounds.
    for (int j = 0; j < n_; ++j) {
      if (status_[static_cast<std::size_t>(j)] != VarStatus::Basic) out.x[j] = nonbasic_value(j);
    }
    Eigen::VectorXd cb(m_);
    for (int r = 0; r < m_; ++r) cb[r] = c_[head_[static_cast<std::size_t>(r)]];
    Eigen::VectorXd y = m_ > 0 ? Eigen::VectorXd(binv_.transpose() * cb) : Eigen::VectorXd();
    out.duals.resize(m_);
    for (int i = 0; i < m_; ++i) out.duals[i] = y[i] * row_scale_[i] * cost_scale_;
    out.reduced_costs.resize(n_);
    for (int j = 0; j < n_; ++j) out.reduced_costs[j] = (c_[j] - (m_ > 0 ? y.dot(A_.col(j)) : 0.0)) * cost_scale_;
    out.objective = lp_.objective(out.x);
    out.basis.n_structural = n_;
    out.basis.status = status_;
  }
};

}  // namespace

LpSolution solve(const LinearProgram& lp, const Basis* warm_start, const LpTolerances& tol) {
  Simplex s(lp, tol);
  return s.run(warm_start);
}

SeparationResult solve_with_separation(LinearProgram& lp, std::span<const SeparationOracle> oracles,
                                       const Basis* warm_start, const LpTolerances& tol) {
  SeparationResult res;
  Basis basis;
  if (warm_start) basis = *warm_start;
  for (int round = 0;; ++round) {
    res.solution = solve(lp, basis.empty() ? nullptr : &basis, tol);
    res.objective_trace.push_back(res.solution.objective);
    if (!res.solution.optimal()) return res;
    std::vector<Cut> cuts;
    double worst = 0.0;
    for (const auto& oracle : oracles) {
      for (auto& cut : oracle(res.solution.x)) {
        worst = std::max(worst, cut.violation(res.solution.x));
        cuts.push_back(std::move(cut));
      }
    }
    res.max_violation = worst;
    if (cuts.empty()) return res;
    if (round >= tol.max_separation_rounds) {
      res.round_limit = true;
      return res;
    }
    for (const auto& cut : cuts) lp.append_cut(cut);
    res.cuts_added += static_cast<int>(cuts.size());
    res.rounds = round + 1;
    basis = res.solution.basis;
  }
}

}  // namespace hydro
