#include "sflow/specflow.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace sflow {

SymmetricOperator::SymmetricOperator(InnerProductSpace ambient, Matrix matrix,
                                     const ToleranceProfile& tol)
    : ambient_(std::move(ambient)), matrix_(std::move(matrix)) {
  if (matrix_.rows() != ambient_.dim() || matrix_.cols() != ambient_.dim()) {
    throw Error(ErrorCode::ambient_mismatch, "operator size does not match ambient space");
  }
  const double bound = tol.selfadjoint * ambient_.gram().norm() * (1.0 + matrix_.norm());
  if (ambient_.selfadjoint_defect(matrix_) > bound) {
    throw Error(ErrorCode::not_selfadjoint, "operator is not gram-selfadjoint");
  }
}

bool in_zero_band(double lambda, double scale, const ToleranceProfile& tol) {
  return std::abs(lambda) < tol.zero_band * std::max(1.0, scale);
}

namespace {

void classify(SpectralDecomposition& d, const ToleranceProfile& tol) {
  const Vector& ev = d.eigenvalues;
  d.scale = ev.size() > 0 ? std::max(1.0, ev.cwiseAbs().maxCoeff()) : 1.0;
  d.negative_count = d.zero_count = d.positive_count = 0;
  for (Index i = 0; i < ev.size(); ++i) {
    if (in_zero_band(ev(i), d.scale, tol)) {
      ++d.zero_count;
    } else if (ev(i) < 0.0) {
      ++d.negative_count;
    } else {
      ++d.positive_count;
    }
  }
}

}  // namespace

SpectralDecomposition decompose(const SymmetricOperator& op, const ToleranceProfile& tol,
                                bool vectors) {
  SpectralDecomposition d;
  if (op.dim() == 0) {
    d.eigenvalues = Vector(0);
    d.eigenvectors = Matrix(0, 0);
    return d;
  }
  Matrix c = op.ambient().similarity(op.matrix());
  c = 0.5 * (c + c.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(
      c, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::internal, "symmetric eigensolver did not converge");
  }
  d.eigenvalues = eig.eigenvalues();
  if (vectors) d.eigenvectors = op.ambient().from_orthonormal(eig.eigenvectors());
  classify(d, tol);
  return d;
}

SpectralDecomposition decompose_form(const Matrix& form, const Matrix& gram,
                                     const ToleranceProfile& tol, bool vectors) {
  SpectralDecomposition d;
  if (form.rows() == 0) {
    d.eigenvalues = Vector(0);
    return d;
  }
  const Matrix sym = 0.5 * (form + form.transpose());
  const Matrix gsym = 0.5 * (gram + gram.transpose());
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(
      sym, gsym, (vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly) | Eigen::Ax_lBx);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::internal, "generalized eigensolver failed");
  }
  d.eigenvalues = eig.eigenvalues();
  if (vectors) d.eigenvectors = eig.eigenvectors();
  classify(d, tol);
  return d;
}

Index morse_index(const SymmetricOperator& op, const ToleranceProfile& tol) {
  return decompose(op, tol, false).negative_count;
}

Index kernel_dimension(const SymmetricOperator& op, const ToleranceProfile& tol) {
  return decompose(op, tol, false).zero_count;
}

long relative_morse_index(const SymmetricOperator& s, const SymmetricOperator& t,
                          const ToleranceProfile& tol) {
  if (!s.ambient().same_space(t.ambient())) {
    throw Error(ErrorCode::ambient_mismatch, "operators live in different spaces");
  }
  const SpectralDecomposition ds = decompose(s, tol, true);
  const SpectralDecomposition dt = decompose(t, tol, true);
  if (ds.zero_count > 0 || dt.zero_count > 0) {
    throw Error(ErrorCode::degenerate_endpoint, "relative Morse index needs invertible operators");
  }
  const Index d = s.dim();
  const Matrix neg_s = ds.eigenvectors.leftCols(ds.negative_count);
  const Matrix pos_s = ds.eigenvectors.rightCols(d - ds.negative_count);
  const Matrix neg_t = dt.eigenvectors.leftCols(dt.negative_count);
  const Matrix pos_t = dt.eigenvectors.rightCols(d - dt.negative_count);
  const auto& amb = s.ambient();
  return static_cast<long>(intersection_dimension(neg_s, pos_t, amb, tol)) -
         static_cast<long>(intersection_dimension(pos_s, neg_t, amb, tol));
}

OperatorPath direct_sum(const OperatorPath& p, const OperatorPath& q) {
  if (p.interval.a != q.interval.a || p.interval.b != q.interval.b) {
    throw Error(ErrorCode::interval_mismatch, "direct sum needs paths on the same interval");
  }
  OperatorPath out;
  out.interval = p.interval;
  out.label = p.label + " (+) " + q.label;
  auto pe = p.evaluate;
  auto qe = q.evaluate;
  out.evaluate = [pe, qe](double t) {
    const SymmetricOperator x = pe(t);
    const SymmetricOperator y = qe(t);
    const Index n = x.dim();
    const Index m = y.dim();
    Matrix block = Matrix::Zero(n + m, n + m);
    block.topLeftCorner(n, n) = x.matrix();
    block.bottomRightCorner(m, m) = y.matrix();
    return SymmetricOperator(direct_sum(x.ambient(), y.ambient()), std::move(block));
  };
  return out;
}

double refine_eigenvalue_root(const std::function<SpectrumAt(double)>& spectrum, double lo,
                              double hi, Index k, const ToleranceProfile& tol,
                              int max_iterations) {
  SpectrumAt slo = spectrum(lo);
  SpectrumAt shi = spectrum(hi);
  double flo = slo.eigenvalues(k);
  double fhi = shi.eigenvalues(k);
  double best_t = std::abs(flo) < std::abs(fhi) ? lo : hi;
  double best_f = std::min(std::abs(flo), std::abs(fhi));
  if (flo * fhi > 0.0) return best_t;
  // Illinois variant of regula falsi.
  int side = 0;
  for (int it = 0; it < max_iterations; ++it) {
    const double target = 0.25 * tol.zero_band * std::max(1.0, std::max(slo.scale, shi.scale));
    if (best_f < target) break;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(hi))) {
      break;
    }
    double t = (lo * fhi - hi * flo) / (fhi - flo);
    if (!(t > lo && t < hi)) t = 0.5 * (lo + hi);
    const SpectrumAt st = spectrum(t);
    const double ft = st.eigenvalues(k);
    if (std::abs(ft) < best_f) {
      best_f = std::abs(ft);
      best_t = t;
    }
    if (ft == 0.0) break;
    if ((ft < 0.0) == (flo < 0.0)) {
      lo = t;
      flo = ft;
      slo = st;
      if (side == -1) fhi *= 0.5;
      side = -1;
    } else {
      hi = t;
      fhi = ft;
      shi = st;
      if (side == 1) flo *= 0.5;
      side = 1;
    }
  }
  return best_t;
}

namespace {

class Scanner {
 public:
  Scanner(const OperatorPath& path, const ScanControl& control)
      : path_(path), control_(control) {}

  const SpectrumAt& at(double t) {
    auto it = cache_.find(t);
    if (it != cache_.end()) return it->second;
    ++evaluations_;
    const SpectralDecomposition d = decompose(path_.evaluate(t), control_.tol, false);
    SpectrumAt s{d.eigenvalues, d.scale};
    return cache_.emplace(t, std::move(s)).first->second;
  }

  Index negatives(const SpectrumAt& s) const {
    Index n = 0;
    for (Index i = 0; i < s.eigenvalues.size(); ++i) {
      if (!in_zero_band(s.eigenvalues(i), s.scale, control_.tol) && s.eigenvalues(i) < 0.0) ++n;
    }
    return n;
  }

  Index zeros(const SpectrumAt& s) const {
    Index n = 0;
    for (Index i = 0; i < s.eigenvalues.size(); ++i) {
      if (in_zero_band(s.eigenvalues(i), s.scale, control_.tol)) ++n;
    }
    return n;
  }

  /// Evaluates near t, nudging inside (lo, hi) away from exact degeneracies.
  /// Returns NaN when the zero band covers every probe.
  double try_nondegenerate_near(double t, double lo, double hi) {
    if (zeros(at(t)) == 0) return t;
    const double w = hi - lo;
    for (double f : {1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.2, 0.3, 0.4, 0.45}) {
      for (double cand : {t + w * f, t - w * f}) {
        if (cand > lo && cand < hi && zeros(at(cand)) == 0) return cand;
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  double nondegenerate_near(double t, double lo, double hi) {
    const double r = try_nondegenerate_near(t, lo, hi);
    if (std::isnan(r)) {
      std::ostringstream msg;
      msg << "persistent degeneracy near t = " << t << " in (" << lo << ", " << hi << ")";
      throw Error(ErrorCode::subdivision_limit, msg.str());
    }
    return r;
  }

  void set_lipschitz(double l) { lipschitz_ = l; }

  void process(double lo, double hi, int depth) {
    const SpectrumAt slo = at(lo);
    const SpectrumAt shi = at(hi);
    const Index mlo = negatives(slo);
    const Index mhi = negatives(shi);
    const long delta = static_cast<long>(mlo) - static_cast<long>(mhi);
    const double w = hi - lo;
    Index hazards = 0;
    for (Index k = 0; k < slo.eigenvalues.size(); ++k) {
      const double x = slo.eigenvalues(k);
      const double y = shi.eigenvalues(k);
      if (x * y > 0.0 && std::abs(x) + std::abs(y) <= lipschitz_ * w) ++hazards;
    }
    if (delta == 0 && hazards == 0) return;
    if (delta == 0 && w <= 64.0 * control_.bracket) {
      if (resolve_touching(lo, hi, mlo)) return;
    }
    double mid = std::numeric_limits<double>::quiet_NaN();
    if (w > control_.bracket) mid = try_nondegenerate_near(0.5 * (lo + hi), lo, hi);
    // A bracket inside the zero band is as resolved as the tolerance allows.
    if (w <= control_.bracket || std::isnan(mid)) {
      if (delta != 0) {
        record_crossing(lo, hi, mlo, mhi);
      } else {
        Crossing c;
        c.lo = lo;
        c.hi = hi;
        c.t = 0.5 * (lo + hi);
        c.sign = 0;
        c.kernel_dim = static_cast<int>(hazards);
        c.index = mlo;
        crossings_.push_back(c);
      }
      return;
    }
    if (depth >= control_.max_depth) {
      throw Error(ErrorCode::subdivision_limit, "bisection depth exceeded");
    }
    process(lo, mid, depth + 1);
    process(mid, hi, depth + 1);
  }

  /// Decides a hazard-only bracket by sampling. Returns false when a pair of
  /// sign changes shows up and bisection has to continue.
  bool resolve_touching(double lo, double hi, Index mlo) {
    constexpr int samples = 9;
    const SpectrumAt slo = at(lo);
    const Index dim = slo.eigenvalues.size();
    std::vector<double> ts(samples);
    for (int i = 0; i < samples; ++i) ts[i] = lo + (hi - lo) * i / (samples - 1);
    double best_t = lo, best_f = std::numeric_limits<double>::infinity();
    int best_zeros = 0;
    for (double t : ts) {
      const SpectrumAt& st = at(t);
      if (negatives(st) != mlo && zeros(st) == 0) return false;
      for (Index k = 0; k < dim; ++k) {
        const double f = std::abs(st.eigenvalues(k)) / std::max(1.0, st.scale);
        if (f < best_f) {
          best_f = f;
          best_t = t;
          best_zeros = static_cast<int>(zeros(st));
        }
      }
    }
    if (best_zeros == 0) return true;
    Crossing c;
    c.lo = lo;
    c.hi = hi;
    c.t = best_t;
    c.sign = 0;
    c.kernel_dim = best_zeros;
    c.index = mlo;
    crossings_.push_back(c);
    return true;
  }

  void record_crossing(double lo, double hi, Index mlo, Index mhi) {
    Crossing c;
    c.lo = lo;
    c.hi = hi;
    c.sign = static_cast<int>(static_cast<long>(mlo) - static_cast<long>(mhi));
    const Index k = std::min(mlo, mhi);
    c.index = k;
    const SpectrumAt& slo = at(lo);
    const SpectrumAt& shi = at(hi);
    c.eigenvalue_slope_estimate = (shi.eigenvalues(k) - slo.eigenvalues(k)) / (hi - lo);
    auto spectrum = [this](double t) { return at(t); };
    c.t = refine_eigenvalue_root(spectrum, lo, hi, k, control_.tol);
    const Index z = zeros(at(c.t));
    c.kernel_dim = z > 0 ? static_cast<int>(z) : std::abs(c.sign);
    crossings_.push_back(c);
  }

  std::vector<Crossing>& crossings() { return crossings_; }
  int evaluations() const { return evaluations_; }

 private:
  const OperatorPath& path_;
  const ScanControl& control_;
  std::map<double, SpectrumAt> cache_;
  std::vector<Crossing> crossings_;
  double lipschitz_ = 0.0;
  int evaluations_ = 0;
};

}  // namespace

SpectralFlowResult spectral_flow(const OperatorPath& path, const ScanControl& control) {
  const double a = path.interval.a;
  const double b = path.interval.b;
  if (!(a < b)) throw Error(ErrorCode::invalid_argument, "path interval must satisfy a < b");
  if (control.grid < 1) throw Error(ErrorCode::invalid_argument, "scan grid must be positive");

  Scanner scan(path, control);
  SpectralFlowResult out;
  {
    const SpectrumAt& sa = scan.at(a);
    if (scan.zeros(sa) > 0) {
      std::ostringstream msg;
      msg << "operator at t = a = " << a << " has a kernel of dimension " << scan.zeros(sa);
      throw Error(ErrorCode::degenerate_endpoint, msg.str());
    }
    const SpectrumAt& sb = scan.at(b);
    if (scan.zeros(sb) > 0) {
      std::ostringstream msg;
      msg << "operator at t = b = " << b << " has a kernel of dimension " << scan.zeros(sb);
      throw Error(ErrorCode::degenerate_endpoint, msg.str());
    }
    out.morse_a = scan.negatives(sa);
    out.morse_b = scan.negatives(sb);
  }

  std::vector<double> grid(control.grid + 1);
  const double step = (b - a) / control.grid;
  grid.front() = a;
  grid.back() = b;
  for (int i = 1; i < control.grid; ++i) {
    grid[i] = scan.nondegenerate_near(a + i * step, a + (i - 0.5) * step, a + (i + 0.5) * step);
  }

  double lipschitz = control.lipschitz;
  if (lipschitz <= 0.0) {
    double slope = 0.0;
    for (int i = 0; i < control.grid; ++i) {
      const Vector& x = scan.at(grid[i]).eigenvalues;
      const Vector& y = scan.at(grid[i + 1]).eigenvalues;
      slope = std::max(slope, (y - x).cwiseAbs().maxCoeff() / (grid[i + 1] - grid[i]));
    }
    lipschitz = 2.0 * slope;
  }
  scan.set_lipschitz(lipschitz);

  for (int i = 0; i <= control.grid; ++i) {
    const SpectrumAt& s = scan.at(grid[i]);
    SpectrumSample sample;
    sample.t = grid[i];
    const Index k = std::min<Index>(control.curve_count, s.eigenvalues.size());
    sample.lowest = s.eigenvalues.head(k);
    sample.morse = scan.negatives(s);
    out.samples.push_back(std::move(sample));
  }

  for (int i = 0; i < control.grid; ++i) scan.process(grid[i], grid[i + 1], 0);

  out.crossings = std::move(scan.crossings());
  std::sort(out.crossings.begin(), out.crossings.end(),
            [](const Crossing& x, const Crossing& y) { return x.t < y.t; });
  // Brackets flanking a signed crossing trip the hazard test; drop them.
  const double reach = 4.0 * control.bracket;
  std::vector<Crossing> kept;
  for (const Crossing& c : out.crossings) {
    if (c.sign == 0) {
      bool flank = false;
      for (const Crossing& d : out.crossings) {
        if (d.sign != 0 && c.lo <= d.hi + reach && c.hi >= d.lo - reach) flank = true;
      }
      if (flank) continue;
    }
    kept.push_back(c);
  }
  out.crossings = std::move(kept);
  long total = 0;
  for (const Crossing& c : out.crossings) total += c.sign;
  out.value = total;
  out.evaluations = scan.evaluations();

  const long endpoint_difference =
      static_cast<long>(out.morse_a) - static_cast<long>(out.morse_b);
  if (out.value != endpoint_difference) {
    throw Error(ErrorCode::internal, "crossing count disagrees with endpoint Morse difference");
  }
  if (control.check_relative_index) {
    const long rel = relative_morse_index(path.evaluate(a), path.evaluate(b), control.tol);
    if (rel != out.value) {
      throw Error(ErrorCode::internal, "relative Morse index disagrees with spectral flow");
    }
  }
  return out;
}

}  // namespace sflow
