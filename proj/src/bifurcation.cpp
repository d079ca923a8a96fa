#include "sflow/bifurcation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "json_out.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace sflow {

using ordered_json = nlohmann::ordered_json;

namespace {

Vector restricted_eigenvalues(const SymmetricOperator& t_op, const Subspace& h) {
  const Matrix q = h.orthonormal_basis();
  const Matrix form = q.transpose() * t_op.ambient().gram() * t_op.matrix() * q;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (form + form.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues();
}

double smallest_magnitude(const Vector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().minCoeff();
}

}  // namespace

Margins admissibility_check(const SymmetricOperator& t_op, const Subspace& ha, const Subspace& hb,
                            const ToleranceProfile& tol) {
  if (!ha.ambient().same_space(t_op.ambient()) || !hb.ambient().same_space(t_op.ambient())) {
    throw Error(ErrorCode::ambient_mismatch, "subspaces and operator live in different spaces");
  }
  const Vector ea = restricted_eigenvalues(t_op, ha);
  const Vector eb = restricted_eigenvalues(t_op, hb);
  Margins m;
  m.a = smallest_magnitude(ea);
  m.b = smallest_magnitude(eb);
  const double sa = ea.size() ? ea.cwiseAbs().maxCoeff() : 1.0;
  const double sb = eb.size() ? eb.cwiseAbs().maxCoeff() : 1.0;
  m.admissible = !in_zero_band(m.a, sa, tol) && !in_zero_band(m.b, sb, tol);
  return m;
}

RestrictedForm restrict_form(const DiscreteSpace& space, const Matrix& hessian, double t) {
  RestrictedForm f;
  f.basis = constrained_basis(space, t);
  f.hessian = f.basis.transpose() * hessian * f.basis;
  f.gram = f.basis.transpose() * space.gram() * f.basis;
  return f;
}

Mesh aligned_mesh(int elements, int left, double t) {
  if (left < 1 || left >= elements) {
    throw Error(ErrorCode::invalid_argument, "aligned mesh needs elements on both sides of t");
  }
  if (!(t > 0.0 && t < 1.0)) throw Error(ErrorCode::out_of_interval, "aligned node must lie in (0, 1)");
  std::vector<double> x(static_cast<std::size_t>(elements) + 1);
  for (int i = 0; i <= left; ++i) x[static_cast<std::size_t>(i)] = t * i / left;
  const int right = elements - left;
  for (int i = 1; i <= right; ++i) {
    x[static_cast<std::size_t>(left + i)] = t + (1.0 - t) * i / right;
  }
  x[static_cast<std::size_t>(left)] = t;
  x.back() = 1.0;
  return Mesh(std::move(x));
}

namespace {

int aligned_left_count(int elements, double guess, Parity parity) {
  const double exact = guess * elements;
  int left = std::clamp(static_cast<int>(std::lround(exact)), 1, elements - 1);
  auto wanted = [&](int l) {
    if (parity == Parity::even_left) return l % 2 == 0;
    if (parity == Parity::even_right) return (elements - l) % 2 == 0;
    return true;
  };
  if (!wanted(left)) {
    const int up = left + 1;
    const int down = left - 1;
    const bool up_ok = up <= elements - 1 && wanted(up);
    const bool down_ok = down >= 1 && wanted(down);
    if (up_ok && (!down_ok || std::abs(up - exact) <= std::abs(down - exact))) {
      left = up;
    } else if (down_ok) {
      left = down;
    } else {
      throw Error(ErrorCode::invalid_argument, "no aligned mesh with the requested parity");
    }
  }
  return left;
}

}  // namespace

AlignedRoot refine_on_aligned_mesh(int elements, int n, const ProblemData& problem, double guess,
                                   Index k, Parity parity, const ToleranceProfile& tol) {
  const int left = aligned_left_count(elements, guess, parity);
  auto spectrum = [&](double tau) {
    const DiscreteSpace space(aligned_mesh(elements, left, tau), n);
    const RestrictedForm f = restrict_form(space, assemble_hessian(space, problem), tau);
    const SpectralDecomposition d = decompose_form(f.hessian, f.gram, tol, false);
    return SpectrumAt{d.eigenvalues, d.scale};
  };
  const double h = 1.0 / elements;
  double width = 2.0 * h;
  for (int attempt = 0; attempt < 5; ++attempt, width *= 2.0) {
    const double lo = std::max(guess - width, 0.5 * left / double(elements));
    const double hi = std::min(guess + width, 1.0 - 0.5 * (elements - left) / double(elements));
    if (!(lo < guess && guess < hi)) break;
    const SpectrumAt slo = spectrum(lo);
    const SpectrumAt shi = spectrum(hi);
    if (k >= slo.eigenvalues.size()) break;
    if (slo.eigenvalues(k) * shi.eigenvalues(k) >= 0.0) continue;
    AlignedRoot root;
    root.t = refine_eigenvalue_root(spectrum, lo, hi, k, tol);
    root.left_elements = left;
    root.index = k;
    const SpectrumAt s = spectrum(root.t);
    for (Index i = 0; i < s.eigenvalues.size(); ++i) {
      if (in_zero_band(s.eigenvalues(i), s.scale, tol)) ++root.kernel_dim;
    }
    return root;
  }
  std::ostringstream msg;
  msg << "no sign change of eigenvalue " << k << " near t = " << guess << " on aligned meshes";
  throw Error(ErrorCode::subdivision_limit, msg.str());
}

namespace {

ProjectionFamily make_projector(const DiscreteSpace& space, Interval interval, ProjectionRoute route,
                                const ToleranceProfile& tol) {
  switch (route) {
    case ProjectionRoute::direct:
      return direct_projector(space, tol);
    case ProjectionRoute::kernel:
      return kernel_projector(space, tol);
    case ProjectionRoute::chi: {
      const double h = space.mesh().max_width();
      const double lo = interval.a - 2.0 * h > 0.0 ? interval.a - 2.0 * h : 0.5 * interval.a;
      const double hi = interval.b + 2.0 * h < 1.0 ? interval.b + 2.0 * h : 0.5 * (1.0 + interval.b);
      return chi_projector(space, smoothstep_cutoff(lo, hi), tol);
    }
    case ProjectionRoute::complement:
    default:
      return complement_projector(space, tol);
  }
}

bool identity_coefficient(const DiscreteSpace& space, const ProblemData& problem) {
  const Mesh& mesh = space.mesh();
  const GaussRule& q = gauss3();
  const Matrix id = Matrix::Identity(problem.n, problem.n);
  for (int e = 0; e < mesh.elements(); ++e) {
    for (double p : q.points) {
      if ((problem.A(mesh.node(e) + p * mesh.width(e)) - id).cwiseAbs().maxCoeff() > 1e-14) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

BifurcationReport detect(const DiscreteSpace& space, const ProblemData& problem, Interval interval,
                         const DetectControl& control) {
  if (!(interval.a > 0.0 && interval.a < interval.b && interval.b < 1.0)) {
    throw Error(ErrorCode::out_of_interval, "interval must satisfy 0 < a < b < 1");
  }
  const ToleranceProfile& tol = control.scan.tol;
  const Matrix hessian = assemble_hessian(space, problem);
  const SymmetricOperator t_op = riesz_operator(space, hessian);

  BifurcationReport report;
  report.interval = interval;
  report.mesh_elements = space.mesh().elements();
  report.n = space.n();
  report.problem = problem.label;
  report.margins = admissibility_check(t_op, constrained_subspace(space, interval.a),
                                       constrained_subspace(space, interval.b), tol);
  if (!report.margins.admissible) {
    std::ostringstream msg;
    msg << "path is not admissible: restriction margins " << report.margins.a << " at a = "
        << interval.a << ", " << report.margins.b << " at b = " << interval.b;
    throw Error(ErrorCode::degenerate_endpoint, msg.str());
  }

  const OperatorPath path =
      build_L_path(space, t_op, make_projector(space, interval, control.route, tol), interval);
  const SpectralFlowResult flow = spectral_flow(path, control.scan);
  report.sfl = flow.value;
  report.morse_a = flow.morse_a;
  report.morse_b = flow.morse_b;
  report.curves = flow.samples;

  int unrefined = 0;
  for (const Crossing& c : flow.crossings) {
    Candidate cand;
    cand.t = c.t;
    cand.t_path = c.t;
    cand.lo = c.lo;
    cand.hi = c.hi;
    cand.bracket_width = c.hi - c.lo;
    cand.sign = c.sign;
    cand.kernel_dim = std::max(1, c.kernel_dim);
    cand.index = c.index;
    cand.slope = c.eigenvalue_slope_estimate;
    if (control.refine_aligned && c.sign != 0) {
      try {
        const AlignedRoot root = refine_on_aligned_mesh(space.mesh().elements(), space.n(), problem,
                                                        c.t, c.index, Parity::any, tol);
        cand.t = root.t;
        cand.refined = true;
        cand.aligned_left_elements = root.left_elements;
        cand.kernel_dim = std::max(1, root.kernel_dim);
      } catch (const Error&) {
        ++unrefined;
      }
    }
    report.candidates.push_back(cand);
  }

  int m = 0;
  for (const Candidate& c : report.candidates) m = std::max(m, c.kernel_dim);
  report.count_lower_bound = m > 0 ? std::labs(report.sfl) / m : 0;

  report.hypotheses.finite_codimension = true;
  report.hypotheses.compact_perturbation = identity_coefficient(space, problem);
  report.hypotheses.analytic = problem.analytic;
  report.count_caveat = !problem.analytic;

  report.notes.push_back("H_t has codimension " + std::to_string(space.n()) +
                         " (finite-codimension hypothesis holds)");
  report.notes.push_back(report.hypotheses.compact_perturbation
                             ? "A is the identity: T = I + compact form holds"
                             : "A is not the identity: only the finite-codimension form applies");
  if (report.count_caveat) {
    report.notes.push_back(
        "coefficients are tabulated: analyticity is unconfirmed, count_lower_bound is a caveat");
  }
  if (report.sfl != 0) {
    report.notes.push_back("sfl != 0: a bifurcation point lies in (a, b)");
  } else if (!report.candidates.empty()) {
    report.notes.push_back("sfl = 0 with crossings: the signed crossings cancel");
  }
  if (unrefined > 0) {
    report.notes.push_back(std::to_string(unrefined) +
                           " candidate(s) kept the fixed-mesh location (no aligned refinement)");
  }
  check_report(report);
  return report;
}

void check_report(const BifurcationReport& r) {
  if (r.sfl != static_cast<long>(r.morse_a) - static_cast<long>(r.morse_b)) {
    throw Error(ErrorCode::internal, "report: sfl differs from morse_a - morse_b");
  }
  int m = 0;
  long signed_sum = 0;
  for (const Candidate& c : r.candidates) {
    if (c.kernel_dim < 1) throw Error(ErrorCode::internal, "report: candidate without kernel");
    m = std::max(m, c.kernel_dim);
    signed_sum += c.sign;
  }
  if (signed_sum != r.sfl) throw Error(ErrorCode::internal, "report: crossing signs do not sum to sfl");
  if (r.sfl != 0 && m < 1) throw Error(ErrorCode::internal, "report: sfl != 0 without candidates");
  const long expected = m > 0 ? std::labs(r.sfl) / m : 0;
  if (r.count_lower_bound != expected) {
    throw Error(ErrorCode::internal, "report: count_lower_bound differs from floor(|sfl| / m)");
  }
}

KernelCondition kernel_condition(const DiscreteSpace& space, const SymmetricOperator& t_op, double t,
                                 const ToleranceProfile& tol) {
  KernelCondition out;
  const OperatorPath path = build_L_path(space, t_op, complement_projector(space, tol), {t, t});
  out.kernel_dimension = kernel_dimension(path.evaluate(t), tol);
  const Matrix image = t_op.matrix() * constrained_basis(space, t);
  const Matrix normal = space.inner().solve(evaluation_map(space, t).transpose());
  out.intersection_dimension = intersection_dimension(image, normal, space.inner(), tol);
  out.agree = out.kernel_dimension == out.intersection_dimension;
  return out;
}

MorseCriterion morse_criterion(const DiscreteSpace& space, const ProblemData& problem, double a,
                               double b, const ToleranceProfile& tol) {
  const Mesh& mesh = space.mesh();
  const GaussRule& q = gauss3();
  for (int e = 0; e < mesh.elements(); ++e) {
    for (double p : q.points) {
      const double x = mesh.node(e) + p * mesh.width(e);
      Eigen::LLT<Matrix> llt(problem.A(x));
      if (llt.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "A(x) is not positive definite at x = " << x;
        throw Error(ErrorCode::precondition_violated, msg.str());
      }
    }
  }
  const Matrix hessian = assemble_hessian(space, problem);
  auto index = [&](double t) {
    const Matrix qb = constrained_subspace(space, t).orthonormal_basis();
    const Matrix form = qb.transpose() * hessian * qb;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (form + form.transpose()), Eigen::EigenvaluesOnly);
    const Vector& ev = eig.eigenvalues();
    const double scale = ev.size() ? std::max(1.0, ev.cwiseAbs().maxCoeff()) : 1.0;
    Index count = 0;
    for (Index i = 0; i < ev.size(); ++i) {
      if (ev(i) < 0.0 && !in_zero_band(ev(i), scale, tol)) ++count;
    }
    return count;
  };
  MorseCriterion out;
  out.morse_a = index(a);
  out.morse_b = a == b ? out.morse_a : index(b);
  out.differs = out.morse_a != out.morse_b;
  return out;
}

// ------------------------------------------------------------------- JSON

std::string report_to_json(const BifurcationReport& r) {
  ordered_json j;
  j["kind"] = "bifurcation_report";
  j["version"] = 1;
  j["problem"] = r.problem;
  j["n"] = r.n;
  j["mesh_elements"] = r.mesh_elements;
  j["interval"] = {{"a", r.interval.a}, {"b", r.interval.b}};
  j["sfl"] = r.sfl;
  j["morse_a"] = r.morse_a;
  j["morse_b"] = r.morse_b;
  j["admissible"] = r.margins.admissible;
  j["margins"] = {{"a", r.margins.a}, {"b", r.margins.b}};
  ordered_json cands = ordered_json::array();
  for (const Candidate& c : r.candidates) {
    cands.push_back({{"t", c.t},
                     {"t_path", c.t_path},
                     {"lo", c.lo},
                     {"hi", c.hi},
                     {"bracket_width", c.bracket_width},
                     {"sign", c.sign},
                     {"kernel_dim", c.kernel_dim},
                     {"index", c.index},
                     {"slope", c.slope},
                     {"refined", c.refined},
                     {"aligned_left_elements", c.aligned_left_elements}});
  }
  j["candidates"] = cands;
  j["count_lower_bound"] = r.count_lower_bound;
  j["count_caveat"] = r.count_caveat;
  j["hypotheses"] = {{"finite_codimension", r.hypotheses.finite_codimension},
                     {"compact_perturbation", r.hypotheses.compact_perturbation},
                     {"analytic", r.hypotheses.analytic}};
  j["notes"] = r.notes;
  ordered_json curves = ordered_json::array();
  for (const SpectrumSample& s : r.curves) {
    std::vector<double> lowest(s.lowest.data(), s.lowest.data() + s.lowest.size());
    curves.push_back({{"t", s.t}, {"morse", s.morse}, {"lowest", lowest}});
  }
  j["curves"] = curves;
  return detail::dump17(j);
}

BifurcationReport report_from_json(const std::string& text) {
  BifurcationReport r;
  try {
    const ordered_json j = ordered_json::parse(text);
    if (j.at("kind").get<std::string>() != "bifurcation_report") {
      throw Error(ErrorCode::invalid_argument, "not a bifurcation report");
    }
    r.problem = j.at("problem").get<std::string>();
    r.n = j.at("n").get<int>();
    r.mesh_elements = j.at("mesh_elements").get<int>();
    r.interval.a = j.at("interval").at("a").get<double>();
    r.interval.b = j.at("interval").at("b").get<double>();
    r.sfl = j.at("sfl").get<long>();
    r.morse_a = j.at("morse_a").get<Index>();
    r.morse_b = j.at("morse_b").get<Index>();
    r.margins.admissible = j.at("admissible").get<bool>();
    r.margins.a = j.at("margins").at("a").get<double>();
    r.margins.b = j.at("margins").at("b").get<double>();
    for (const auto& c : j.at("candidates")) {
      Candidate x;
      x.t = c.at("t").get<double>();
      x.t_path = c.at("t_path").get<double>();
      x.lo = c.at("lo").get<double>();
      x.hi = c.at("hi").get<double>();
      x.bracket_width = c.at("bracket_width").get<double>();
      x.sign = c.at("sign").get<int>();
      x.kernel_dim = c.at("kernel_dim").get<int>();
      x.index = c.at("index").get<Index>();
      x.slope = c.at("slope").get<double>();
      x.refined = c.at("refined").get<bool>();
      x.aligned_left_elements = c.at("aligned_left_elements").get<int>();
      r.candidates.push_back(x);
    }
    r.count_lower_bound = j.at("count_lower_bound").get<long>();
    r.count_caveat = j.at("count_caveat").get<bool>();
    r.hypotheses.finite_codimension = j.at("hypotheses").at("finite_codimension").get<bool>();
    r.hypotheses.compact_perturbation = j.at("hypotheses").at("compact_perturbation").get<bool>();
    r.hypotheses.analytic = j.at("hypotheses").at("analytic").get<bool>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    for (const auto& s : j.at("curves")) {
      SpectrumSample x;
      x.t = s.at("t").get<double>();
      x.morse = s.at("morse").get<Index>();
      const auto v = s.at("lowest").get<std::vector<double>>();
      x.lowest = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
      r.curves.push_back(std::move(x));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("malformed report JSON: ") + e.what());
  }
  check_report(r);
  return r;
}

std::string eigencurves_csv(const BifurcationReport& report) {
  std::size_t k = 0;
  for (const SpectrumSample& s : report.curves) k = std::max<std::size_t>(k, s.lowest.size());
  std::string out = "t";
  for (std::size_t i = 1; i <= k; ++i) out += ",lambda_" + std::to_string(i);
  out += "\n";
  char buf[64];
  for (const SpectrumSample& s : report.curves) {
    std::snprintf(buf, sizeof buf, "%.17g", s.t);
    out += buf;
    for (std::size_t i = 0; i < k; ++i) {
      out += ",";
      if (i < static_cast<std::size_t>(s.lowest.size())) {
        std::snprintf(buf, sizeof buf, "%.17g", s.lowest(static_cast<Index>(i)));
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace sflow
