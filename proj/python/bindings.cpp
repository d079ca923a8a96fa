#include "sflow/bifurcation.hpp"
#include "sflow/cli.hpp"
#include "sflow/grassmann.hpp"
#include "sflow/hilbert_fem.hpp"
#include "sflow/ode_verify.hpp"
#include "sflow/specflow.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace sflow;

namespace {

ToleranceProfile tolerances(const py::dict& d) {
  ToleranceProfile tol;
  for (auto item : d) {
    const std::string key = py::str(item.first);
    const double v = item.second.cast<double>();
    if (key == "rank") tol.rank = v;
    else if (key == "zero_band") tol.zero_band = v;
    else if (key == "angle") tol.angle = v;
    else if (key == "projection") tol.projection = v;
    else if (key == "selfadjoint") tol.selfadjoint = v;
    else throw Error(ErrorCode::invalid_argument, "unknown tolerance '" + key + "'");
  }
  return tol;
}

ProjectionFamily projector(const DiscreteSpace& space, const std::string& route, Interval iv,
                           const ToleranceProfile& tol) {
  if (route == "complement") return complement_projector(space, tol);
  if (route == "direct") return direct_projector(space, tol);
  if (route == "kernel") return kernel_projector(space, tol);
  if (route == "chi") {
    const double h = space.mesh().max_width();
    return chi_projector(space, smoothstep_cutoff(std::max(0.5 * h, iv.a - 2 * h),
                                                  std::min(1 - 0.5 * h, iv.b + 2 * h)),
                         tol);
  }
  throw Error(ErrorCode::invalid_argument, "unknown projection route '" + route + "'");
}

ProjectionRoute route_of(const std::string& route) {
  if (route == "complement") return ProjectionRoute::complement;
  if (route == "direct") return ProjectionRoute::direct;
  if (route == "kernel") return ProjectionRoute::kernel;
  if (route == "chi") return ProjectionRoute::chi;
  throw Error(ErrorCode::invalid_argument, "unknown projection route '" + route + "'");
}

OperatorPath l_path(const DiscreteSpace& space, const ProblemData& problem, Interval iv,
                    const std::string& route, const ToleranceProfile& tol) {
  const SymmetricOperator t = riesz_operator(space, assemble_hessian(space, problem));
  return build_L_path(space, t, projector(space, route, iv, tol), iv);
}

py::dict crossing_dict(const Crossing& c) {
  py::dict d;
  d["t"] = c.t;
  d["sign"] = c.sign;
  d["kernel_dim"] = c.kernel_dim;
  d["index"] = c.index;
  d["slope"] = c.eigenvalue_slope_estimate;
  d["lo"] = c.lo;
  d["hi"] = c.hi;
  return d;
}

py::dict point_dict(const BranchPoint& p) {
  py::dict d;
  d["t"] = p.t;
  d["delta"] = p.delta;
  d["amplitude"] = p.amplitude;
  d["residual"] = p.residual;
  d["ft_residual"] = p.ft_residual;
  d["weak_residual"] = p.weak_residual;
  d["off_side_sup"] = p.off_side_sup;
  d["global_jump"] = p.global.jump;
  d["global"] = p.global.global;
  d["status"] = to_string(p.status);
  d["iterations"] = p.iterations;
  if (p.u) {
    d["nodes"] = Vector(Eigen::Map<const Vector>(p.u->space.mesh().nodes().data(),
                                                 static_cast<Index>(p.u->space.mesh().nodes().size())));
    d["values"] = p.u->nodal_values();
  }
  return d;
}

py::dict trace_dict(const BranchTrace& t) {
  py::dict d;
  d["side"] = to_string(t.side);
  d["critical_t"] = t.critical_t;
  d["candidate_t"] = t.candidate_t;
  d["left_elements"] = t.left_elements;
  d["supported_left"] = t.supported_left;
  d["all_trivial"] = t.all_trivial;
  d["verified"] = t.verified;
  d["exponent"] = t.exponent;
  py::list pts;
  for (const BranchPoint& p : t.points) pts.append(point_dict(p));
  d["points"] = pts;
  return d;
}

Side side_of(const std::string& s) {
  if (s == "plus") return Side::plus;
  if (s == "minus") return Side::minus;
  throw Error(ErrorCode::invalid_argument, "side must be 'plus' or 'minus'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spectral-flow bifurcation analysis for constrained semilinear ODE systems";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&]() { return py::object(py::exception<Error>(m, "Error", PyExc_RuntimeError)); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object type = error_type.get_stored();
      py::object inst = type(e.what());
      inst.attr("code") = to_string(e.code());
      PyErr_SetObject(type.ptr(), inst.ptr());
    }
  });

  py::class_<Mesh>(m, "Mesh")
      .def(py::init<std::vector<double>>(), py::arg("nodes"))
      .def_static("uniform", &Mesh::uniform, py::arg("elements"))
      .def_static("aligned", &aligned_mesh, py::arg("elements"), py::arg("left"), py::arg("t"))
      .def_property_readonly("elements", &Mesh::elements)
      .def_property_readonly("nodes", &Mesh::nodes)
      .def("locate", &Mesh::locate);

  py::class_<DiscreteSpace>(m, "Space")
      .def(py::init<Mesh, int>(), py::arg("mesh"), py::arg("n") = 1)
      .def(py::init([](int elements, int n) { return DiscreteSpace(Mesh::uniform(elements), n); }),
           py::arg("elements"), py::arg("n") = 1)
      .def_property_readonly("mesh", &DiscreteSpace::mesh)
      .def_property_readonly("n", &DiscreteSpace::n)
      .def_property_readonly("dof_count", &DiscreteSpace::dof_count)
      .def_property_readonly("gram", &DiscreteSpace::gram)
      .def("dof", &DiscreteSpace::dof, py::arg("node"), py::arg("component"));

  py::class_<ProblemData>(m, "Problem")
      .def_readonly("n", &ProblemData::n)
      .def_readonly("label", &ProblemData::label)
      .def_readonly("analytic", &ProblemData::analytic)
      .def("A", [](const ProblemData& p, double x) { return p.A(x); })
      .def("S", [](const ProblemData& p, double x) { return p.S(x); })
      .def("g", [](const ProblemData& p, double x, const Vector& u) { return p.g(x, u); })
      .def("potential", [](const ProblemData& p, double x, const Vector& u) { return p.potential(x, u); });

  py::module_ presets = m.def_submodule("presets", "Built-in problem families");
  presets.def("identity", &presets::identity, py::arg("n") = 1);
  presets.def("shifted_laplacian", &presets::shifted_laplacian, py::arg("c"), py::arg("n") = 1);
  presets.def("cubic", &presets::cubic, py::arg("c"), py::arg("n") = 1);
  presets.def("polynomial", &presets::polynomial, py::arg("A"), py::arg("S"), py::arg("cubic") = 0.0);
  presets.def("tabulated", &presets::tabulated, py::arg("x"), py::arg("A"), py::arg("S"),
              py::arg("cubic") = 0.0);

  m.def("validate", &validate, py::arg("problem"), py::arg("space"));
  m.def("hessian", &assemble_hessian, py::arg("space"), py::arg("problem"));
  m.def("evaluation_map", &evaluation_map, py::arg("space"), py::arg("t"));
  m.def(
      "dual_norm", [](const DiscreteSpace& s, const Matrix& f) { return dual_norm(s, f); },
      py::arg("space"), py::arg("functionals"));
  m.def(
      "constrained_basis", [](const DiscreteSpace& s, double t) { return constrained_subspace(s, t).orthonormal_basis(); },
      py::arg("space"), py::arg("t"), "Gram-orthonormal basis of H_t.");
  m.def(
      "projection",
      [](const DiscreteSpace& s, double t, const std::string& route, py::dict tol) {
        const ToleranceProfile tp = tolerances(tol);
        return projector(s, route, {t, t}, tp)(t).matrix();
      },
      py::arg("space"), py::arg("t"), py::arg("route") = "direct", py::arg("tol") = py::dict());
  m.def(
      "gap_distance",
      [](const DiscreteSpace& s, double t, double u) {
        return gap_distance(orthogonal_projection(constrained_subspace(s, t)),
                            orthogonal_projection(constrained_subspace(s, u)));
      },
      py::arg("space"), py::arg("t"), py::arg("s"), "Gap between H_t and H_s.");
  m.def(
      "explicit_T_apply",
      [](const DiscreteSpace& s, const ProblemData& p, const Vector& coords) {
        return explicit_T_apply(s, p, DiscreteFunction{s, coords}).coords;
      },
      py::arg("space"), py::arg("problem"), py::arg("coords"));

  m.def(
      "restricted_spectrum",
      [](const DiscreteSpace& s, const ProblemData& p, double t, const std::string& route, py::dict tol) {
        const ToleranceProfile tp = tolerances(tol);
        const SymmetricOperator op = l_path(s, p, {t, t}, route, tp).evaluate(t);
        const SpectralDecomposition d = decompose(op, tp, false);
        py::dict out;
        out["eigenvalues"] = d.eigenvalues;
        out["morse"] = d.negative_count;
        out["kernel"] = d.zero_count;
        return out;
      },
      py::arg("space"), py::arg("problem"), py::arg("t"), py::arg("route") = "complement",
      py::arg("tol") = py::dict(), "Spectrum of L_t = P_t T P_t + (I - P_t).");

  m.def(
      "spectral_flow",
      [](const DiscreteSpace& s, const ProblemData& p, double a, double b, int grid,
         const std::string& route, py::dict tol) {
        ScanControl ctl;
        ctl.grid = grid;
        ctl.tol = tolerances(tol);
        const SpectralFlowResult r = spectral_flow(l_path(s, p, {a, b}, route, ctl.tol), ctl);
        py::dict out;
        out["value"] = r.value;
        out["morse_a"] = r.morse_a;
        out["morse_b"] = r.morse_b;
        out["evaluations"] = r.evaluations;
        py::list xs;
        for (const Crossing& c : r.crossings) xs.append(crossing_dict(c));
        out["crossings"] = xs;
        return out;
      },
      py::arg("space"), py::arg("problem"), py::arg("a"), py::arg("b"), py::arg("grid") = 32,
      py::arg("route") = "complement", py::arg("tol") = py::dict());

  m.def(
      "relative_morse_index",
      [](const Matrix& gram, const Matrix& s, const Matrix& t) {
        const InnerProductSpace g(gram);
        return relative_morse_index(SymmetricOperator(g, s), SymmetricOperator(g, t));
      },
      py::arg("gram"), py::arg("s"), py::arg("t"));

  m.def(
      "detect",
      [](const DiscreteSpace& s, const ProblemData& p, double a, double b, int grid,
         const std::string& route, py::dict tol) {
        DetectControl ctl;
        ctl.scan.grid = grid;
        ctl.scan.tol = tolerances(tol);
        ctl.route = route_of(route);
        return report_to_json(detect(s, p, {a, b}, ctl));
      },
      py::arg("space"), py::arg("problem"), py::arg("a"), py::arg("b"), py::arg("grid") = 32,
      py::arg("route") = "complement", py::arg("tol") = py::dict(),
      "Bifurcation report as a JSON string.");

  m.def(
      "morse_criterion",
      [](const DiscreteSpace& s, const ProblemData& p, double a, double b) {
        const MorseCriterion c = morse_criterion(s, p, a, b);
        py::dict out;
        out["morse_a"] = c.morse_a;
        out["morse_b"] = c.morse_b;
        out["differs"] = c.differs;
        return out;
      },
      py::arg("space"), py::arg("problem"), py::arg("a"), py::arg("b"));

  m.def(
      "find_branch",
      [](const DiscreteSpace& s, const ProblemData& p, double t, Index index, const std::string& side,
         int steps) {
        BranchControl ctl;
        ctl.steps = steps;
        BranchTrace tr;
        {
          py::gil_scoped_release release;
          tr = find_branch(s, p, t, index, side_of(side), ctl);
        }
        return trace_dict(tr);
      },
      py::arg("space"), py::arg("problem"), py::arg("t"), py::arg("index"), py::arg("side") = "plus",
      py::arg("steps") = 8);

  m.def(
      "verify",
      [](const DiscreteSpace& s, const ProblemData& p, const std::string& report_json, int steps) {
        const BifurcationReport report = report_from_json(report_json);
        BranchControl ctl;
        ctl.steps = steps;
        VerifyReport v;
        {
          py::gil_scoped_release release;
          v = verify_candidates(s, p, report, ctl);
        }
        py::dict out;
        out["all_trivial"] = v.all_trivial;
        py::list cands;
        for (const CandidateVerification& c : v.candidates) {
          py::dict d;
          d["t"] = c.candidate.t;
          d["status"] = to_string(c.status);
          d["message"] = c.message;
          d["plus"] = trace_dict(c.plus);
          d["minus"] = trace_dict(c.minus);
          cands.append(d);
        }
        out["candidates"] = cands;
        return out;
      },
      py::arg("space"), py::arg("problem"), py::arg("report"), py::arg("steps") = 8);

  m.def(
      "functional_value",
      [](const DiscreteSpace& s, const ProblemData& p, const Vector& u) { return functional_value(s, p, u); },
      py::arg("space"), py::arg("problem"), py::arg("coords"));
  m.def(
      "gradient", [](const DiscreteSpace& s, const ProblemData& p, const Vector& u) { return gradient(s, p, u); },
      py::arg("space"), py::arg("problem"), py::arg("coords"));
  m.def("constrained_gradient", &constrained_gradient, py::arg("space"), py::arg("problem"), py::arg("t"),
        py::arg("coords"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "sflow");
        std::vector<const char*> argv;
        for (const std::string& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI command; returns (exit_code, stdout, stderr).");
}
