#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "sofa/cli.hpp"
#include "sofa/error.hpp"
#include "sofa/geom.hpp"
#include "sofa/io.hpp"
#include "sofa/kr.hpp"
#include "sofa/train.hpp"
#include "sofa/waterfall.hpp"

namespace py = pybind11;
using namespace sofa;

namespace {

double area_of(const geom::MovementSample& m, int n_sources) {
  try {
    const auto f = geom::assemble_fringes(m, geom::compute_envelopes(m));
    return waterfall::compute_area(f, {n_sources}).area.value();
  } catch (const EnvelopeUndefined&) {
    return 0.0;
  } catch (const DegenerateGeometry&) {
    return 0.0;
  }
}

geom::MovementSample movement_from(const std::vector<double>& t, const std::vector<double>& x_p,
                                   const std::vector<double>& y_p, const std::vector<double>& alpha) {
  std::ostringstream csv;
  csv << "t,x_p,y_p,alpha\n";
  if (x_p.size() != t.size() || y_p.size() != t.size() || alpha.size() != t.size()) {
    throw ShapeMismatch("movement: t, x_p, y_p and alpha must have the same length");
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    csv << io::format17(t[i]) << ',' << io::format17(x_p[i]) << ',' << io::format17(y_p[i]) << ','
        << io::format17(alpha[i]) << '\n';
  }
  std::istringstream is(csv.str());
  return io::read_movement_csv(is);
}

py::dict g_value(const std::vector<double>& alphas, double beta1, double beta2,
                 const std::vector<std::array<double, 2>>& centers, int n_sources) {
  const kr::AngleSequence a{alphas, beta1, beta2};
  const auto e = kr::g_area(a, centers, {n_sources});
  py::dict d;
  d["value"] = e.value;
  d["reachable"] = e.reachable;
  d["gradient"] = e.gradient;
  d["components"] = e.components;
  return d;
}

py::dict angles_dict(const kr::AngleSequence& a) {
  py::dict d;
  d["alphas"] = a.alphas;
  d["beta1"] = a.beta1;
  d["beta2"] = a.beta2;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Moving sofa areas and rotated-corridor upper bounds";

  py::register_exception<Error>(m, "SofaError", PyExc_RuntimeError);

  m.attr("theta_star") = train::kThetaStar;
  m.attr("gerver_area") = train::kGerverArea;

  m.def(
      "hammersley_area",
      [](double r, int n_time, int n_sources) {
        return area_of(geom::hammersley_movement(r, geom::TimeGrid::uniform(n_time)), n_sources);
      },
      py::arg("r") = 2.0 / M_PI, py::arg("n_time") = 2000, py::arg("n_sources") = 10000,
      "Area of the shape left by the semicircular corner path.");
  m.def(
      "corner_rotation_area",
      [](int n_time, int n_sources) {
        return area_of(geom::corner_rotation_movement(geom::TimeGrid::uniform(n_time)), n_sources);
      },
      py::arg("n_time") = 2000, py::arg("n_sources") = 10000);
  m.def(
      "movement_area",
      [](const std::vector<double>& t, const std::vector<double>& x_p, const std::vector<double>& y_p,
         const std::vector<double>& alpha, int n_sources) {
        return area_of(movement_from(t, x_p, y_p, alpha), n_sources);
      },
      py::arg("t"), py::arg("x_p"), py::arg("y_p"), py::arg("alpha"), py::arg("n_sources") = 10000,
      "Area for a sampled movement; derivatives come from grid differences. 0 when degenerate.");

  m.def("five_angles", [] { return angles_dict(kr::AngleSequence::five_angles()); });
  m.def("five_angles_split", [] { return angles_dict(kr::AngleSequence::five_angles_split()); });
  m.def("gamma_angles", [](int n, int k) { return angles_dict(kr::AngleSequence::gamma(n, k)); }, py::arg("n"),
        py::arg("k") = 1);
  m.def("g", &g_value, py::arg("alphas"), py::arg("beta1"), py::arg("beta2"), py::arg("centers"),
        py::arg("n_sources") = 10000, "Largest connected area of the rotated-corridor region and its gradient.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a sofa subcommand in-process; returns (exit_code, stdout, stderr).");
}
