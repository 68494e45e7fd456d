#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>

#include "cde/benchmark.hpp"
#include "cde/errors.hpp"
#include "cde/evaluation.hpp"
#include "cde/registry.hpp"
#include "cde/simulators.hpp"

namespace py = pybind11;
using namespace cde;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// 1-D input is a column.
Matrix to_matrix(const Array& a) {
  if (a.ndim() == 1) return Matrix(a.shape(0), 1, std::vector<double>(a.data(), a.data() + a.shape(0)));
  if (a.ndim() != 2) throw ShapeError("expected a 1-D or 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

nlohmann::json parse(const std::string& s) { return s.empty() ? nlohmann::json::object() : nlohmann::json::parse(s); }

// Evaluates f on each (x_i, y_i) row pair.
template <class F>
py::array_t<double> rowwise(const ConditionalDensity& d, const Array& x, const Array& y, F f) {
  const Matrix xm = to_matrix(x), ym = to_matrix(y);
  if (xm.rows() != ym.rows()) throw ShapeError("x and y have different row counts");
  if (xm.cols() != d.x_dim() || ym.cols() != d.y_dim()) throw ShapeError("x or y width does not match the model");
  py::array_t<double> out(xm.rows());
  auto* o = out.mutable_data();
  for (std::size_t i = 0; i < xm.rows(); ++i) o[i] = f(xm.row(i), ym.row(i));
  return out;
}

template <class T>
void density_methods(py::class_<T, std::shared_ptr<T>>& c) {
  c.def_property_readonly("x_dim", &T::x_dim)
      .def_property_readonly("y_dim", &T::y_dim)
      .def("pdf", [](const T& d, const Array& x, const Array& y) {
        return rowwise(d, x, y, [&](auto xr, auto yr) { return d.pdf(xr, yr); });
      })
      .def("log_pdf", [](const T& d, const Array& x, const Array& y) {
        return rowwise(d, x, y, [&](auto xr, auto yr) { return d.log_pdf(xr, yr); });
      });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conditional density estimation: simulators, estimators, metrics.";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());

  py::class_<Simulator, std::shared_ptr<Simulator>> sim(m, "Simulator");
  density_methods(sim);
  sim.def_property_readonly("name", &Simulator::name)
      .def("params_json", [](const Simulator& s) { return s.params_json().dump(); })
      .def(
          "sample",
          [](const Simulator& s, std::size_t n, std::uint64_t seed) {
            const Dataset d = s.sample(n, seed);
            return py::make_tuple(to_array(d.x), to_array(d.y));
          },
          py::arg("n"), py::arg("seed") = 0);

  m.def("simulator_names", &simulator_names);
  m.def(
      "make_simulator",
      [](const std::string& name, const std::string& params) {
        return std::shared_ptr<Simulator>(make_simulator(name, parse(params)));
      },
      py::arg("name"), py::arg("params") = "");

  py::class_<Estimator, std::shared_ptr<Estimator>> est(m, "Estimator");
  density_methods(est);
  est.def_property_readonly("kind", &Estimator::kind).def("to_json", [](const Estimator& e) {
    return e.to_json().dump();
  });

  m.def("estimator_names", &estimator_names);
  m.def("default_estimator_config", [](const std::string& name) { return default_estimator_config(name).dump(); });
  m.def(
      "fit",
      [](const std::string& name, const Array& x, const Array& y, const std::string& config,
         std::optional<std::uint64_t> seed, std::shared_ptr<Simulator> simulator) {
        FitOptions opts;
        opts.seed = seed;
        opts.simulator = std::move(simulator);
        Dataset data;
        if (name != "oracle" || x.size() > 0) data = Dataset(to_matrix(x), to_matrix(y));
        py::gil_scoped_release release;
        return std::shared_ptr<Estimator>(fit_estimator(name, parse(config), data, opts));
      },
      py::arg("name"), py::arg("x"), py::arg("y"), py::arg("config") = "", py::arg("seed") = py::none(),
      py::arg("simulator") = nullptr);
  m.def("load_model", [](const std::string& j) { return std::shared_ptr<Estimator>(load_estimator(parse(j))); });

  m.def("avg_log_likelihood", [](const Estimator& e, const Array& x, const Array& y) {
    return avg_log_likelihood(e, Dataset(to_matrix(x), to_matrix(y)));
  });
  m.def("rmse_mean", [](const Estimator& e, const Array& x, const Array& y) {
    return rmse_mean(e, Dataset(to_matrix(x), to_matrix(y)));
  });
  m.def("rmse_std", [](const Estimator& e, const Array& x, const Array& y) {
    return rmse_std(e, Dataset(to_matrix(x), to_matrix(y)));
  });
  m.def(
      "hellinger",
      [](const Estimator& e, const Simulator& s, const std::string& protocol) {
        const auto p = protocol.empty() ? EvalProtocol{} : EvalProtocol::from_json(parse(protocol));
        py::gil_scoped_release release;
        return conditional_hellinger(e, s, p);
      },
      py::arg("estimator"), py::arg("simulator"), py::arg("protocol") = "");

  m.def(
      "run_benchmark",
      [](const std::string& config, std::size_t threads) {
        const auto cfg = BenchmarkConfig::from_json(parse(config));
        std::vector<RunRecord> recs;
        {
          py::gil_scoped_release release;
          recs = run_benchmark(cfg, benchmark_threads(threads));
        }
        return py::make_tuple(run_records_csv(recs), aggregate_csv(aggregate_records(recs)));
      },
      py::arg("config"), py::arg("threads") = 1);
}
