#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <utility>
#include <vector>

#include "lowrank/conditionals.hpp"
#include "lowrank/errors.hpp"
#include "lowrank/experiments.hpp"
#include "lowrank/gibbs.hpp"
#include "lowrank/io.hpp"
#include "lowrank/model.hpp"
#include "lowrank/rng.hpp"
#include "lowrank/vb.hpp"

namespace py = pybind11;
using namespace lowrank;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bayesian low-rank matrix completion: tempered-posterior Gibbs "
            "sampling and variational inference";

  py::register_exception<usage_error>(m, "UsageError", PyExc_ValueError);
  py::register_exception<data_error>(m, "DataError", PyExc_IOError);
  py::register_exception<numerical_error>(m, "NumericalError",
                                          PyExc_ArithmeticError);

  // -- data -------------------------------------------------------------

  py::class_<Observation>(m, "Observation")
      .def(py::init([](int row, int col, double value) {
             return Observation{row, col, value};
           }),
           py::arg("row"), py::arg("col"), py::arg("value"))
      .def_readwrite("row", &Observation::row)
      .def_readwrite("col", &Observation::col)
      .def_readwrite("value", &Observation::value)
      .def(py::self == py::self)
      .def("__repr__", [](const Observation& o) {
        return "Observation(" + std::to_string(o.row) + ", " +
               std::to_string(o.col) + ", " + std::to_string(o.value) + ")";
      });

  py::class_<ObservationSet>(m, "ObservationSet")
      .def(py::init<int, int, std::vector<Observation>>(), py::arg("rows"),
           py::arg("cols"), py::arg("entries"))
      .def(py::init([](int rows, int cols,
                       const std::vector<std::tuple<int, int, double>>& t) {
             std::vector<Observation> entries;
             entries.reserve(t.size());
             for (const auto& [i, j, v] : t) entries.push_back({i, j, v});
             return ObservationSet(rows, cols, std::move(entries));
           }),
           py::arg("rows"), py::arg("cols"), py::arg("triplets"))
      .def("rows", &ObservationSet::rows)
      .def("cols", &ObservationSet::cols)
      .def("size", &ObservationSet::size)
      .def("__len__", &ObservationSet::size)
      .def("empty", &ObservationSet::empty)
      .def("entry", &ObservationSet::entry, py::arg("k"))
      .def("entries",
           [](const ObservationSet& s) { return s.entries(); })
      .def("row_entries",
           [](const ObservationSet& s, int i) {
             auto span = s.row_entries(i);
             return std::vector<std::int32_t>(span.begin(), span.end());
           },
           py::arg("i"))
      .def("col_entries",
           [](const ObservationSet& s, int j) {
             auto span = s.col_entries(j);
             return std::vector<std::int32_t>(span.begin(), span.end());
           },
           py::arg("j"))
      .def("transposed", &ObservationSet::transposed);

  // -- priors -------------------------------------------------------------

  py::class_<FixedPrior>(m, "FixedPrior")
      .def(py::init([](double gamma0) { return FixedPrior{gamma0}; }),
           py::arg("gamma0"))
      .def_readwrite("gamma0", &FixedPrior::gamma0);

  py::class_<InverseGammaPrior>(m, "InverseGammaPrior")
      .def(py::init([](double shape, double rate) {
             return InverseGammaPrior{shape, rate};
           }),
           py::arg("shape"), py::arg("rate"))
      .def_readwrite("shape", &InverseGammaPrior::shape)
      .def_readwrite("rate", &InverseGammaPrior::rate);

  py::class_<GammaPrior>(m, "GammaPrior")
      .def(py::init([](double beta) { return GammaPrior{beta}; }),
           py::arg("beta"))
      .def_readwrite("beta", &GammaPrior::beta);

  py::class_<DiscretePrior>(m, "DiscretePrior")
      .def(py::init([](double spike, double slab, double slab_prob) {
             return DiscretePrior{spike, slab, slab_prob};
           }),
           py::arg("spike"), py::arg("slab"), py::arg("slab_prob"))
      .def_readwrite("spike", &DiscretePrior::spike)
      .def_readwrite("slab", &DiscretePrior::slab)
      .def_readwrite("slab_prob", &DiscretePrior::slab_prob);

  m.def("validate_prior",
        [](const PriorSpec& prior) { lowrank::validate(prior); },
        py::arg("prior"));
  m.def("prior_family", &prior_family, py::arg("prior"));
  m.def("prior_params", &prior_params, py::arg("prior"));
  m.def("describe", &describe, py::arg("prior"));

  // -- state and summaries ------------------------------------------------

  py::class_<FactorState>(m, "FactorState")
      .def(py::init([](Eigen::MatrixXd row_factors, Eigen::MatrixXd col_factors,
                       Eigen::VectorXd column_scales) {
             return FactorState{std::move(row_factors), std::move(col_factors),
                                std::move(column_scales)};
           }),
           py::arg("row_factors"), py::arg("col_factors"),
           py::arg("column_scales"))
      .def_readwrite("row_factors", &FactorState::row_factors)
      .def_readwrite("col_factors", &FactorState::col_factors)
      .def_readwrite("column_scales", &FactorState::column_scales)
      .def("rank", &FactorState::rank)
      .def("validate", &FactorState::validate);

  py::class_<SamplerConfig>(m, "SamplerConfig")
      .def(py::init([](int rank, int iterations, int burn_in, int thinning,
                       std::uint64_t seed, double noise_sd,
                       std::optional<double> lambda) {
             SamplerConfig c;
             c.rank = rank;
             c.iterations = iterations;
             c.burn_in = burn_in;
             c.thinning = thinning;
             c.seed = seed;
             c.noise_sd = noise_sd;
             c.lambda = lambda;
             return c;
           }),
           py::arg("rank") = 5, py::arg("iterations") = 1000,
           py::arg("burn_in") = 100, py::arg("thinning") = 10,
           py::arg("seed") = 1, py::arg("noise_sd") = 1.0,
           py::arg("lambda_") = std::nullopt)
      .def_readwrite("rank", &SamplerConfig::rank)
      .def_readwrite("iterations", &SamplerConfig::iterations)
      .def_readwrite("burn_in", &SamplerConfig::burn_in)
      .def_readwrite("thinning", &SamplerConfig::thinning)
      .def_readwrite("seed", &SamplerConfig::seed)
      .def_readwrite("noise_sd", &SamplerConfig::noise_sd)
      .def_readwrite("lambda_", &SamplerConfig::lambda)
      .def("lambda_for", &SamplerConfig::lambda_for, py::arg("n_observations"))
      .def("retained_count", &SamplerConfig::retained_count)
      .def("validate", &SamplerConfig::validate);

  py::class_<CellMean>(m, "CellMean")
      .def_readonly("row", &CellMean::row)
      .def_readonly("col", &CellMean::col)
      .def_readonly("value", &CellMean::value);

  py::class_<PosteriorSummary>(m, "PosteriorSummary")
      .def_readonly("theta_mean", &PosteriorSummary::theta_mean)
      .def_readonly("cell_means", &PosteriorSummary::cell_means)
      .def_readonly("gamma_trace", &PosteriorSummary::gamma_trace)
      .def_readonly("rmse_trace", &PosteriorSummary::rmse_trace)
      .def_readonly("retained_count", &PosteriorSummary::retained_count)
      .def("dense", &PosteriorSummary::dense)
      .def("value_at", &PosteriorSummary::value_at, py::arg("i"), py::arg("j"));

  py::class_<EntryTrace>(m, "EntryTrace")
      .def_readonly("row", &EntryTrace::row)
      .def_readonly("col", &EntryTrace::col)
      .def_readonly("values", &EntryTrace::values);

  // -- samplers -------------------------------------------------------------

  py::class_<RngStream>(m, "RngStream")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("fork", &RngStream::fork, py::arg("child_id"))
      .def("next_u64", &RngStream::next_u64)
      .def("next_double", &RngStream::next_double)
      .def("next_gaussian", &RngStream::next_gaussian);

  py::class_<GibbsRun>(m, "GibbsRun")
      .def_readonly("config", &GibbsRun::config)
      .def_readonly("prior", &GibbsRun::prior)
      .def_readonly("state", &GibbsRun::state)
      .def_readonly("summary", &GibbsRun::summary)
      .def_readonly("entry_traces", &GibbsRun::entry_traces);

  m.def(
      "run_gibbs",
      [](const ObservationSet& obs, const PriorSpec& prior,
         const SamplerConfig& config,
         const std::optional<Eigen::MatrixXd>& reference,
         const std::vector<std::pair<int, int>>& extra_tracked) {
        py::gil_scoped_release release;
        return run_gibbs(obs, prior, config, reference ? &*reference : nullptr,
                         extra_tracked);
      },
      py::arg("observations"), py::arg("prior"), py::arg("config"),
      py::arg("reference") = std::optional<Eigen::MatrixXd>{},
      py::arg("extra_tracked") = std::vector<std::pair<int, int>>{});

  m.def("init_state", &init_state, py::arg("rows"), py::arg("cols"),
        py::arg("config"), py::arg("prior"), py::arg("rng"));
  m.def("diagnostic_cells", &diagnostic_cells, py::arg("rows"),
        py::arg("cols"));

  py::class_<AcfResult>(m, "AcfResult")
      .def_readonly("values", &AcfResult::values)
      .def_readonly("constant", &AcfResult::constant);

  m.def("acf", &acf, py::arg("trace"), py::arg("max_lag"));

  // -- variational backend ---------------------------------------------------

  py::class_<VBConfig>(m, "VBConfig")
      .def(py::init([](int rank, std::uint64_t seed, double noise_sd,
                       std::optional<double> lambda, double prior_shape,
                       double prior_rate, double tolerance,
                       int max_iterations) {
             VBConfig c;
             c.rank = rank;
             c.seed = seed;
             c.noise_sd = noise_sd;
             c.lambda = lambda;
             c.prior_shape = prior_shape;
             c.prior_rate = prior_rate;
             c.tolerance = tolerance;
             c.max_iterations = max_iterations;
             return c;
           }),
           py::arg("rank") = 5, py::arg("seed") = 1, py::arg("noise_sd") = 1.0,
           py::arg("lambda_") = std::nullopt, py::arg("prior_shape") = 1.0,
           py::arg("prior_rate") = 0.1, py::arg("tolerance") = 1e-4,
           py::arg("max_iterations") = 100)
      .def_readwrite("rank", &VBConfig::rank)
      .def_readwrite("seed", &VBConfig::seed)
      .def_readwrite("noise_sd", &VBConfig::noise_sd)
      .def_readwrite("lambda_", &VBConfig::lambda)
      .def_readwrite("prior_shape", &VBConfig::prior_shape)
      .def_readwrite("prior_rate", &VBConfig::prior_rate)
      .def_readwrite("tolerance", &VBConfig::tolerance)
      .def_readwrite("max_iterations", &VBConfig::max_iterations)
      .def("lambda_for", &VBConfig::lambda_for, py::arg("n_observations"))
      .def("validate", &VBConfig::validate);

  py::class_<VBState>(m, "VBState")
      .def_readwrite("row_means", &VBState::row_means)
      .def_readwrite("row_covs", &VBState::row_covs)
      .def_readwrite("col_means", &VBState::col_means)
      .def_readwrite("col_covs", &VBState::col_covs)
      .def_readwrite("scale_rates", &VBState::scale_rates)
      .def_readwrite("scale_shape", &VBState::scale_shape)
      .def("rank", &VBState::rank);

  py::class_<VBResult>(m, "VBResult")
      .def_readonly("state", &VBResult::state)
      .def_readonly("iterations", &VBResult::iterations)
      .def_readonly("converged", &VBResult::converged)
      .def_readonly("delta_trace", &VBResult::delta_trace);

  m.def("vb_init", &vb_init, py::arg("rows"), py::arg("cols"),
        py::arg("config"));
  m.def(
      "run_vb",
      [](const ObservationSet& obs, const VBConfig& config,
         const std::optional<VBState>& init) {
        py::gil_scoped_release release;
        return run_vb(obs, config, init);
      },
      py::arg("observations"), py::arg("config"),
      py::arg("init") = std::optional<VBState>{});
  m.def("vb_predict_entry", &vb_predict_entry, py::arg("state"), py::arg("i"),
        py::arg("j"));
  m.def("vb_point_estimate", &vb_point_estimate, py::arg("state"));

  // -- scoring -------------------------------------------------------------

  m.def("predict_entry", &predict_entry, py::arg("state"), py::arg("i"),
        py::arg("j"));
  m.def("rmse", &rmse, py::arg("estimate"), py::arg("truth"));
  m.def("holdout_rmse",
        py::overload_cast<const FactorState&, const ObservationSet&,
                          ClipRange>(&holdout_rmse),
        py::arg("state"), py::arg("test"), py::arg("clip") = ClipRange{});
  m.def("holdout_rmse",
        py::overload_cast<const Eigen::MatrixXd&, const ObservationSet&,
                          ClipRange>(&holdout_rmse),
        py::arg("estimate"), py::arg("test"), py::arg("clip") = ClipRange{});
  m.def("holdout_rmse",
        py::overload_cast<const PosteriorSummary&, const ObservationSet&,
                          ClipRange>(&holdout_rmse),
        py::arg("summary"), py::arg("test"), py::arg("clip") = ClipRange{});

  // -- synthetic benchmarks ---------------------------------------------------

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("m", &SyntheticSpec::m)
      .def_readwrite("r", &SyntheticSpec::r)
      .def_readwrite("entry_sd", &SyntheticSpec::entry_sd)
      .def_readwrite("observe_fraction", &SyntheticSpec::observe_fraction)
      .def_readwrite("noise_sd", &SyntheticSpec::noise_sd)
      .def_readwrite("seed", &SyntheticSpec::seed)
      .def_readwrite("with_replacement", &SyntheticSpec::with_replacement)
      .def("observation_count", &SyntheticSpec::observation_count)
      .def("validate", &SyntheticSpec::validate);

  m.def("protocol_spec", &protocol_spec, py::arg("m"), py::arg("seed"));

  py::class_<SyntheticData>(m, "SyntheticData")
      .def_readonly("truth", &SyntheticData::truth)
      .def_readonly("observations", &SyntheticData::observations);

  m.def(
      "generate_synthetic",
      [](const SyntheticSpec& spec) {
        RngStream rng(spec.seed);
        return generate_synthetic(spec, rng);
      },
      py::arg("spec"));

  py::class_<ExperimentResult>(m, "ExperimentResult")
      .def_readonly("m", &ExperimentResult::m)
      .def_readonly("rank", &ExperimentResult::rank)
      .def_readonly("prior", &ExperimentResult::prior)
      .def_readonly("hyperparams", &ExperimentResult::hyperparams)
      .def_readonly("seed", &ExperimentResult::seed)
      .def_readonly("rmse", &ExperimentResult::rmse)
      .def_readonly("seconds", &ExperimentResult::seconds)
      .def_readonly("retained", &ExperimentResult::retained)
      .def_readonly("converged", &ExperimentResult::converged);

  m.def(
      "run_cell",
      [](const SyntheticSpec& spec, const PriorSpec& prior,
         const SamplerConfig& config) {
        py::gil_scoped_release release;
        return run_cell(spec, prior, config);
      },
      py::arg("spec"), py::arg("prior"), py::arg("config"));
  m.def(
      "run_grid",
      [](const std::vector<SyntheticSpec>& specs,
         const std::vector<std::pair<PriorSpec, SamplerConfig>>& priors) {
        py::gil_scoped_release release;
        return run_grid(specs, priors);
      },
      py::arg("specs"), py::arg("priors"));
  m.def("experiment_csv", &experiment_csv, py::arg("results"));
  m.def("experiment_json", &experiment_json, py::arg("results"));

  // -- files -------------------------------------------------------------

  py::class_<RatingsData>(m, "RatingsData")
      .def_readonly("observations", &RatingsData::observations)
      .def_property_readonly(
          "user_ids", [](const RatingsData& d) { return d.ids.user_ids; })
      .def_property_readonly(
          "item_ids", [](const RatingsData& d) { return d.ids.item_ids; });

  m.def(
      "parse_ratings",
      [](const std::string& path, const std::string& format) {
        return parse_ratings(path, ratings_format_from_name(format));
      },
      py::arg("path"), py::arg("format") = "tab");

  m.def("train_test_split", &train_test_split, py::arg("observations"),
        py::arg("ratio"), py::arg("seed"));

  // -- group-penalty marginal --------------------------------------------------

  m.def("scale_integral_closed_form", &scale_integral_closed_form,
        py::arg("sq_norm"), py::arg("beta"));
  m.def("scale_integral_quadrature", &scale_integral_quadrature,
        py::arg("sq_norm"), py::arg("beta"));
  m.def("group_penalty_log_marginal", &group_penalty_log_marginal,
        py::arg("row_factors"), py::arg("col_factors"), py::arg("beta"));
}
