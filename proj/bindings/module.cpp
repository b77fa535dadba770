#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/numpy.h>

#include "fedccrl/augment.hpp"
#include "fedccrl/config.hpp"
#include "fedccrl/data.hpp"
#include "fedccrl/federation.hpp"
#include "fedccrl/losses.hpp"
#include "fedccrl/model.hpp"

namespace py = pybind11;
using fedccrl::Tensor;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& arr) {
  fedccrl::Shape shape(arr.ndim());
  for (py::ssize_t d = 0; d < arr.ndim(); ++d) shape[d] = static_cast<std::size_t>(arr.shape(d));
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor::from_data(std::move(shape), std::move(data));
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<std::size_t> to_labels(const std::vector<long>& ys) {
  std::vector<std::size_t> out;
  out.reserve(ys.size());
  for (long y : ys) {
    if (y < 0) throw fedccrl::TensorError("labels must be non-negative");
    out.push_back(static_cast<std::size_t>(y));
  }
  return out;
}

fedccrl::StatisticsPool pool_from_arrays(const DoubleArray& means, const DoubleArray& stds) {
  if (means.ndim() != 2 || stds.ndim() != 2 || means.shape(0) != stds.shape(0) ||
      means.shape(1) != stds.shape(1)) {
    throw fedccrl::TensorError("pool means/stds must both be [P,C]");
  }
  fedccrl::StatisticsPool pool;
  const std::size_t p = static_cast<std::size_t>(means.shape(0));
  const std::size_t c = static_cast<std::size_t>(means.shape(1));
  for (std::size_t i = 0; i < p; ++i) {
    fedccrl::SampleStatistics st;
    st.origin_client = 0xffffffffu;  // external donor
    st.mean.assign(means.data() + i * c, means.data() + (i + 1) * c);
    st.std.assign(stds.data() + i * c, stds.data() + (i + 1) * c);
    pool.entries.push_back(std::move(st));
  }
  return pool;
}

fedccrl::AugmentConfig augment_config(double alpha, double beta, int severity,
                                      std::optional<double> forced_lambda,
                                      std::optional<double> forced_mix, bool literal) {
  fedccrl::AugmentConfig cfg;
  cfg.alpha = alpha;
  cfg.beta = beta;
  cfg.severity = severity;
  cfg.forced_lambda = forced_lambda;
  cfg.forced_mix = forced_mix;
  cfg.ccdt_literal_variant = literal;
  return cfg;
}

py::dict report_to_dict(const fedccrl::ExperimentReport& report) {
  py::dict out;
  py::list targets;
  for (const auto& t : report.targets) {
    py::dict td;
    td["target_domain"] = t.target_domain;
    td["final_accuracy"] = t.final_accuracy;
    td["bytes_up"] = t.bytes_up;
    td["bytes_down"] = t.bytes_down;
    td["stats_bytes_up"] = t.stats_bytes_up;
    py::list rounds;
    for (const auto& r : t.rounds) {
      py::dict rd;
      rd["round"] = r.round;
      rd["accuracy"] = r.accuracy;
      rd["loss_cls"] = r.loss_cls;
      rd["loss_ra"] = r.loss_ra;
      rd["loss_js"] = r.loss_js;
      rd["bytes_up"] = r.bytes_up;
      rd["bytes_down"] = r.bytes_down;
      rounds.append(rd);
    }
    td["rounds"] = rounds;
    targets.append(td);
  }
  out["targets"] = targets;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "FedCCRL federated domain generalization simulator (C++ core)";

  m.def(
      "channel_stats",
      [](const DoubleArray& image) {
        const auto st = fedccrl::channel_stats(to_tensor(image));
        return py::make_tuple(py::cast(st.mean), py::cast(st.std));
      },
      py::arg("image"), "Channel-wise (mean, std) of a [C,H,W] image.");

  m.def(
      "ccdt",
      [](const DoubleArray& batch, const DoubleArray& pool_means, const DoubleArray& pool_stds,
         double alpha, std::uint64_t seed, std::optional<double> forced_lambda, bool literal) {
        fedccrl::Rng rng(seed);
        const auto cfg = augment_config(alpha, 1.0, 3, forced_lambda, std::nullopt, literal);
        return to_array(fedccrl::ccdt(to_tensor(batch), pool_from_arrays(pool_means, pool_stds),
                                      cfg, rng));
      },
      py::arg("batch"), py::arg("pool_means"), py::arg("pool_stds"), py::arg("alpha") = 0.1,
      py::arg("seed") = 0, py::arg("forced_lambda") = std::nullopt, py::arg("literal") = false,
      "Cross-client domain transfer on a [B,C,H,W] batch.");

  m.def(
      "augmix",
      [](const DoubleArray& batch, double beta, int severity, std::uint64_t seed,
         std::optional<double> forced_mix) {
        fedccrl::Rng rng(seed);
        const auto cfg = augment_config(0.1, beta, severity, std::nullopt, forced_mix, false);
        return to_array(fedccrl::difp_augmix(to_tensor(batch), cfg, rng));
      },
      py::arg("batch"), py::arg("beta") = 1.0, py::arg("severity") = 3, py::arg("seed") = 0,
      py::arg("forced_mix") = std::nullopt,
      "Domain-invariant feature perturbation on a [B,C,H,W] batch in [0,1].");

  m.def(
      "feature_extension",
      [](const DoubleArray& batch, const DoubleArray& pool_means, const DoubleArray& pool_stds,
         double alpha, double beta, int severity, std::uint64_t seed) {
        fedccrl::Rng rng(seed);
        const auto cfg = augment_config(alpha, beta, severity, std::nullopt, std::nullopt, false);
        return to_array(fedccrl::feature_extension(
            to_tensor(batch), pool_from_arrays(pool_means, pool_stds), cfg, rng));
      },
      py::arg("batch"), py::arg("pool_means"), py::arg("pool_stds"), py::arg("alpha") = 0.1,
      py::arg("beta") = 1.0, py::arg("severity") = 3, py::arg("seed") = 0,
      "DIFP after CCDT, the full cross-client feature extension.");

  m.def(
      "sup_contrastive",
      [](const DoubleArray& z1, const DoubleArray& z2, const std::vector<long>& y1,
         const std::vector<long>& y2, double tau) {
        return fedccrl::sup_contrastive(to_tensor(z1), to_tensor(z2), to_labels(y1), to_labels(y2),
                                        tau)
            .item();
      },
      py::arg("z1"), py::arg("z2"), py::arg("y1"), py::arg("y2"), py::arg("tau") = 0.1);

  m.def(
      "representation_alignment",
      [](const DoubleArray& z, const DoubleArray& z1, const DoubleArray& z2,
         const std::vector<long>& y, double tau) {
        return fedccrl::representation_alignment(to_tensor(z), to_tensor(z1), to_tensor(z2),
                                                 to_labels(y), tau)
            .item();
      },
      py::arg("z"), py::arg("z1"), py::arg("z2"), py::arg("y"), py::arg("tau") = 0.1);

  m.def(
      "js_alignment",
      [](const DoubleArray& p, const DoubleArray& p1, const DoubleArray& p2) {
        return fedccrl::js_alignment(to_tensor(p), to_tensor(p1), to_tensor(p2)).item();
      },
      py::arg("p"), py::arg("p1"), py::arg("p2"));

  m.def(
      "classification_loss",
      [](const DoubleArray& p, const DoubleArray& p1, const DoubleArray& p2,
         const std::vector<long>& y) {
        return fedccrl::classification_loss(to_tensor(p), to_tensor(p1), to_tensor(p2),
                                            to_labels(y))
            .item();
      },
      py::arg("p"), py::arg("p1"), py::arg("p2"), py::arg("y"));

  m.def(
      "cross_entropy",
      [](const DoubleArray& p, const std::vector<long>& y) {
        return fedccrl::cross_entropy(to_tensor(p), to_labels(y)).item();
      },
      py::arg("p"), py::arg("y"));

  m.def(
      "cosine_lr",
      [](std::size_t round, std::size_t epoch, double lr_init, std::size_t rounds,
         std::size_t local_epochs) {
        return fedccrl::cosine_lr(round, epoch, {lr_init, rounds, local_epochs});
      },
      py::arg("round"), py::arg("epoch"), py::arg("lr_init") = 0.001, py::arg("rounds") = 10,
      py::arg("local_epochs") = 3);

  m.def(
      "fedavg_aggregate",
      [](const std::vector<std::uint64_t>& weights,
         const std::vector<std::vector<DoubleArray>>& param_sets) {
        if (weights.size() != param_sets.size()) {
          throw fedccrl::TensorError("fedavg_aggregate: weights/parameters length mismatch");
        }
        std::vector<std::pair<std::uint64_t, fedccrl::ModelParameters>> sets;
        for (std::size_t i = 0; i < weights.size(); ++i) {
          fedccrl::ModelParameters p;
          for (std::size_t e = 0; e < param_sets[i].size(); ++e) {
            p.entries.emplace_back("p" + std::to_string(e), to_tensor(param_sets[i][e]));
          }
          sets.emplace_back(weights[i], std::move(p));
        }
        const auto agg = fedccrl::fedavg_aggregate(sets);
        std::vector<py::array_t<double>> out;
        for (const auto& [name, t] : agg.entries) out.push_back(to_array(t));
        return out;
      },
      py::arg("weights"), py::arg("param_sets"),
      "Sample-count-weighted average of per-client parameter lists.");

  m.def(
      "generate_synthetic",
      [](std::size_t num_domains, std::size_t num_classes, std::size_t samples_per_domain,
         std::size_t channels, std::size_t height, std::size_t width, double signal,
         double noise_std, std::uint64_t seed) {
        fedccrl::SyntheticConfig cfg;
        cfg.num_domains = num_domains;
        cfg.num_classes = num_classes;
        cfg.samples_per_domain = samples_per_domain;
        cfg.channels = channels;
        cfg.height = height;
        cfg.width = width;
        cfg.class_signal_strength = signal;
        cfg.noise_std = noise_std;
        cfg.seed = seed;
        py::list out;
        for (const auto& ds : fedccrl::generate_synthetic(cfg)) {
          py::dict d;
          d["name"] = ds.name;
          d["domain_id"] = ds.domain_id;
          std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(ds.size()),
                                         static_cast<py::ssize_t>(channels),
                                         static_cast<py::ssize_t>(height),
                                         static_cast<py::ssize_t>(width)};
          py::array_t<double> images(shape);
          double* dst = images.mutable_data();
          for (const auto& img : ds.images) {
            std::copy(img.data().begin(), img.data().end(), dst);
            dst += img.size();
          }
          d["images"] = images;
          d["labels"] = py::cast(ds.labels);
          out.append(d);
        }
        return out;
      },
      py::arg("num_domains") = 4, py::arg("num_classes") = 5, py::arg("samples_per_domain") = 200,
      py::arg("channels") = 3, py::arg("height") = 8, py::arg("width") = 8,
      py::arg("signal") = 1.0, py::arg("noise_std") = 0.35, py::arg("seed") = 7);

  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::vector<std::string>& overrides,
         std::optional<std::uint32_t> target) {
        const auto cfg = fedccrl::parse_config_text(config_text, overrides);
        const auto data = cfg.load_data();
        if (target) {
          fedccrl::ExperimentReport report;
          report.targets.push_back(fedccrl::run_single_target(cfg.federation, data, *target));
          return report_to_dict(report);
        }
        return report_to_dict(fedccrl::run_experiment(cfg.federation, data));
      },
      py::arg("config_text") = "", py::arg("overrides") = std::vector<std::string>{},
      py::arg("target") = std::nullopt,
      "Leave-one-domain-out experiment from config text; returns per-round records.");

#ifdef FEDCCRL_VERSION
#define FEDCCRL_STR2(x) #x
#define FEDCCRL_STR(x) FEDCCRL_STR2(x)
  m.attr("__version__") = FEDCCRL_STR(FEDCCRL_VERSION);
#else
  m.attr("__version__") = "dev";
#endif
}
