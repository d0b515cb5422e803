// Python bindings. Configs and structured results cross the boundary as
// JSON text; arrays as float64 numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "avloc/error.hpp"
#include "avloc/evaluation.hpp"
#include "avloc/gradcheck_suite.hpp"
#include "avloc/icl.hpp"
#include "avloc/localization.hpp"
#include "avloc/pipeline.hpp"

namespace py = pybind11;
using namespace avloc;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array a(shape);
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

pipeline::RunConfig run_config(const std::string& text) {
  return pipeline::run_config_from_json(text.empty() ? json::object() : json::parse(text));
}

py::tuple loss_tuple(const icl::LossResult& r) {
  return py::make_tuple(r.value, to_array(r.grad_visual), to_array(r.grad_negative),
                        to_array(r.grad_audio));
}

icl::RelationMatrix relation_from(const Array& y) {
  if (y.ndim() != 2 || y.shape(0) != y.shape(1)) throw ShapeError("y must be square");
  icl::RelationMatrix m;
  m.k = static_cast<std::size_t>(y.shape(0));
  for (py::ssize_t i = 0; i < y.size(); ++i) m.y.push_back(y.data()[i] != 0.0 ? 1 : 0);
  return m;
}

}  // namespace

PYBIND11_MODULE(_avloc, m) {
  m.doc() = "Iterative contrastive sound localization core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  m.def("gen_corpus", [](const std::string& config, std::uint64_t seed, const std::string& out) {
    corpus::CorpusConfig cfg;
    if (!config.empty()) json::parse(config).get_to(cfg);
    pipeline::gen_corpus(cfg, seed, out);
  }, py::arg("config"), py::arg("seed"), py::arg("out"));

  m.def("train", [](const std::string& corpus, const std::string& out, const std::string& config,
                    const std::string& variant, std::size_t threads, std::size_t stop_after,
                    const std::string& resume, bool evaluate) {
    pipeline::TrainRequest req;
    req.corpus = corpus;
    req.out = out;
    req.config = run_config(config);
    req.variant = icl::parse_variant(variant);
    req.threads = threads;
    req.stop_after = stop_after;
    if (!resume.empty()) req.resume = resume;
    req.evaluate_each_epoch = evaluate;
    py::gil_scoped_release release;
    return icl::metrics_csv(pipeline::train(req).log);
  }, py::arg("corpus"), py::arg("out"), py::arg("config"), py::arg("variant"), py::arg("threads"),
     py::arg("stop_after"), py::arg("resume"), py::arg("evaluate"));

  m.def("evaluate", [](const std::string& corpus, const std::string& checkpoint,
                       const std::string& out, bool heatmaps, std::size_t threads) {
    pipeline::EvalRequest req;
    req.corpus = corpus;
    req.checkpoint = checkpoint;
    req.out = out;
    req.export_heatmaps = heatmaps;
    req.threads = threads;
    py::gil_scoped_release release;
    return eval::eval_result_to_json(pipeline::evaluate(req)).dump();
  }, py::arg("corpus"), py::arg("checkpoint"), py::arg("out"), py::arg("heatmaps"),
     py::arg("threads"));

  m.def("localize", [](const std::string& checkpoint, const std::string& image,
                       const std::string& audio_raw, const std::string& audio_json,
                       const std::string& out, std::optional<double> delta_v) {
    const auto r = pipeline::localize(checkpoint, image, audio_raw, audio_json, out, delta_v);
    return py::make_tuple(to_array(r.localization.heatmap), r.region.indices,
                          r.localization.response.degenerate);
  }, py::arg("checkpoint"), py::arg("image"), py::arg("audio_raw"), py::arg("audio_json"),
     py::arg("out"), py::arg("delta_v"));

  m.def("gradcheck", [](std::size_t seeds, std::uint64_t seed, bool corrupt) {
    GradcheckSuiteOptions o;
    o.num_seeds = seeds;
    o.seed = seed;
    o.corrupt = corrupt;
    const auto r = run_gradcheck_suite(o);
    json j{{"passed", r.passed}, {"seeds", r.seeds}, {"tolerance", r.tolerance}};
    for (const auto& c : r.components) j["components"][c.name] = c.max_rel_error;
    return j.dump();
  }, py::arg("seeds"), py::arg("seed"), py::arg("corrupt"));

  m.def("contrastive_loss", [](const Array& v, const Array& a, double tau) {
    return loss_tuple(icl::contrastive_loss(to_tensor(v), to_tensor(a), tau));
  }, py::arg("visual"), py::arg("audio"), py::arg("tau"));

  m.def("iterative_loss", [](const Array& vp, const Array& vm, const std::vector<bool>& has_neg,
                             const Array& a, const Array& y, double tau) {
    return loss_tuple(
        icl::iterative_loss(to_tensor(vp), to_tensor(vm), has_neg, to_tensor(a), relation_from(y), tau));
  }, py::arg("v_plus"), py::arg("v_minus"), py::arg("has_negative"), py::arg("audio"), py::arg("y"),
     py::arg("tau"));

  m.def("relation_matrix", [](const Array& a, double delta_a) {
    const auto r = icl::relation_matrix(to_tensor(a), delta_a);
    Tensor t({r.k, r.k});
    for (std::size_t i = 0; i < r.y.size(); ++i) t[i] = r.y[i];
    return to_array(t);
  }, py::arg("audio"), py::arg("delta_a"));

  m.def("minmax_normalize", [](const Array& r) {
    loc::ResponseMap m;
    m.values = to_tensor(r);
    const auto n = loc::minmax_normalize(m);
    return py::make_tuple(to_array(n.values), n.degenerate);
  }, py::arg("response"));

  m.def("threshold_region", [](const Array& normalized, double delta_v) {
    loc::ResponseMap m;
    m.values = to_tensor(normalized);
    m.normalized = true;
    return loc::threshold_region(m, delta_v).indices;
  }, py::arg("normalized"), py::arg("delta_v"));

  m.def("upsample_bilinear", [](const Array& map, std::size_t w, std::size_t h) {
    return to_array(loc::upsample_bilinear(to_tensor(map), w, h));
  }, py::arg("map"), py::arg("width"), py::arg("height"));

  m.def("consensus_map", [](const std::vector<std::array<int, 4>>& boxes, std::size_t w,
                            std::size_t h, std::size_t consensus) {
    std::vector<corpus::BoundingBox> b;
    for (const auto& x : boxes) b.push_back({x[0], x[1], x[2], x[3]});
    return to_array(eval::consensus_map(b, w, h, consensus));
  }, py::arg("boxes"), py::arg("width"), py::arg("height"), py::arg("consensus"));

  m.def("ciou", [](const Array& pred, const Array& g, double thr) {
    return eval::ciou(to_tensor(pred), to_tensor(g), thr);
  }, py::arg("pred"), py::arg("g"), py::arg("pixel_threshold"));

  m.def("success_curve", [](const std::vector<double>& scores) {
    const auto c = eval::success_curve(scores);
    return py::make_tuple(c.thresholds, c.ratios, c.auc);
  }, py::arg("scores"));

  m.def("log_mel", [](const std::vector<double>& samples, double rate, const std::string& config) {
    dsp::Waveform w;
    w.samples = samples;
    w.sample_rate = rate;
    const auto cfg = pipeline::lms_from_json(config.empty() ? json::object() : json::parse(config));
    return to_array(dsp::log_mel_spectrogram(w, cfg).values);
  }, py::arg("samples"), py::arg("sample_rate"), py::arg("config"));
}
