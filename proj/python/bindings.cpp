#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "blockpipe/analytics.hpp"
#include "blockpipe/engine.hpp"
#include "blockpipe/noise.hpp"
#include "blockpipe/run_config.hpp"
#include "blockpipe/rng.hpp"
#include "blockpipe/tensor.hpp"

namespace py = pybind11;
using namespace blockpipe;

namespace {

Tensor tensor_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int64_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> tensor_to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> out(shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

PipelineConfig config_from_dict(const py::dict& d) {
  py::module_ json = py::module_::import("json");
  const std::string text = py::cast<std::string>(json.attr("dumps")(d));
  return run_config_from_json_text(text).pipe;
}

py::dict run_to_dict(const RunResult& r) {
  py::dict out;
  py::list blocks;
  for (const EmittedBlock& b : r.blocks) {
    py::dict item;
    item["block_id"] = b.block_id;
    item["frames"] = tensor_to_numpy(b.frames);
    item["noise_ids"] = b.noise_ids;
    item["frame_ids"] = b.frame_ids;
    blocks.append(std::move(item));
  }
  out["blocks"] = std::move(blocks);
  out["rounds"] = r.rounds;

  const BubbleStats st = measure_bubbles(r.log);
  py::dict bubbles;
  bubbles["busy_per_device"] = st.busy_per_device;
  bubbles["idle_per_device"] = st.idle_per_device;
  bubbles["warmup_idle"] = st.warmup_idle;
  bubbles["steady_idle"] = st.steady_idle;
  bubbles["cooldown_idle"] = st.cooldown_idle;
  bubbles["ratio"] = st.ratio;
  out["bubbles"] = std::move(bubbles);

  py::list ledger;
  for (const LedgerEntry& e : r.ledger.entries) {
    py::dict item;
    item["channel"] = e.channel;
    item["round"] = e.round;
    item["passes"] = e.passes;
    item["scalars"] = e.scalars;
    ledger.append(std::move(item));
  }
  out["ledger"] = std::move(ledger);
  return out;
}

}  // namespace

PYBIND11_MODULE(_blockpipe, m) {
  m.doc() = "block-wise denoising pipeline simulator";

  m.def("matmul", [](const py::array_t<double>& a, const py::array_t<double>& b) {
    return tensor_to_numpy(matmul(tensor_from_numpy(a), tensor_from_numpy(b)));
  });
  m.def("softmax_rows", [](const py::array_t<double>& x) {
    return tensor_to_numpy(softmax_rows(tensor_from_numpy(x)));
  });
  m.def("layer_norm", [](const py::array_t<double>& x, double eps) {
    return tensor_to_numpy(layer_norm(tensor_from_numpy(x), eps));
  }, py::arg("x"), py::arg("eps") = 1e-5);

  py::class_<RandomSource>(m, "RandomSource")
      .def(py::init<uint64_t>())
      .def("next_u64", &RandomSource::next_u64)
      .def("next_uniform", &RandomSource::next_uniform)
      .def("next_normal", &RandomSource::next_normal)
      .def("permutation", &RandomSource::permutation);

  m.def("bubble_size",
        [](int n, int t, int64_t blocks, const std::string& order) {
          return bubble_size({n, t, blocks, parse_order(order)});
        },
        py::arg("devices"), py::arg("steps"), py::arg("block_num"),
        py::arg("order") = "reverse");
  m.def("bubble_ratio",
        [](int n, int t, int64_t blocks, const std::string& order) {
          return bubble_ratio({n, t, blocks, parse_order(order)});
        },
        py::arg("devices"), py::arg("steps"), py::arg("block_num"),
        py::arg("order") = "reverse");

  m.def("method_cost",
        [](const std::string& method, const py::kwargs& kwargs) {
          CostParams cp;
          for (auto item : kwargs) {
            const std::string key = py::cast<std::string>(item.first);
            if (key == "frames") cp.frames = py::cast<int64_t>(item.second);
            else if (key == "height") cp.height = py::cast<int64_t>(item.second);
            else if (key == "width") cp.width = py::cast<int64_t>(item.second);
            else if (key == "hidden") cp.hidden = py::cast<int64_t>(item.second);
            else if (key == "channels") cp.channels = py::cast<int64_t>(item.second);
            else if (key == "layers") cp.layers = py::cast<int64_t>(item.second);
            else if (key == "devices") cp.devices = py::cast<int64_t>(item.second);
            else if (key == "num_b") cp.num_b = py::cast<int64_t>(item.second);
            else if (key == "num_c") cp.num_c = py::cast<int64_t>(item.second);
            else if (key == "model_mem") cp.model_mem = py::cast<double>(item.second);
            else if (key == "kv_mem") cp.kv_mem = py::cast<double>(item.second);
            else if (key == "ring_refinement") cp.ring_refinement = py::cast<bool>(item.second);
            else throw std::invalid_argument("unknown cost parameter: " + key);
          }
          const MethodCost c = method_cost(parse_method(method), cp);
          py::dict out;
          out["method"] = method_name(c.method);
          out["comm_scalars"] = c.comm_scalars;
          out["comm_overlap"] = c.comm_overlap;
          out["model_mem"] = c.model_mem;
          out["kv_mem"] = c.kv_mem;
          return out;
        },
        py::arg("method"));

  m.def("run_pipeline",
        [](const py::dict& config) { return run_to_dict(run_pipeline(config_from_dict(config))); },
        py::arg("config") = py::dict());
  m.def("serial_oracle",
        [](const py::dict& config) { return run_to_dict(serial_oracle(config_from_dict(config))); },
        py::arg("config") = py::dict());

  m.def("coordinated_noise_ids",
        [](int num_b, int num_c, int appends, uint64_t seed) {
          NoisePool pool = build_pool(num_b, num_c, {1, 1, 1}, derive_seed(seed, {0}));
          RandomSource rng(derive_seed(seed, {1}));
          std::vector<std::vector<int>> out;
          NoiseDraw cur = init_first_block(pool, rng);
          out.push_back(cur.noise_ids);
          for (int i = 0; i < appends; ++i) {
            std::vector<int> window(cur.noise_ids.end() - num_c / 2, cur.noise_ids.end());
            cur = init_next_block(pool, window, rng);
            out.push_back(cur.noise_ids);
          }
          return out;
        },
        py::arg("num_b"), py::arg("num_c"), py::arg("appends"), py::arg("seed") = 2);
}
