#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vidrep/classify.hpp"
#include "vidrep/codebook.hpp"
#include "vidrep/encode.hpp"
#include "vidrep/error.hpp"
#include "vidrep/eval.hpp"
#include "vidrep/io.hpp"
#include "vidrep/lcd.hpp"
#include "vidrep/pq.hpp"
#include "vidrep/preprocess.hpp"

namespace py = pybind11;
using namespace vidrep;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

DescriptorSet to_set(const FloatArray& a) {
  if (a.ndim() != 2) throw Error(ErrorKind::Shape, "expected a 2-D array");
  const auto n = static_cast<std::size_t>(a.shape(0));
  const auto d = static_cast<std::size_t>(a.shape(1));
  return DescriptorSet(n, d, std::vector<float>(a.data(), a.data() + n * d));
}

std::span<const float> to_span(const FloatArray& a) {
  if (a.ndim() != 1) throw Error(ErrorKind::Shape, "expected a 1-D array");
  return {a.data(), static_cast<std::size_t>(a.size())};
}

py::array_t<float> from_set(const DescriptorSet& s) {
  py::array_t<float> out({s.n_items, s.dim});
  std::copy(s.data.begin(), s.data.end(), out.mutable_data());
  return out;
}

template <typename T>
py::array_t<T> from_vector(const std::vector<T>& v) {
  py::array_t<T> out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<int> signed_labels(const IntArray& labels) {
  return to_signed_labels({labels.data(), static_cast<std::size_t>(labels.size())});
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Video event representations: encoders, product quantization, SVMs and evaluation";

  static py::exception<Error> vidrep_error(m, "VidrepError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = vidrep_error;
      py::object inst = err(e.what());
      inst.attr("kind") = to_string(e.kind());
      PyErr_SetObject(err.ptr(), inst.ptr());
    }
  });

  py::class_<PcaModel>(m, "PcaModel")
      .def_readonly("input_dim", &PcaModel::input_dim)
      .def_readonly("output_dim", &PcaModel::output_dim)
      .def_readonly("whiten", &PcaModel::whiten)
      .def_property_readonly("eigenvalues", [](const PcaModel& p) { return from_vector(p.eigenvalues); })
      .def("transform", [](const PcaModel& p, const FloatArray& x) { return from_set(apply_pca(p, to_set(x))); })
      .def("save", [](const PcaModel& p, const std::filesystem::path& path) { io::write_model(path, to_model_file(p)); })
      .def_static("load", [](const std::filesystem::path& path) { return pca_from_model(io::read_model(path)); });
  m.def(
      "fit_pca", [](const FloatArray& x, std::size_t dim, bool whiten, double eps) {
        return fit_pca(to_set(x), dim, whiten, eps);
      },
      py::arg("x"), py::arg("dim"), py::arg("whiten") = true, py::arg("eps") = 1e-8);

  py::class_<Codebook>(m, "Codebook")
      .def_readonly("k", &Codebook::k)
      .def_readonly("dim", &Codebook::dim)
      .def_property_readonly("centers", [](const Codebook& c) { return from_set(DescriptorSet(c.k, c.dim, c.centers)); })
      .def("save", [](const Codebook& c, const std::filesystem::path& path) { io::write_model(path, to_model_file(c)); })
      .def_static("load", [](const std::filesystem::path& path) { return codebook_from_model(io::read_model(path)); });
  m.def(
      "fit_kmeans", [](const FloatArray& x, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
        KMeansOptions o;
        o.k = k;
        o.seed = seed;
        o.max_iter = max_iter;
        return fit_kmeans(to_set(x), o);
      },
      py::arg("x"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 100);

  py::class_<GmmModel>(m, "GmmModel")
      .def_readonly("k", &GmmModel::k)
      .def_readonly("dim", &GmmModel::dim)
      .def_property_readonly("means", [](const GmmModel& g) { return from_set(DescriptorSet(g.k, g.dim, g.means)); })
      .def_property_readonly("variances",
                             [](const GmmModel& g) { return from_set(DescriptorSet(g.k, g.dim, g.variances)); })
      .def_property_readonly("priors", [](const GmmModel& g) { return from_vector(g.priors); })
      .def("save", [](const GmmModel& g, const std::filesystem::path& path) { io::write_model(path, to_model_file(g)); })
      .def_static("load", [](const std::filesystem::path& path) { return gmm_from_model(io::read_model(path)); });
  m.def(
      "fit_gmm", [](const FloatArray& x, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
        GmmOptions o;
        o.k = k;
        o.seed = seed;
        o.max_iter = max_iter;
        return fit_gmm(to_set(x), o);
      },
      py::arg("x"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 100);

  m.def(
      "vlad", [](const Codebook& cb, const FloatArray& frames, std::size_t knn, bool intra, bool ssr, bool l2,
                 const std::string& order) {
        VladOptions o;
        o.knn = knn;
        o.intra = intra;
        o.ssr = ssr;
        o.l2 = l2;
        o.order = parse_norm_order(order);
        return from_vector(vlad_encode(cb, to_set(frames), o).vector);
      },
      py::arg("codebook"), py::arg("frames"), py::arg("knn") = 5, py::arg("intra") = true, py::arg("ssr") = true,
      py::arg("l2") = true, py::arg("order") = "intra,ssr,l2");
  m.def(
      "fisher", [](const GmmModel& g, const FloatArray& frames, bool ssr, bool l2) {
        FisherOptions o;
        o.ssr = ssr;
        o.l2 = l2;
        return from_vector(fisher_encode(g, to_set(frames), o).vector);
      },
      py::arg("gmm"), py::arg("frames"), py::arg("ssr") = true, py::arg("l2") = true);
  m.def("average_pool", [](const FloatArray& frames) { return from_vector(average_pool(to_set(frames)).vector); });

  m.def(
      "lcd", [](const FloatArray& frame, bool spp, std::vector<std::size_t> levels) {
        if (frame.ndim() != 3 || frame.shape(0) != frame.shape(1))
          throw Error(ErrorKind::Shape, "lcd: expected an a x a x M array");
        const auto a = static_cast<std::size_t>(frame.shape(0));
        const auto ch = static_cast<std::size_t>(frame.shape(2));
        std::span<const float> data(frame.data(), static_cast<std::size_t>(frame.size()));
        if (!spp) return from_set(extract_lcd(data, a, ch));
        SppConfig cfg;
        cfg.levels = std::move(levels);
        return from_set(spp_lcd(data, a, ch, cfg));
      },
      py::arg("frame"), py::arg("spp") = true, py::arg("levels") = std::vector<std::size_t>{6, 3, 2, 1});

  py::class_<PqModel>(m, "PqModel")
      .def_readonly("dim", &PqModel::dim)
      .def_readonly("sub_len", &PqModel::sub_len)
      .def_readonly("bits", &PqModel::bits)
      .def_property_readonly("subspaces", &PqModel::subspaces)
      .def("encode", [](const PqModel& p, const FloatArray& x) { return from_vector(pq_encode(p, to_span(x))); })
      .def("decode",
           [](const PqModel& p, const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& c) {
             return from_vector(pq_decode(p, {c.data(), static_cast<std::size_t>(c.size())}));
           })
      .def("save", [](const PqModel& p, const std::filesystem::path& path) { io::write_model(path, to_model_file(p)); })
      .def_static("load", [](const std::filesystem::path& path) { return pq_from_model(io::read_model(path)); });
  m.def(
      "fit_pq", [](const FloatArray& x, std::size_t sub_len, unsigned bits, std::uint64_t seed, std::size_t max_iter) {
        PqFitOptions o;
        o.sub_len = sub_len;
        o.bits = bits;
        o.seed = seed;
        o.max_iter = max_iter;
        return fit_pq(to_set(x), o);
      },
      py::arg("x"), py::arg("sub_len") = 4, py::arg("bits") = 8, py::arg("seed") = 0, py::arg("max_iter") = 100);
  m.def("compression_ratio", &compression_ratio, py::arg("sub_len"), py::arg("bits"));

  py::class_<LinearClassifier>(m, "LinearClassifier")
      .def_property_readonly("w", [](const LinearClassifier& c) { return from_vector(c.w); })
      .def_readonly("bias", &LinearClassifier::bias)
      .def_readonly("C", &LinearClassifier::C)
      .def("decision_function",
           [](const LinearClassifier& c, const FloatArray& x) { return from_vector(predict_linear(c, to_set(x))); })
      .def("score_compressed",
           [](const LinearClassifier& c, const PqModel& p,
              const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& codes) {
             if (codes.ndim() != 2) throw Error(ErrorKind::Shape, "score_compressed: expected a 2-D code array");
             const auto lut = build_lut(p, c.w, c.bias);
             const auto n = static_cast<std::size_t>(codes.shape(0));
             const auto s = static_cast<std::size_t>(codes.shape(1));
             std::vector<double> out(n);
             for (std::size_t i = 0; i < n; ++i) out[i] = score_compressed(lut, {codes.data() + i * s, s});
             return from_vector(out);
           })
      .def("save",
           [](const LinearClassifier& c, const std::filesystem::path& path) { io::write_model(path, to_model_file(c)); })
      .def_static("load", [](const std::filesystem::path& path) { return linear_from_model(io::read_model(path)); });
  m.def(
      "train_linear_svm", [](const FloatArray& x, const IntArray& labels, double C) {
        return train_linear_svm(to_set(x), signed_labels(labels), C);
      },
      py::arg("x"), py::arg("labels"), py::arg("C") = 1.0);

  py::class_<KernelSvmModel>(m, "KernelSvmModel")
      .def_property_readonly("kernel", [](const KernelSvmModel& k) { return std::string(to_string(k.kernel)); })
      .def_readonly("sigma", &KernelSvmModel::sigma)
      .def_readonly("A", &KernelSvmModel::A)
      .def_readonly("C", &KernelSvmModel::C)
      .def_readonly("bias", &KernelSvmModel::bias)
      .def_property_readonly("n_support", [](const KernelSvmModel& k) { return k.support_vectors.n_items; })
      .def("decision_function",
           [](const KernelSvmModel& k, const FloatArray& x) { return from_vector(predict_kernel(k, to_set(x))); })
      .def("save",
           [](const KernelSvmModel& k, const std::filesystem::path& path) { io::write_model(path, to_model_file(k)); })
      .def_static("load",
                  [](const std::filesystem::path& path) { return kernel_svm_from_model(io::read_model(path)); });
  m.def(
      "train_kernel_svm",
      [](const FloatArray& x, const IntArray& labels, const std::string& kernel, double sigma, double C) {
        return fit_kernel_svm(to_set(x), signed_labels(labels), parse_kernel(kernel), sigma, C);
      },
      py::arg("x"), py::arg("labels"), py::arg("kernel") = "chi2", py::arg("sigma") = 1.0, py::arg("C") = 1.0);

  m.def(
      "average_precision", [](const DoubleArray& scores, const IntArray& labels, bool interpolated) {
        return average_precision(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())),
                                 std::span<const int>(labels.data(), static_cast<std::size_t>(labels.size())),
                                 interpolated ? ApMode::Interpolated11 : ApMode::NonInterpolated);
      },
      py::arg("scores"), py::arg("labels"), py::arg("interpolated") = false);

  m.def("read_descriptors", [](const std::filesystem::path& path) { return from_set(io::read_descriptors(path)); });
  m.def("write_descriptors",
        [](const std::filesystem::path& path, const FloatArray& x) { io::write_descriptors(path, to_set(x)); });
}
