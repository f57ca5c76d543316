#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gradmorph/checkpoint.hpp"
#include "gradmorph/data.hpp"
#include "gradmorph/errors.hpp"
#include "gradmorph/io.hpp"
#include "gradmorph/metrics.hpp"
#include "gradmorph/perturb.hpp"
#include "gradmorph/pipeline.hpp"
#include "gradmorph/segnet.hpp"
#include "gradmorph/translator.hpp"

namespace py = pybind11;
using namespace gradmorph;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape.push_back(static_cast<int>(arr.shape(i)));
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> arr(shape);
    std::copy(t.data.begin(), t.data.end(), arr.mutable_data());
    return arr;
}

LabelMap labelmap_from_array(const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw ContractViolation("label map must be a 2-d array");
    LabelMap m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    for (py::ssize_t i = 0; i < arr.size(); ++i) m.labels[static_cast<std::size_t>(i)] = arr.data()[i];
    return m;
}

py::array_t<std::int32_t> array_from_labelmap(const LabelMap& m) {
    py::array_t<std::int32_t> arr({static_cast<py::ssize_t>(m.height), static_cast<py::ssize_t>(m.width)});
    std::copy(m.labels.begin(), m.labels.end(), arr.mutable_data());
    return arr;
}

SampleSet samples_from_lists(const std::vector<py::array_t<double>>& images,
                             const std::vector<py::array_t<std::int32_t>>& masks) {
    if (images.size() != masks.size()) throw ContractViolation("images and masks must have equal length");
    SampleSet out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        Sample s;
        s.id = "py_" + std::to_string(i);
        s.image = tensor_from_array(images[i]);
        s.mask = labelmap_from_array(masks[i]);
        out.push_back(std::move(s));
    }
    return out;
}

py::dict perturb_result_to_dict(const PerturbResult& r) {
    py::dict d;
    d["delta"] = array_from_tensor(r.delta_total);
    d["perturbed"] = array_from_tensor(r.perturbed_image);
    d["terminated_by"] = to_string(r.terminated_by);
    d["final_dice"] = r.final_dice;
    d["final_pred"] = array_from_labelmap(r.final_pred);
    py::list trace;
    for (const PerturbTraceRow& row : r.trace) {
        py::dict t;
        t["iteration"] = row.iteration;
        t["G"] = row.objective;
        t["dice"] = row.dice;
        t["delta_linf"] = row.delta_linf;
        trace.append(t);
    }
    d["trace"] = trace;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gradient-driven input transfer for segmentation networks";

    py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);

    // --- configs -------------------------------------------------------------
    py::class_<SegNetConfig>(m, "SegNetConfig")
        .def(py::init([](int depth, int base_channels, int num_classes, int input_channels) {
                 SegNetConfig c{depth, base_channels, num_classes, input_channels};
                 c.validate();
                 return c;
             }),
             py::arg("depth") = 3, py::arg("base_channels") = 8, py::arg("num_classes") = 2,
             py::arg("input_channels") = 1)
        .def_readwrite("depth", &SegNetConfig::depth)
        .def_readwrite("base_channels", &SegNetConfig::base_channels)
        .def_readwrite("num_classes", &SegNetConfig::num_classes)
        .def_readwrite("input_channels", &SegNetConfig::input_channels);

    py::class_<TranslatorConfig>(m, "TranslatorConfig")
        .def(py::init([](int blocks, int growth_channels, int layers_per_block, int input_channels) {
                 TranslatorConfig c{blocks, growth_channels, layers_per_block, input_channels};
                 c.validate();
                 return c;
             }),
             py::arg("blocks") = 2, py::arg("growth_channels") = 8, py::arg("layers_per_block") = 3,
             py::arg("input_channels") = 1)
        .def_readwrite("blocks", &TranslatorConfig::blocks)
        .def_readwrite("growth_channels", &TranslatorConfig::growth_channels)
        .def_readwrite("layers_per_block", &TranslatorConfig::layers_per_block)
        .def_readwrite("input_channels", &TranslatorConfig::input_channels);

    py::class_<PerturbConfig>(m, "PerturbConfig")
        .def(py::init([](double gamma, int max_iters, double dice_tolerance) {
                 PerturbConfig c{gamma, max_iters, dice_tolerance};
                 c.validate();
                 return c;
             }),
             py::arg("gamma") = 1.0, py::arg("max_iters") = 100, py::arg("dice_tolerance") = 0.995)
        .def_readwrite("gamma", &PerturbConfig::gamma)
        .def_readwrite("max_iters", &PerturbConfig::max_iters)
        .def_readwrite("dice_tolerance", &PerturbConfig::dice_tolerance);

    py::class_<TranslationLossConfig>(m, "TranslationLossConfig")
        .def(py::init([](double lambda, int ssim_window, double k1, double k2, double dynamic_range) {
                 TranslationLossConfig c{lambda, ssim_window, k1, k2, dynamic_range};
                 c.validate();
                 return c;
             }),
             py::arg("lambda_") = 1.0, py::arg("ssim_window") = 8, py::arg("k1") = 0.01, py::arg("k2") = 0.03,
             py::arg("dynamic_range") = 1.0)
        .def_readwrite("lambda_", &TranslationLossConfig::lambda)
        .def_readwrite("ssim_window", &TranslationLossConfig::ssim_window);

    // --- models -----------------------------------------------------------------
    py::class_<SegModel>(m, "SegModel")
        .def_property_readonly("config", [](const SegModel& s) { return s.config; })
        .def_property_readonly("param_count", [](const SegModel& s) { return s.params.total_elements(); })
        .def("logits", [](const SegModel& s, const py::array_t<double>& img) {
            return array_from_tensor(seg_logits(s, tensor_from_array(img)));
        })
        .def("predict", [](const SegModel& s, const py::array_t<double>& img) {
            return array_from_labelmap(predict(s, tensor_from_array(img)));
        });

    py::class_<TranslatorModel>(m, "TranslatorModel")
        .def_property_readonly("config", [](const TranslatorModel& t) { return t.config; })
        .def_property_readonly("param_count", [](const TranslatorModel& t) { return t.params.total_elements(); })
        .def("translate", [](const TranslatorModel& t, const py::array_t<double>& img) {
            return array_from_tensor(translate(t, tensor_from_array(img)));
        });

    m.def("build_segnet", &build_segnet, py::arg("config"), py::arg("seed"));
    m.def("build_translator", &build_translator, py::arg("config"), py::arg("seed"));

    m.def(
        "train_segmentation",
        [](SegModel& model, const std::vector<py::array_t<double>>& images,
           const std::vector<py::array_t<std::int32_t>>& masks, int epochs, int batch_size, std::uint64_t seed) {
            const SampleSet ds = samples_from_lists(images, masks);
            AdadeltaState opt;
            std::vector<double> curve;
            {
                py::gil_scoped_release release;
                curve = train_segmentation(model, ds, epochs, batch_size, opt, seed);
            }
            return curve;
        },
        py::arg("model"), py::arg("images"), py::arg("masks"), py::arg("epochs"), py::arg("batch_size") = 8,
        py::arg("seed") = 1);

    m.def(
        "train_translator",
        [](TranslatorModel& model, const std::vector<py::array_t<double>>& inputs,
           const std::vector<py::array_t<double>>& targets, const TranslationLossConfig& loss_cfg, int epochs,
           int batch_size, std::uint64_t seed) {
            if (inputs.size() != targets.size()) throw ContractViolation("inputs/targets length mismatch");
            ImagePairSet pairs;
            for (std::size_t i = 0; i < inputs.size(); ++i)
                pairs.emplace_back(tensor_from_array(inputs[i]), tensor_from_array(targets[i]));
            AdadeltaState opt;
            std::vector<double> curve;
            {
                py::gil_scoped_release release;
                curve = train_translator(model, pairs, loss_cfg, epochs, batch_size, opt, seed);
            }
            return curve;
        },
        py::arg("model"), py::arg("inputs"), py::arg("targets"), py::arg("loss_cfg") = TranslationLossConfig{},
        py::arg("epochs") = 10, py::arg("batch_size") = 8, py::arg("seed") = 1);

    // --- perturbation --------------------------------------------------------------
    m.def("objective_g", [](const py::array_t<double>& logits, const py::array_t<std::int32_t>& pred,
                            const py::array_t<std::int32_t>& gt) {
        return objective_g(tensor_from_array(logits), labelmap_from_array(pred), labelmap_from_array(gt));
    });

    m.def(
        "compute_perturbation",
        [](const SegModel& model, const py::array_t<double>& image, const py::array_t<std::int32_t>& gt,
           const PerturbConfig& cfg) {
            const Tensor img = tensor_from_array(image);
            const LabelMap mask = labelmap_from_array(gt);
            PerturbResult result;
            {
                py::gil_scoped_release release;
                result = compute_perturbation(model, img, mask, cfg);
            }
            return perturb_result_to_dict(result);
        },
        py::arg("model"), py::arg("image"), py::arg("gt"), py::arg("config") = PerturbConfig{});

    // --- metrics -----------------------------------------------------------------
    m.def("dice", [](const py::array_t<std::int32_t>& pred, const py::array_t<std::int32_t>& gt, int positive) {
        return dice(labelmap_from_array(pred), labelmap_from_array(gt), positive);
    }, py::arg("pred"), py::arg("gt"), py::arg("positive_class") = 1);
    m.def("fpr", [](const py::array_t<std::int32_t>& pred, const py::array_t<std::int32_t>& gt, int positive) {
        return fpr(labelmap_from_array(pred), labelmap_from_array(gt), positive);
    }, py::arg("pred"), py::arg("gt"), py::arg("positive_class") = 1);
    m.def("fnr", [](const py::array_t<std::int32_t>& pred, const py::array_t<std::int32_t>& gt, int positive) {
        return fnr(labelmap_from_array(pred), labelmap_from_array(gt), positive);
    }, py::arg("pred"), py::arg("gt"), py::arg("positive_class") = 1);

    m.def("ssim", [](const py::array_t<double>& a, const py::array_t<double>& b, const TranslationLossConfig& cfg) {
        return ssim(tensor_from_array(a), tensor_from_array(b), cfg);
    }, py::arg("a"), py::arg("b"), py::arg("config") = TranslationLossConfig{});
    m.def("l1_mean", [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return l1_mean(tensor_from_array(a), tensor_from_array(b));
    });
    m.def("translation_loss",
          [](const py::array_t<double>& out, const py::array_t<double>& target, const TranslationLossConfig& cfg) {
              return translation_loss(tensor_from_array(out), tensor_from_array(target), cfg);
          },
          py::arg("output"), py::arg("target"), py::arg("config") = TranslationLossConfig{});

    m.def("silverman_bandwidth", &silverman_bandwidth);
    m.def("gaussian_kde", &gaussian_kde, py::arg("samples"), py::arg("grid"));
    m.def("kde_default_grid", &kde_default_grid, py::arg("samples"), py::arg("points") = 256);

    // --- data / io ------------------------------------------------------------------
    m.def(
        "generate_synthetic",
        [](int count, int image_size, const std::string& family, double contrast, double noise_stddev, bool texture,
           double split_ratio, std::uint64_t seed) {
            SynthConfig cfg;
            cfg.count = count;
            cfg.image_size = image_size;
            cfg.family = shape_family_from_string(family);
            cfg.contrast = contrast;
            cfg.noise_stddev = noise_stddev;
            cfg.texture = texture;
            cfg.split_ratio = split_ratio;
            cfg.seed = seed;
            const SynthDataset ds = generate_synthetic(cfg);
            const auto pack = [](const SampleSet& set) {
                py::list out;
                for (const Sample& s : set) {
                    py::dict d;
                    d["id"] = s.id;
                    d["image"] = array_from_tensor(s.image);
                    d["mask"] = array_from_labelmap(s.mask);
                    out.append(d);
                }
                return out;
            };
            py::dict out;
            out["train"] = pack(ds.train);
            out["test"] = pack(ds.test);
            return out;
        },
        py::arg("count") = 32, py::arg("image_size") = 64, py::arg("family") = "blobs", py::arg("contrast") = 0.18,
        py::arg("noise_stddev") = 0.30, py::arg("texture") = false, py::arg("split_ratio") = 0.8, py::arg("seed") = 1);

    m.def("save_segnet", &save_segnet, py::arg("path"), py::arg("model"));
    m.def("load_segnet", &load_segnet, py::arg("path"));
    m.def("save_translator", &save_translator, py::arg("path"), py::arg("model"));
    m.def("load_translator", &load_translator, py::arg("path"));

    m.def("read_pgm", [](const fs::path& p) { return array_from_tensor(read_pgm(p)); });
    m.def("write_pgm", [](const fs::path& p, const py::array_t<double>& img) { write_pgm(p, tensor_from_array(img)); });
    m.def("read_tensor", [](const fs::path& p) { return array_from_tensor(read_tensor(p)); });
    m.def("write_tensor",
          [](const fs::path& p, const py::array_t<double>& t) { write_tensor(p, tensor_from_array(t)); });
}
