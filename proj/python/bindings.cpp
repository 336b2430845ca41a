#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "smartedit/config.hpp"
#include "smartedit/metrics.hpp"
#include "smartedit/train.hpp"

namespace py = pybind11;
using namespace smartedit;

namespace {

Image image_from_array(const py::array_t<double>& arr) {
    auto buf = arr.unchecked<3>();
    if (buf.shape(2) != 3) throw ShapeError("image array must be (H, W, 3)");
    Image img(static_cast<int>(buf.shape(0)), static_cast<int>(buf.shape(1)));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = buf(y, x, c);
    return img;
}

py::array_t<double> image_to_array(const Image& img) {
    py::array_t<double> arr({img.height, img.width, 3});
    auto buf = arr.mutable_unchecked<3>();
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) buf(y, x, c) = img.at(c, y, x);
    return arr;
}

Mask mask_from_array(const py::array_t<uint8_t>& arr) {
    auto buf = arr.unchecked<2>();
    Mask m(static_cast<int>(buf.shape(0)), static_cast<int>(buf.shape(1)));
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) m.at(y, x) = buf(y, x) ? 1 : 0;
    return m;
}

py::array_t<uint8_t> mask_to_array(const Mask& m) {
    py::array_t<uint8_t> arr({m.height, m.width});
    auto buf = arr.mutable_unchecked<2>();
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) buf(y, x) = m.at(y, x);
    return arr;
}

Tensor tensor3_from_array(const py::array_t<double>& arr) {
    auto buf = arr.unchecked<3>();
    Shape shape{buf.shape(0), buf.shape(1), buf.shape(2)};
    std::vector<double> values(static_cast<size_t>(shape_numel(shape)));
    size_t i = 0;
    for (int64_t a = 0; a < shape[0]; ++a)
        for (int64_t b = 0; b < shape[1]; ++b)
            for (int64_t c = 0; c < shape[2]; ++c) values[i++] = buf(a, b, c);
    return Tensor(std::move(shape), std::move(values));
}

py::array_t<double> tensor3_to_array(const Tensor& t) {
    if (t.rank() != 3) throw ShapeError("expected a rank-3 tensor");
    py::array_t<double> arr({t.dim(0), t.dim(1), t.dim(2)});
    std::memcpy(arr.mutable_data(), t.values().data(), sizeof(double) * t.values().size());
    return arr;
}

Mask default_region(const py::object& region, int h, int w) {
    if (region.is_none()) return full_mask(h, w);
    return mask_from_array(region.cast<py::array_t<uint8_t>>());
}

/// Editing stack handle: config + optional checkpoint.
class Editor {
public:
    Editor(const std::string& config_path, const std::string& checkpoint_path)
        : cfg_(config_path.empty() ? default_config(2) : load_config(config_path)),
          model_(cfg_.model, cfg_.global_seed) {
        if (!checkpoint_path.empty()) model_.load(checkpoint_path);
    }

    py::array_t<double> edit(const py::array_t<double>& image, const std::string& instruction,
                             int steps, uint64_t seed, double cfg_text, double cfg_image) {
        Image out = model_.edit(image_from_array(image), instruction, steps, seed, cfg_text,
                                cfg_image);
        return image_to_array(out);
    }

    std::vector<std::string> vocab_tokens() const {
        std::vector<std::string> out;
        for (int id = 0; id < model_.lm().vocab().total_size(); ++id)
            out.push_back(model_.lm().vocab().token_text(id));
        return out;
    }

    std::string config_hash_hex() const { return config_hash(cfg_); }

private:
    ExperimentConfig cfg_;
    SmartEditModel model_;
};

}  // namespace

PYBIND11_MODULE(_smartedit, m) {
    m.doc() = "Toy instruction-based image editing stack: LM bridge, QFormer, "
              "bidirectional interaction module and latent diffusion.";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<InvariantViolation>(m, "InvariantError");

    // ---- data generation ----
    m.def(
        "render_scene",
        [](uint64_t seed, int n_objects, bool with_mirror_pair) {
            return image_to_array(render_scene(generate_scene(seed, n_objects, with_mirror_pair)));
        },
        py::arg("seed"), py::arg("n_objects") = 3, py::arg("with_mirror_pair") = false,
        "Deterministic procedural scene rendered to an (H, W, 3) array");

    m.def(
        "make_sample",
        [](const std::string& task, uint64_t seed) {
            InstructionSample s = make_sample(parse_task(task), seed, Split::Train);
            py::dict d;
            d["source"] = image_to_array(s.source);
            d["target"] = image_to_array(s.target);
            d["mask"] = mask_to_array(s.edit_mask);
            d["instruction"] = s.instruction;
            d["task"] = task_name(s.task);
            return d;
        },
        py::arg("task"), py::arg("seed"),
        "One deterministic instruction-editing pair for the given task name");

    m.def(
        "write_dataset",
        [](const std::string& out_dir, uint64_t seed, int n_train, int n_eval) {
            DatasetSpec spec;
            spec.global_seed = seed;
            spec.n_train = n_train;
            spec.n_eval = n_eval;
            write_dataset(spec, out_dir);
        },
        py::arg("out_dir"), py::arg("seed") = 0, py::arg("n_train") = 476,
        py::arg("n_eval") = 219);

    m.def("task_names", [] {
        std::vector<std::string> names;
        for (Task t : {Task::PlainEdit, Task::Segmentation, Task::UnderstandLocation,
                       Task::UnderstandColor, Task::UnderstandSize, Task::UnderstandMirror,
                       Task::ReasonKnowledge})
            names.push_back(task_name(t));
        return names;
    });

    // ---- metrics ----
    m.def(
        "psnr",
        [](const py::array_t<double>& a, const py::array_t<double>& b, const py::object& region) {
            Image ia = image_from_array(a), ib = image_from_array(b);
            return psnr(ia, ib, default_region(region, ia.height, ia.width));
        },
        py::arg("a"), py::arg("b"), py::arg("region") = py::none());
    m.def(
        "ssim",
        [](const py::array_t<double>& a, const py::array_t<double>& b, const py::object& region) {
            Image ia = image_from_array(a), ib = image_from_array(b);
            return ssim(ia, ib, default_region(region, ia.height, ia.width));
        },
        py::arg("a"), py::arg("b"), py::arg("region") = py::none());
    m.def(
        "l1",
        [](const py::array_t<double>& a, const py::array_t<double>& b) {
            return l1(image_from_array(a), image_from_array(b));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "embed_score",
        [](const py::array_t<double>& a, const py::array_t<double>& b, const py::object& region,
           const std::string& embedder) {
            Image ia = image_from_array(a), ib = image_from_array(b);
            return embed_score(ia, ib, default_region(region, ia.height, ia.width),
                               get_embedder(embedder));
        },
        py::arg("a"), py::arg("b"), py::arg("region") = py::none(),
        py::arg("embedder") = "toyconv-v1");
    m.def(
        "ins_align_oracle",
        [](const py::array_t<double>& edited, const py::array_t<double>& target,
           const py::array_t<double>& source, const py::array_t<uint8_t>& mask) {
            return ins_align_oracle(image_from_array(edited), image_from_array(target),
                                    image_from_array(source), mask_from_array(mask));
        },
        py::arg("edited"), py::arg("target"), py::arg("source"), py::arg("mask"));

    // ---- diffusion pieces ----
    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_static("linear", &NoiseSchedule::linear, py::arg("T") = 1000,
                    py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02)
        .def_readonly("T", &NoiseSchedule::T)
        .def("alpha_bar", &NoiseSchedule::alpha_bar)
        .def("beta", &NoiseSchedule::beta);

    m.def(
        "q_sample",
        [](const py::array_t<double>& z0, int t, const py::array_t<double>& eps,
           const NoiseSchedule& sched) {
            return tensor3_to_array(
                q_sample(tensor3_from_array(z0), t, tensor3_from_array(eps), sched));
        },
        py::arg("z0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));

    m.def(
        "toy_encode",
        [](const py::array_t<double>& img) {
            return tensor3_to_array(toy_encode(image_from_array(img)));
        },
        py::arg("image"), "Orthonormal 4x4-block transform: (H, W, 3) -> (48, H/4, W/4)");
    m.def(
        "toy_decode",
        [](const py::array_t<double>& latent, bool clamp) {
            return image_to_array(toy_decode(tensor3_from_array(latent), clamp));
        },
        py::arg("latent"), py::arg("clamp") = true);

    // ---- editing ----
    py::class_<Editor>(m, "Editor")
        .def(py::init<const std::string&, const std::string&>(), py::arg("config_path") = "",
             py::arg("checkpoint_path") = "")
        .def("edit", &Editor::edit, py::arg("image"), py::arg("instruction"),
             py::arg("steps") = 50, py::arg("seed") = 0, py::arg("cfg_text") = 1.0,
             py::arg("cfg_image") = 1.0)
        .def("vocab_tokens", &Editor::vocab_tokens)
        .def("config_hash", &Editor::config_hash_hex);
}
