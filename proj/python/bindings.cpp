#include "commands.hpp"
#include "imfn/checkpoint.hpp"
#include "imfn/eval.hpp"
#include "imfn/memtree.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace imfn;

namespace {

using RowImages = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Python sees images as (N, 784) arrays; the library stores them as columns.
RowImages to_rows(const MatrixXf& columns) { return columns.transpose(); }

std::vector<ImageVector> frames_from_rows(const RowImages& rows) {
  if (rows.cols() != kImagePixels) throw ShapeError("frames must have 784 columns");
  std::vector<ImageVector> out;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.emplace_back(rows.row(i).transpose());
  return out;
}

RowImages stack(const std::vector<Eigen::VectorXf>& vs) {
  RowImages m(static_cast<Eigen::Index>(vs.size()), vs.empty() ? 0 : vs.front().size());
  for (std::size_t i = 0; i < vs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = vs[i].transpose();
  return m;
}

std::vector<MemoryVector> unstack(const RowImages& m) {
  std::vector<MemoryVector> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).transpose());
  return out;
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

ZeroLeafMode mode_of(const std::string& name) { return zero_leaf_mode_from_name(name); }

}  // namespace

PYBIND11_MODULE(_imfn, m) {
  m.doc() = "Tree-structured sequence memory: teacher, memory tree, student and metrics";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<Teacher>(m, "Teacher")
      .def(py::init([](Eigen::Index d, std::uint64_t seed, Eigen::Index hidden) {
             Rng rng(seed);
             return Teacher(d, rng, hidden);
           }),
           py::arg("memory_dim"), py::arg("seed") = 0, py::arg("codec_hidden") = kDefaultCodecHidden)
      .def_static("load", [](const std::filesystem::path& p) { return load_teacher(p); })
      .def_property_readonly("memory_dim", &Teacher::memory_dim)
      .def("encode", [](const Teacher& t, const RowImages& frames) { return stack(t.encode_sequence(frames_from_rows(frames))); })
      .def("merge_up", [](const Teacher& t, const RowImages& leaves) { return MemoryVector(t.merge_up(unstack(leaves))); })
      .def("invert_down",
           [](const Teacher& t, const MemoryVector& root, std::size_t n) { return stack(t.invert_down(root, n)); })
      .def("roundtrip", [](const Teacher& t, const RowImages& frames) { return stack(t.roundtrip(frames_from_rows(frames))); })
      .def("checksum", [](const Teacher& t) { return teacher_checksum(t); });

  py::class_<Student>(m, "Student")
      .def(py::init([](Eigen::Index d, std::size_t horizon, std::uint64_t seed) {
             Rng rng(seed);
             return Student(d, horizon, rng);
           }),
           py::arg("memory_dim"), py::arg("horizon"), py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return load_student(p); })
      .def_property_readonly("memory_dim", &Student::memory_dim)
      .def_property_readonly("horizon", &Student::horizon)
      .def("step", &Student::step, py::arg("memory"), py::arg("latent"), py::arg("t"))
      .def("rollout", [](const Student& s, const MemoryVector& m0, const RowImages& latents) {
        return stack(s.rollout(m0, unstack(latents)));
      });

  m.def(
      "generate_trajectory",
      [](const Teacher& t, const RowImages& latents, const std::string& mode) {
        const Trajectory tr = generate_trajectory(t, unstack(latents), mode_of(mode));
        return py::make_tuple(stack(tr.targets), tr.merges);
      },
      py::arg("teacher"), py::arg("latents"), py::arg("zero_leaf_mode") = "zero_latent",
      "Targets y_0..y_n (rows) and the merge count of the incremental update.");
  m.def(
      "naive_trajectory",
      [](const Teacher& t, const RowImages& latents, const std::string& mode) {
        const Trajectory tr = naive_trajectory(t, unstack(latents), mode_of(mode));
        return py::make_tuple(stack(tr.targets), tr.merges);
      },
      py::arg("teacher"), py::arg("latents"), py::arg("zero_leaf_mode") = "zero_latent");

  m.def("mse", [](const Eigen::VectorXf& a, const Eigen::VectorXf& b) { return mse(a, b); });
  m.def("psnr", [](double value) { return psnr(value); }, py::arg("mse"));
  m.def("ssim", [](const Eigen::VectorXf& a, const Eigen::VectorXf& b) { return ssim(a, b); });

  m.def("load_idx", [](const std::filesystem::path& p) { return to_rows(load_idx_file(p).images); });
  m.def(
      "synthetic_manifold",
      [](std::size_t count, std::size_t k, std::uint64_t seed) { return to_rows(synthetic_manifold(count, k, seed).images); },
      py::arg("count"), py::arg("intrinsic_dim") = 4, py::arg("seed") = 0);
  m.def(
      "make_split",
      [](std::size_t n, double ratio, std::uint64_t seed) {
        const SplitIndices s = make_split(n, ratio, seed);
        return py::make_tuple(s.train, s.test);
      },
      py::arg("n"), py::arg("ratio") = 0.9, py::arg("seed") = 0);

  m.def("profile", [](const std::string& name) { return to_py(config_to_json(profile_defaults(profile_from_name(name)))); });
  m.def("resolve_config", [](const py::object& doc) { return to_py(config_to_json(config_from_json(from_py(doc)))); });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> full = {"imfn"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs an imfn subcommand in-process; returns (exit_code, stdout, stderr).");
}
