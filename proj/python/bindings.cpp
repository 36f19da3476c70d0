// Copyright 2026 The bsroformer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "bsr/checkpoint.hpp"
#include "bsr/dsp.hpp"
#include "bsr/model.hpp"
#include "bsr/segments.hpp"
#include "bsr/selftest.hpp"
#include "bsr/wav.hpp"

namespace py = pybind11;
using namespace bsr;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<std::complex<float>, py::array::c_style | py::array::forcecast>;

Waveform to_waveform(const FloatArray& a, int sample_rate) {
  if (a.ndim() != 2) throw DimensionError("expected a [channels, samples] array");
  Waveform w(a.shape(0), a.shape(1), sample_rate);
  std::memcpy(w.samples.data(), a.data(), w.samples.size() * sizeof(float));
  return w;
}

py::array_t<float> to_array(const Waveform& w) {
  py::array_t<float> out({w.channels, w.length});
  std::memcpy(out.mutable_data(), w.samples.data(), w.samples.size() * sizeof(float));
  return out;
}

RunConfig resolve_config(const std::string& source) {
  if (source == "canonical") return canonical_config();
  if (source == "smoke") return smoke_config();
  return RunConfig::load(source);
}

// A loaded stem model together with the run configuration it came from.
struct PyModel {
  StemModel<float> model;
  RunConfig config;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Band-split RoPE transformer source separation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<MismatchError>(m, "MismatchError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "stft",
      [](const FloatArray& x, std::size_t fft_size, std::size_t hop) {
        const StftConfig cfg{fft_size, hop, true};
        cfg.validate();
        const auto spec = stft(to_waveform(x, kDefaultSampleRate), cfg);
        ComplexArray out({spec.channels, spec.frames, spec.bins});
        std::memcpy(out.mutable_data(), spec.values.data(), spec.values.size() * sizeof(std::complex<float>));
        return out;
      },
      py::arg("x"), py::arg("fft_size") = 2048, py::arg("hop") = 441,
      "Centred Hann STFT of a [channels, samples] array; returns complex64 [channels, frames, bins].");

  m.def(
      "istft",
      [](const ComplexArray& spec, std::size_t length, std::size_t fft_size, std::size_t hop) {
        const StftConfig cfg{fft_size, hop, true};
        cfg.validate();
        if (spec.ndim() != 3) throw DimensionError("expected a [channels, frames, bins] array");
        ComplexSpectrogram s;
        s.channels = spec.shape(0);
        s.frames = spec.shape(1);
        s.bins = spec.shape(2);
        s.values.assign(spec.data(), spec.data() + spec.size());
        return to_array(istft(s, cfg, length));
      },
      py::arg("spec"), py::arg("length"), py::arg("fft_size") = 2048, py::arg("hop") = 441);

  m.def(
      "sdr", [](const FloatArray& ref, const FloatArray& est) {
        return sdr(to_waveform(ref, kDefaultSampleRate), to_waveform(est, kDefaultSampleRate));
      },
      py::arg("reference"), py::arg("estimate"));
  m.def(
      "chunked_median_sdr",
      [](const FloatArray& ref, const FloatArray& est, int sample_rate, double chunk_seconds) {
        return chunked_median_sdr(to_waveform(ref, sample_rate), to_waveform(est, sample_rate), chunk_seconds);
      },
      py::arg("reference"), py::arg("estimate"), py::arg("sample_rate") = kDefaultSampleRate,
      py::arg("chunk_seconds") = 1.0);

  m.def(
      "read_wav",
      [](const std::string& path, int required_rate) {
        const auto w = read_wav(path, {required_rate});
        return py::make_tuple(to_array(w), w.sample_rate);
      },
      py::arg("path"), py::arg("required_rate") = 0, "Returns (samples [channels, n], sample_rate).");
  m.def(
      "write_wav",
      [](const std::string& path, const FloatArray& x, int sample_rate) {
        write_wav(path, to_waveform(x, sample_rate));
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = kDefaultSampleRate);

  m.def(
      "band_widths", [](const std::string& config) { return resolve_config(config).model.band_scheme().widths; },
      py::arg("config") = "canonical");
  m.def(
      "param_count",
      [](const std::string& config) {
        const auto p = param_count(resolve_config(config).model);
        py::dict d;
        d["band_split"] = p.band_split;
        d["per_block"] = p.per_block;
        d["blocks"] = p.blocks;
        d["positional"] = p.positional;
        d["mask"] = p.mask;
        d["total"] = p.total;
        return d;
      },
      py::arg("config") = "canonical");

  m.def(
      "selftest",
      [](const std::string& suite) {
        py::list out;
        for (const auto& r : run_selftest(parse_selftest_suite(suite))) {
          py::dict d;
          d["suite"] = r.suite;
          d["name"] = r.name;
          d["passed"] = r.passed;
          d["detail"] = r.detail;
          out.append(d);
        }
        return out;
      },
      py::arg("suite") = "all");

  py::class_<PyModel>(m, "Model")
      .def_static(
          "init",
          [](const std::string& config, const std::string& stem, std::uint64_t seed) {
            auto run = resolve_config(config);
            Rng rng(seed);
            return PyModel{init_stem_model<float>(run.model, stem, rng), run};
          },
          py::arg("config"), py::arg("stem") = "vocals", py::arg("seed") = 0)
      .def_static(
          "load",
          [](const std::string& path) {
            const auto ckpt = load_checkpoint(path);
            return PyModel{model_from_checkpoint(ckpt), ckpt.config};
          },
          py::arg("path"))
      .def("save", [](const PyModel& self, const std::string& path) {
        save_checkpoint(path, make_checkpoint(self.model, self.config, 0));
      })
      .def_property_readonly("stem", [](const PyModel& self) { return self.model.stem; })
      .def_property_readonly("segment_samples", [](const PyModel& self) { return self.model.config.segment_samples(); })
      .def_property_readonly("band_widths", [](const PyModel& self) { return self.model.scheme.widths; })
      .def(
          "set_band_masks",
          [](PyModel& self, const std::vector<std::complex<double>>& values) {
            set_constant_band_masks(self.model.mask, self.model.scheme, self.model.config.channels, values);
          },
          py::arg("values"), "Makes the model emit the given constant complex mask per band.")
      .def(
          "separate",
          [](const PyModel& self, const FloatArray& mixture, const std::string& deframe, std::size_t jobs) {
            const auto mode = parse_deframe_mode(deframe);
            const auto w = to_waveform(mixture, self.model.config.sample_rate);
            Waveform out;
            {
              py::gil_scoped_release release;
              out = separate_track(self.model, w, mode, jobs);
            }
            return to_array(out);
          },
          py::arg("mixture"), py::arg("deframe") = "oa", py::arg("jobs") = 1);
}
