# Copyright 2026 The bsroformer Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import numpy as np
import pytest

import bsroformer as bsr


def test_band_scheme():
    widths = bsr.band_widths("canonical")
    assert len(widths) == 62
    assert sum(widths) == 1025


def test_param_count():
    p = bsr.param_count("canonical")
    assert p["per_block"] == 3547392
    assert abs(p["total"] / 1e6 - 93.4) < 0.1


def test_stft_round_trip():
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.5, 0.5, size=(2, 22050)).astype(np.float32)
    spec = bsr.stft(x)
    assert spec.shape == (2, 22050 // 441 + 1, 1025)
    assert spec.dtype == np.complex64
    y = bsr.istft(spec, x.shape[1])
    assert np.max(np.abs(y - x)) < 1e-6 * np.max(np.abs(x))


def test_sdr_half_scale():
    rng = np.random.default_rng(1)
    y = rng.standard_normal((2, 44100)).astype(np.float32)
    assert bsr.sdr(y, 0.5 * y) == pytest.approx(20 * np.log10(2), abs=1e-3)


def test_identity_model_separates_to_input(tmp_path):
    model = bsr.Model.init("smoke", "vocals", seed=3)
    model.set_band_masks([1.0] * len(model.band_widths))
    rng = np.random.default_rng(2)
    x = rng.uniform(-0.5, 0.5, size=(2, 30000)).astype(np.float32)
    for mode in ("oa", "tc"):
        y = model.separate(x, deframe=mode)
        assert y.shape == x.shape
        assert np.max(np.abs(y - x)) < 1e-5

    path = tmp_path / "m.ckpt"
    model.save(str(path))
    loaded = bsr.Model.load(str(path))
    assert loaded.stem == "vocals"
    assert np.array_equal(loaded.separate(x), model.separate(x))


def test_wav_round_trip(tmp_path):
    x = np.linspace(-1, 1, 200, dtype=np.float32).reshape(2, 100)
    path = str(tmp_path / "a.wav")
    bsr.write_wav(path, x, 22050)
    y, rate = bsr.read_wav(path)
    assert rate == 22050
    assert np.array_equal(x, y)


def test_errors(tmp_path):
    with pytest.raises(bsr.IoError):
        bsr.read_wav("/nonexistent/file.wav")
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFF\x04\x00\x00\x00WAVE")
    with pytest.raises(bsr.DataError):
        bsr.read_wav(str(bad))
    with pytest.raises(ValueError):
        bsr.Model.init("smoke", "piano")
    with pytest.raises(bsr.ConfigError):
        bsr.selftest("everything")


def test_selftest_invariants():
    results = bsr.selftest("invariants")
    assert results
    assert all(r["passed"] for r in results), [r for r in results if not r["passed"]]
