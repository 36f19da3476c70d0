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

"""Band-split RoPE transformer music source separation."""

from ._core import (
    ConfigError,
    DataError,
    DimensionError,
    IoError,
    MismatchError,
    Model,
    NumericalError,
    band_widths,
    chunked_median_sdr,
    istft,
    param_count,
    read_wav,
    sdr,
    selftest,
    stft,
    write_wav,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "IoError",
    "MismatchError",
    "Model",
    "NumericalError",
    "band_widths",
    "chunked_median_sdr",
    "istft",
    "param_count",
    "read_wav",
    "sdr",
    "selftest",
    "stft",
    "write_wav",
]
