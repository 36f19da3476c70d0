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

#pragma once

#include <stdexcept>
#include <string>

namespace bsr {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: corrupt checkpoints, bad WAV files, dataset layout.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced where finite values are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Output could not be written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Sample rate or STFT settings disagree between inputs.
class MismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace bsr
