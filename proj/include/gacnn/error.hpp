// Copyright 2026 The GACNN Authors
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

namespace gacnn {

/// Base of every error raised by the library. The message is prefixed with
/// the name of the module that raised it, e.g. "geometry: K (8) must be < N (4)".
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

#define GACNN_DEFINE_ERROR(Name)                              \
  class Name : public Error {                                 \
   public:                                                    \
    using Error::Error;                                       \
  };

GACNN_DEFINE_ERROR(DimensionError)
GACNN_DEFINE_ERROR(ParameterError)
GACNN_DEFINE_ERROR(ContractError)
GACNN_DEFINE_ERROR(ConfigError)
GACNN_DEFINE_ERROR(DataError)
GACNN_DEFINE_ERROR(ParseError)
GACNN_DEFINE_ERROR(FormatError)
GACNN_DEFINE_ERROR(CorruptionError)
GACNN_DEFINE_ERROR(TrainingError)
GACNN_DEFINE_ERROR(IoError)

#undef GACNN_DEFINE_ERROR

}  // namespace gacnn
