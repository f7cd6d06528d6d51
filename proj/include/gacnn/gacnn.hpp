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

// Umbrella header for the library (the CLI front end lives in gacnn/cli.hpp).

#pragma once

#include "gacnn/attention.hpp"
#include "gacnn/config.hpp"
#include "gacnn/data_io.hpp"
#include "gacnn/error.hpp"
#include "gacnn/evaluation.hpp"
#include "gacnn/geometry.hpp"
#include "gacnn/network.hpp"
#include "gacnn/synthetic.hpp"
#include "gacnn/tensor.hpp"
#include "gacnn/training.hpp"
