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

// Writes the seeded synthetic scene as a labelled point file.
//
//     make_scene out.txt [--points N] [--seed S]

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

#include "gacnn/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic ground/wall/canopy scene", "make_scene"};
  std::string path;
  gacnn::SyntheticSceneOptions opt;
  double offset_x = 0.0, offset_y = 0.0;
  app.add_option("out", path, "output point file")->required();
  app.add_option("--points", opt.points, "point count");
  app.add_option("--seed", opt.seed, "random seed");
  app.add_option("--offset-x", offset_x, "added to every x");
  app.add_option("--offset-y", offset_y, "added to every y");
  CLI11_PARSE(app, argc, argv);

  std::ofstream out(path);
  if (!out) {
    std::cerr << "error: cannot write " << path << '\n';
    return 1;
  }
  out << "# x y z intensity return_number num_returns label\n" << std::fixed;
  for (const auto& r : gacnn::synthetic_scene_records(opt)) {
    out << std::setprecision(6) << r.x + offset_x << ' ' << r.y + offset_y << ' ' << r.z << ' '
        << r.intensity << ' ' << r.return_number << ' ' << r.num_returns << ' ' << *r.label
        << '\n';
  }
  return out ? 0 : 1;
}
