// Copyright 2026 The urbanseg Authors.
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

// Runs the desk-scale transfer experiment and prints per-class test scores.

#include <cstdlib>
#include <iostream>

#include "transfer_experiment.hpp"
#include "urbanseg/parallel.hpp"

int main(int argc, char** argv) {
  using namespace urbanseg;
  experiment::TransferRun run;
  if (argc > 1) run.seed = std::strtoull(argv[1], nullptr, 10);
  if (argc > 2) run.epochs = std::atoi(argv[2]);
  run.log = [](const std::string& s) { std::cout << s << std::endl; };
  const auto out = experiment::run_transfer(run);
  std::cout << report_to_table(out.test_report);
  std::cout << "confusion (rows truth)\n" << out.test_confusion.counts() << "\n";
  std::cout << "epoch " << run.advantage_epoch << " val mIoU: fine-tuned " << out.finetune_miou_at_check
            << ", scratch " << out.scratch_miou_at_check << "\n";
  std::cout << "seconds " << out.seconds << "\n";
}
