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

#include "urbanseg/parallel.hpp"

#include <atomic>

namespace urbanseg {

namespace {
std::atomic<int> g_max_threads{std::max(1, static_cast<int>(std::thread::hardware_concurrency()))};
}  // namespace

void set_max_threads(int threads) { g_max_threads.store(std::max(1, threads)); }

int max_threads() { return g_max_threads.load(); }

}  // namespace urbanseg
