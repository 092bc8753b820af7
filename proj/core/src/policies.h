/* Copyright 2026 The kvsched Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <memory>

#include "kvsched/scheduler.h"

namespace kvsched::internal {

std::unique_ptr<Policy> make_cacheopt(const SchedulerConfig& cfg,
                                      const IterationCost& cost, SweetSpot spot);
std::unique_ptr<Policy> make_vllm(const SchedulerConfig& cfg, bool chunked);
std::unique_ptr<Policy> make_rlp(const SchedulerConfig& cfg);
std::unique_ptr<Policy> make_s3(const SchedulerConfig& cfg);

}  // namespace kvsched::internal
