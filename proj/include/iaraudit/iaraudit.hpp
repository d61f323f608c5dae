// Copyright 2026 The iaraudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "iaraudit/attacks.hpp"
#include "iaraudit/common.hpp"
#include "iaraudit/dataset_inference.hpp"
#include "iaraudit/defense.hpp"
#include "iaraudit/extraction.hpp"
#include "iaraudit/metrics.hpp"
#include "iaraudit/oracle.hpp"
#include "iaraudit/sim.hpp"
#include "iaraudit/student_t.hpp"
#include "iaraudit/token_stats.hpp"
#include "iaraudit/trace.hpp"
