/*
 Copyright 2026 The safempc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

// Everything except the YAML scenario loader (safempc/scenario.hpp), which
// needs yaml-cpp at link time.

#include "safempc/analysis.hpp"
#include "safempc/costs.hpp"
#include "safempc/discrete.hpp"
#include "safempc/dynamics.hpp"
#include "safempc/errors.hpp"
#include "safempc/grid.hpp"
#include "safempc/knowledge.hpp"
#include "safempc/mpc.hpp"
#include "safempc/nlp.hpp"
#include "safempc/problem.hpp"
#include "safempc/rational.hpp"
#include "safempc/reachable.hpp"
#include "safempc/region.hpp"
#include "safempc/simulator.hpp"
#include "safempc/steplog.hpp"
#include "safempc/transcription.hpp"
#include "safempc/transitory.hpp"
#include "safempc/types.hpp"
