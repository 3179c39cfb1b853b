/*
 * Copyright 2026 The fedselect Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Everything in one include.

#pragma once

#include "fedselect/adversary.hpp"
#include "fedselect/client_utility.hpp"
#include "fedselect/cluster_protocol.hpp"
#include "fedselect/common.hpp"
#include "fedselect/crypto.hpp"
#include "fedselect/fl_engine.hpp"
#include "fedselect/secure_aggregation.hpp"
#include "fedselect/sim/attack_lab.hpp"
#include "fedselect/sim/baselines.hpp"
#include "fedselect/sim/config.hpp"
#include "fedselect/sim/diagnostics.hpp"
#include "fedselect/sim/reports.hpp"
#include "fedselect/sim/simulator.hpp"
#include "fedselect/vrf_protocol.hpp"
