// Copyright 2026 The virtdyn Authors
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

#include "virtdyn/analysis.hpp"
#include "virtdyn/chain.hpp"
#include "virtdyn/chain_io.hpp"
#include "virtdyn/closed_loop.hpp"
#include "virtdyn/dynamics.hpp"
#include "virtdyn/errors.hpp"
#include "virtdyn/experiments.hpp"
#include "virtdyn/kinematics.hpp"
#include "virtdyn/mappings.hpp"
#include "virtdyn/singularity_search.hpp"
#include "virtdyn/version.hpp"
