//   Copyright (c) 2026 rotdet Authors. All Rights Reserved.
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

#include "rotdet/angle_dfl.hpp"
#include "rotdet/assign.hpp"
#include "rotdet/dota.hpp"
#include "rotdet/errors.hpp"
#include "rotdet/gaussian.hpp"
#include "rotdet/geometry.hpp"
#include "rotdet/postprocess.hpp"
#include "rotdet/rep_fusion.hpp"
#include "rotdet/rng.hpp"
