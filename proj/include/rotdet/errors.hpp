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

#include <stdexcept>
#include <string>

namespace rotdet {

/// Thrown when an input violates a documented precondition (invalid box,
/// malformed distribution, shape mismatch, vocabulary mismatch, ...).
struct validation_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace rotdet
