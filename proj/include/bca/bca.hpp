// Copyright 2026 The BCA Authors
// SPDX-License-Identifier: Apache-2.0
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

#ifndef BCA_BCA_HPP_
#define BCA_BCA_HPP_

#include "bca/adapter.hpp"
#include "bca/circulant.hpp"
#include "bca/complexity.hpp"
#include "bca/error.hpp"
#include "bca/fft.hpp"
#include "bca/grad.hpp"
#include "bca/optim.hpp"
#include "bca/sim.hpp"
#include "bca/types.hpp"

#endif  // BCA_BCA_HPP_
