/*
 * Copyright 2026 The XMTR Authors.
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

// Umbrella header.

#ifndef XMTR_XMTR_HPP_
#define XMTR_XMTR_HPP_

#include "xmtr/common.hpp"
#include "xmtr/dataset.hpp"
#include "xmtr/evaluation.hpp"
#include "xmtr/forest.hpp"
#include "xmtr/model_io.hpp"
#include "xmtr/pathminer.hpp"
#include "xmtr/reducer.hpp"

#endif  // XMTR_XMTR_HPP_
