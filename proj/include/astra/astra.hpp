/* Copyright 2026 The Astra Authors. All Rights Reserved.

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

#include "astra/common.hpp"
#include "astra/consistency.hpp"
#include "astra/ctc_lattice.hpp"
#include "astra/log_sum_exp.hpp"
#include "astra/matrix.hpp"
#include "astra/oracle.hpp"
#include "astra/rng.hpp"
#include "astra/rnnt_lattice.hpp"
#include "astra/tensor_json.hpp"
#include "astra/toy_train.hpp"
#include "astra/verify.hpp"
