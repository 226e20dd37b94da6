/* Copyright 2026 The Dynamics Authors. All Rights Reserved.

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
#ifndef DYNAMICS_DYNAMICS_HPP_
#define DYNAMICS_DYNAMICS_HPP_

#include "dynamics/analysis.hpp"
#include "dynamics/apportion.hpp"
#include "dynamics/clustering.hpp"
#include "dynamics/common.hpp"
#include "dynamics/pipeline.hpp"
#include "dynamics/random.hpp"
#include "dynamics/sampler.hpp"
#include "dynamics/scaling.hpp"
#include "dynamics/store.hpp"

#endif  // DYNAMICS_DYNAMICS_HPP_
