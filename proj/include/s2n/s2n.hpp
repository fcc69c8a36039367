/*
   Copyright 2026 The s2ndiff Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

// Umbrella header for the s2n library.

#pragma once

#include "s2n/dynamics.hpp"
#include "s2n/error.hpp"
#include "s2n/gmm.hpp"
#include "s2n/infotheory.hpp"
#include "s2n/io.hpp"
#include "s2n/metrics.hpp"
#include "s2n/parallel.hpp"
#include "s2n/random.hpp"
#include "s2n/samplers.hpp"
#include "s2n/schedule.hpp"
#include "s2n/snr_space.hpp"
