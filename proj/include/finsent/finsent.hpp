// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "finsent/core.hpp"
#include "finsent/corpus.hpp"
#include "finsent/harness.hpp"
#include "finsent/inference.hpp"
#include "finsent/metrics.hpp"
#include "finsent/prompts.hpp"
#include "finsent/rng.hpp"
#include "finsent/sampler.hpp"
#include "finsent/scheduler.hpp"
#include "finsent/trainer.hpp"
