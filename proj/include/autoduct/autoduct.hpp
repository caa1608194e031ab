// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/dataset.hpp"
#include "autoduct/ensemble.hpp"
#include "autoduct/error.hpp"
#include "autoduct/evaluation.hpp"
#include "autoduct/gp.hpp"
#include "autoduct/harness.hpp"
#include "autoduct/hpo.hpp"
#include "autoduct/neural_net.hpp"
#include "autoduct/numeric.hpp"
#include "autoduct/pipeline.hpp"
#include "autoduct/rng.hpp"
#include "autoduct/sobol.hpp"
#include "autoduct/svg.hpp"
