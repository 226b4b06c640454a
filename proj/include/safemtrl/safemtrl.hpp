#pragma once

#include "safemtrl/baselines.hpp"
#include "safemtrl/environment.hpp"
#include "safemtrl/errors.hpp"
#include "safemtrl/harness.hpp"
#include "safemtrl/learner.hpp"
#include "safemtrl/linalg.hpp"
#include "safemtrl/log.hpp"
#include "safemtrl/metrics.hpp"
#include "safemtrl/movielens.hpp"
#include "safemtrl/random.hpp"
#include "safemtrl/schedule.hpp"
#include "safemtrl/solver.hpp"
