#pragma once

#include "dvr/data_io.hpp"
#include "dvr/diagnostics.hpp"
#include "dvr/error.hpp"
#include "dvr/harness.hpp"
#include "dvr/linalg.hpp"
#include "dvr/local_solvers.hpp"
#include "dvr/model.hpp"
#include "dvr/orchestrator.hpp"
#include "dvr/rng.hpp"
