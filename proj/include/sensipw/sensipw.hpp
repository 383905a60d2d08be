#pragma once

#include "sensipw/core.hpp"
#include "sensipw/glm.hpp"
#include "sensipw/simplex.hpp"
#include "sensipw/extrema.hpp"
#include "sensipw/estimators.hpp"
#include "sensipw/bootstrap.hpp"
#include "sensipw/simharness.hpp"
#include "sensipw/report.hpp"
