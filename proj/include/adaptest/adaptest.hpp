#pragma once

#include "errors.hpp"
#include "rng.hpp"
#include "numerics.hpp"
#include "io.hpp"
#include "model_core.hpp"
#include "loading_profile.hpp"
#include "estimators.hpp"
#include "inference.hpp"
#include "priors.hpp"
#include "low_degree.hpp"
#include "scca.hpp"
#include "harness.hpp"
