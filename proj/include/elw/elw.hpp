#pragma once

#include "elw/errors.hpp"
#include "elw/sample.hpp"
#include "elw/core.hpp"
#include "elw/estimators.hpp"
#include "elw/inference.hpp"
#include "elw/propensity.hpp"
#include "elw/rng.hpp"
#include "elw/parallel.hpp"
#include "elw/designs.hpp"
#include "elw/simulation.hpp"
#include "elw/io.hpp"
