#pragma once

#include "rvolest/errors.hpp"
#include "rvolest/mathcore.hpp"
#include "rvolest/model.hpp"
#include "rvolest/path.hpp"
#include "rvolest/likelihood.hpp"
#include "rvolest/optimizer.hpp"
#include "rvolest/estimator.hpp"
#include "rvolest/rng.hpp"
#include "rvolest/simulator.hpp"
#include "rvolest/io.hpp"
#include "rvolest/montecarlo.hpp"
#include "rvolest/clustering.hpp"
