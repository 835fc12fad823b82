#pragma once

#include <stdisagg/aggregate.hpp>
#include <stdisagg/infer/engines.hpp>
#include <stdisagg/infer/fit.hpp>
#include <stdisagg/infer/obs_model.hpp>
#include <stdisagg/infer/optimize.hpp>
#include <stdisagg/lattice.hpp>
#include <stdisagg/random.hpp>
#include <stdisagg/stmodel.hpp>
