#pragma once

#include "volterra/core.hpp"
#include "volterra/grid.hpp"
#include "volterra/quadrature.hpp"
#include "volterra/rng.hpp"
#include "volterra/parallel.hpp"
#include "volterra/expr.hpp"
#include "volterra/kernels.hpp"
#include "volterra/gauss_cond.hpp"
#include "volterra/funcalc.hpp"
#include "volterra/regression.hpp"
#include "volterra/bsde.hpp"
#include "volterra/mild.hpp"
#include "volterra/path_io.hpp"
#include "volterra/config.hpp"
