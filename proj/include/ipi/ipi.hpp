#pragma once

#include "errors.hpp"
#include "generators.hpp"
#include "io.hpp"
#include "linear_solvers.hpp"
#include "mdp.hpp"
#include "parallel.hpp"
#include "solve.hpp"
#include "sparse.hpp"
#include "types.hpp"
