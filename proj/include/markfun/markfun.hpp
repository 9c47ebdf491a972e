#pragma once

// Umbrella header: performability measures of continuous-time Markov chains
// as bilinear forms pi0^T f(Q) r, evaluated by restarted Krylov iteration
// with a uniformization baseline.

#include "markfun/dense_funm.hpp"
#include "markfun/errors.hpp"
#include "markfun/generator.hpp"
#include "markfun/krylov.hpp"
#include "markfun/matrix_market.hpp"
#include "markfun/measures.hpp"
#include "markfun/models.hpp"
#include "markfun/sensitivity.hpp"
#include "markfun/sparse.hpp"
#include "markfun/uniformization.hpp"
