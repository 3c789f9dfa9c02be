#pragma once

/// Umbrella header: the full pipeline — data loading, CART trees, bagged
/// forests, rule extraction, refiner backends, gradient-net error correction,
/// diagnostics and orchestration.

#include "delta/analyze.hpp"
#include "delta/cart.hpp"
#include "delta/correct.hpp"
#include "delta/csv.hpp"
#include "delta/dataset.hpp"
#include "delta/error.hpp"
#include "delta/forest.hpp"
#include "delta/matrix.hpp"
#include "delta/metrics.hpp"
#include "delta/parallel.hpp"
#include "delta/pipeline.hpp"
#include "delta/refine.hpp"
#include "delta/refined_rule.hpp"
#include "delta/rng.hpp"
#include "delta/schema.hpp"
#include "delta/synth.hpp"
