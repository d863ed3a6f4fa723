#pragma once

// Umbrella header: soft decision trees trained by gradient descent, plus the
// supporting data, baseline, metric, and benchmarking toolkit.

#include "softtree/adam.hpp"
#include "softtree/bench.hpp"
#include "softtree/cart.hpp"
#include "softtree/csv.hpp"
#include "softtree/dataset.hpp"
#include "softtree/errors.hpp"
#include "softtree/forward.hpp"
#include "softtree/gradients.hpp"
#include "softtree/logreg.hpp"
#include "softtree/matrix.hpp"
#include "softtree/metrics.hpp"
#include "softtree/model_io.hpp"
#include "softtree/preprocess.hpp"
#include "softtree/rng.hpp"
#include "softtree/synth.hpp"
#include "softtree/trainer.hpp"
#include "softtree/tree.hpp"
#include "softtree/treeviz.hpp"
