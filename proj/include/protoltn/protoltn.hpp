#pragma once

// Umbrella header for the whole library.

#include "protoltn/checkpoint.hpp"
#include "protoltn/dataset.hpp"
#include "protoltn/errors.hpp"
#include "protoltn/gradcheck.hpp"
#include "protoltn/gradcheck_suite.hpp"
#include "protoltn/grounding.hpp"
#include "protoltn/init.hpp"
#include "protoltn/kb.hpp"
#include "protoltn/logic.hpp"
#include "protoltn/metrics.hpp"
#include "protoltn/optim.hpp"
#include "protoltn/tensor.hpp"
#include "protoltn/trainer.hpp"
#include "protoltn/util.hpp"
