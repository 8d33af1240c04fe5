#pragma once

#include "augment.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "conv.hpp"
#include "data.hpp"
#include "error.hpp"
#include "gradcheck.hpp"
#include "gradcheck_suite.hpp"
#include "layers.hpp"
#include "models.hpp"
#include "ops.hpp"
#include "optim.hpp"
#include "pgm.hpp"
#include "random.hpp"
#include "tape.hpp"
#include "tensor.hpp"
#include "training.hpp"
