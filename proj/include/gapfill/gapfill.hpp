#pragma once

#include "gapfill/checkpoint.hpp"
#include "gapfill/date.hpp"
#include "gapfill/dineof.hpp"
#include "gapfill/direct_net.hpp"
#include "gapfill/errors.hpp"
#include "gapfill/field.hpp"
#include "gapfill/gfd.hpp"
#include "gapfill/metrics.hpp"
#include "gapfill/rng.hpp"
#include "gapfill/sim.hpp"
#include "gapfill/tape.hpp"
#include "gapfill/tensor.hpp"
#include "gapfill/tiling.hpp"
#include "gapfill/train.hpp"
#include "gapfill/var.hpp"
