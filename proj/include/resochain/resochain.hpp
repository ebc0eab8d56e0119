#pragma once

// Umbrella header.

#include "resochain/model.hpp"
#include "resochain/sweep.hpp"
#include "resochain/single.hpp"
#include "resochain/linalg.hpp"
#include "resochain/equations.hpp"
#include "resochain/hanger_chain.hpp"
#include "resochain/necklace_chain.hpp"
#include "resochain/timedomain.hpp"
#include "resochain/analysis.hpp"
