#pragma once

#include "rlcf/agent.hpp"
#include "rlcf/checkpoint.hpp"
#include "rlcf/config.hpp"
#include "rlcf/controller.hpp"
#include "rlcf/ddpg.hpp"
#include "rlcf/errors.hpp"
#include "rlcf/harness.hpp"
#include "rlcf/idm.hpp"
#include "rlcf/io.hpp"
#include "rlcf/nelder_mead.hpp"
#include "rlcf/nn.hpp"
#include "rlcf/parallel.hpp"
#include "rlcf/rewards.hpp"
#include "rlcf/sim.hpp"
#include "rlcf/stochastic.hpp"
