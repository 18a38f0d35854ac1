#pragma once

#include "autoprune/errors.hpp"
#include "autoprune/rng.hpp"
#include "autoprune/core.hpp"
#include "autoprune/netlib.hpp"
#include "autoprune/env.hpp"
#include "autoprune/agent.hpp"
#include "autoprune/transfer.hpp"
#include "autoprune/assistant.hpp"
#include "autoprune/io.hpp"
#include "autoprune/library.hpp"
#include "autoprune/experiment.hpp"
