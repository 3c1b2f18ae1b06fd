#ifndef PEX_PEX_HPP_
#define PEX_PEX_HPP_

#include "pex/actor.hpp"
#include "pex/binio.hpp"
#include "pex/bridge.hpp"
#include "pex/checkpoint.hpp"
#include "pex/config.hpp"
#include "pex/distributions.hpp"
#include "pex/envs.hpp"
#include "pex/errors.hpp"
#include "pex/harness.hpp"
#include "pex/iql.hpp"
#include "pex/numcore.hpp"
#include "pex/policy_set.hpp"
#include "pex/replay.hpp"
#include "pex/rng.hpp"
#include "pex/sac.hpp"

#endif  // PEX_PEX_HPP_
