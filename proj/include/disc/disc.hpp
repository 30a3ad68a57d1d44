#pragma once

#include "disc/errors.hpp"
#include "disc/matrix.hpp"
#include "disc/numerics.hpp"
#include "disc/random.hpp"
#include "disc/ctr.hpp"
#include "disc/hash.hpp"
#include "disc/st.hpp"
#include "disc/loadbalance.hpp"
#include "disc/sim.hpp"
#include "disc/plan.hpp"
#include "disc/model.hpp"
#include "disc/flops.hpp"
#include "disc/network.hpp"
#include "disc/denoise.hpp"
#include "disc/config.hpp"
#include "disc/io.hpp"
#include "disc/drivers.hpp"
