#pragma once

#include "balbot/balancer.hpp"
#include "balbot/config.hpp"
#include "balbot/imu.hpp"
#include "balbot/pid.hpp"
#include "balbot/plant.hpp"
#include "balbot/protocol.hpp"
#include "balbot/simulation.hpp"
#include "balbot/stepper.hpp"
#include "balbot/tuner.hpp"
