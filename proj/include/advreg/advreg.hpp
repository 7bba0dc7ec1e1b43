#pragma once

#include "advreg/core.hpp"
#include "advreg/plant.hpp"
#include "advreg/models.hpp"
#include "advreg/lp.hpp"
#include "advreg/milp.hpp"
#include "advreg/detector.hpp"
#include "advreg/attack.hpp"
#include "advreg/defense.hpp"
#include "advreg/oracle.hpp"
