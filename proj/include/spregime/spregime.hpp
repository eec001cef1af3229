#pragma once

#include "spregime/common.hpp"
#include "spregime/endogeneity.hpp"
#include "spregime/geodata.hpp"
#include "spregime/inference.hpp"
#include "spregime/local_regression.hpp"
#include "spregime/optim.hpp"
#include "spregime/pipeline.hpp"
#include "spregime/regimes.hpp"
#include "spregime/spatial_fit.hpp"
#include "spregime/stats.hpp"
#include "spregime/synthetic.hpp"
#include "spregime/weights.hpp"
