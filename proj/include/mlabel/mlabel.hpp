#pragma once

#include "mlabel/errors.hpp"
#include "mlabel/link.hpp"
#include "mlabel/covariates.hpp"
#include "mlabel/model.hpp"
#include "mlabel/rng.hpp"
#include "mlabel/datagen.hpp"
#include "mlabel/estimators.hpp"
#include "mlabel/quadrature.hpp"
#include "mlabel/majority.hpp"
#include "mlabel/theory.hpp"
#include "mlabel/semiparam.hpp"
#include "mlabel/montecarlo.hpp"
#include "mlabel/config.hpp"
#include "mlabel/csv.hpp"
