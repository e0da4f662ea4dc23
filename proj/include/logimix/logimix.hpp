#pragma once

#include "logimix/dataset.hpp"
#include "logimix/error.hpp"
#include "logimix/estimation.hpp"
#include "logimix/identifiability.hpp"
#include "logimix/mixture.hpp"
#include "logimix/mld.hpp"
#include "logimix/quadrature.hpp"
#include "logimix/random.hpp"
