#pragma once

#include "lineagelab/ancestral.hpp"
#include "lineagelab/banded.hpp"
#include "lineagelab/config.hpp"
#include "lineagelab/csv.hpp"
#include "lineagelab/duality.hpp"
#include "lineagelab/equilibrium.hpp"
#include "lineagelab/error.hpp"
#include "lineagelab/field.hpp"
#include "lineagelab/hamilton_jacobi.hpp"
#include "lineagelab/ibm.hpp"
#include "lineagelab/model.hpp"
#include "lineagelab/operators.hpp"
#include "lineagelab/parallel.hpp"
#include "lineagelab/stats.hpp"
