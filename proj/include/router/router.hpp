#pragma once

#include "router/analysis.hpp"
#include "router/csv.hpp"
#include "router/errors.hpp"
#include "router/hilbert_space.hpp"
#include "router/lindblad.hpp"
#include "router/model.hpp"
#include "router/params.hpp"
#include "router/record.hpp"
#include "router/simulate.hpp"
#include "router/trajectory.hpp"
