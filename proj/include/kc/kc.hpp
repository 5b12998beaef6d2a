#pragma once

#include "kc/params.hpp"
#include "kc/state.hpp"
#include "kc/tridiag.hpp"
#include "kc/generator.hpp"
#include "kc/dynamics.hpp"
#include "kc/modes.hpp"
#include "kc/parallel.hpp"
#include "kc/quadrature.hpp"
#include "kc/carleman.hpp"
#include "kc/hum.hpp"
#include "kc/stabilization.hpp"
#include "kc/trace_identity.hpp"
