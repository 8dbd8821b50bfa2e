#pragma once

#include "occmom/poly.hpp"
#include "occmom/problem.hpp"
#include "occmom/relax.hpp"
#include "occmom/sdp.hpp"
#include "occmom/oracles.hpp"
#include "occmom/value.hpp"
#include "occmom/driver.hpp"
