/// @file
/// @brief Umbrella header for the Prox-CMO library.
#pragma once

#include "proxcmo/core.hpp"
#include "proxcmo/prox.hpp"
#include "proxcmo/problem.hpp"
#include "proxcmo/dynamics.hpp"
#include "proxcmo/integrate.hpp"
#include "proxcmo/gains.hpp"
#include "proxcmo/simulate.hpp"
#include "proxcmo/lasso.hpp"
#include "proxcmo/shidoku.hpp"
#include "proxcmo/sysid.hpp"
#include "proxcmo/io.hpp"
