#pragma once

#include "bootstrap.hpp"
#include "error.hpp"
#include "estimators.hpp"
#include "graph.hpp"
#include "kde.hpp"
#include "model.hpp"
#include "npmle.hpp"
#include "quadrature.hpp"
#include "simulate.hpp"
#include "spline.hpp"
