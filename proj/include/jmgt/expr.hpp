#pragma once

#include <string>

#include "jmgt/grid.hpp"

namespace jmgt::model {

// Evaluates a closed-form coefficient expression over the spatial variables
// (x, and y in 2-D). Grammar: + - * / unary-, parentheses, numeric literals,
// sin cos exp, and the constant pi.
double eval_expression(const std::string& expr, double x, double y);

spectral::Field eval_on_grid(const std::string& expr, const spectral::Grid& grid);

}  // namespace jmgt::model
