#pragma once

#include "uld/numerics/adam.hpp"
#include "uld/numerics/ops.hpp"
#include "uld/numerics/tensor.hpp"
#include "uld/numerics/transforms.hpp"
