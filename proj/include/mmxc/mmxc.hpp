#pragma once

#include "mmxc/experiment.hpp"
#include "mmxc/synthetic.hpp"
