// SPDX-License-Identifier: Apache-2.0
// libtorch may pull in glog, whose CHECK macros collide with doctest's. Include
// torch first, drop its macros, then doctest.
#pragma once

#include <torch/torch.h>

#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LE
#undef CHECK_LT
#undef CHECK_GE
#undef CHECK_GT
#undef CHECK_NOTNULL

#include "doctest.h"
