// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace layoutgen {

/// Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 invariant violation.
int cli_dispatch(int argc, char** argv);

}  // namespace layoutgen
