#pragma once

// The core library is compiled twice: the default 32-bit build used for
// training and attacks, and a 64-bit check build (SDPADV_CHECK_BUILD) used by
// the finite-difference gradient suites. Each build lives in its own inline
// namespace so both can be linked into one executable.
#if defined(SDPADV_CHECK_BUILD)
#define SDPADV_PRECISION_NS f64
#else
#define SDPADV_PRECISION_NS f32
#endif

#define SDPADV_NAMESPACE_BEGIN \
  namespace sdpadv {           \
  inline namespace SDPADV_PRECISION_NS {
#define SDPADV_NAMESPACE_END \
  }                          \
  }

SDPADV_NAMESPACE_BEGIN

#if defined(SDPADV_CHECK_BUILD)
using Real = double;
#else
using Real = float;
#endif

SDPADV_NAMESPACE_END
