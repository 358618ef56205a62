#pragma once

#include <stdexcept>
#include <string>

namespace psf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

#define PSF_DEFINE_ERROR(Name)                                  \
  class Name : public Error                                     \
  {                                                             \
  public:                                                       \
    explicit Name(const std::string & what) : Error(what) {}    \
  }

// polytope
PSF_DEFINE_ERROR(EmptySetError);
PSF_DEFINE_ERROR(UnboundedError);
PSF_DEFINE_ERROR(EmptyInvariantSetError);
PSF_DEFINE_ERROR(SamplingFailedError);

// control_math
PSF_DEFINE_ERROR(NotConvergedError);
PSF_DEFINE_ERROR(NotPositiveDefiniteError);
PSF_DEFINE_ERROR(UnstableError);
PSF_DEFINE_ERROR(NonFiniteError);

// convex_solver
PSF_DEFINE_ERROR(InfeasibleError);
PSF_DEFINE_ERROR(InvalidProgramError);

// filter_core
PSF_DEFINE_ERROR(DesignInfeasibleError);
PSF_DEFINE_ERROR(WarmstartInfeasibleError);

// plant
PSF_DEFINE_ERROR(DegenerateSpeedError);
PSF_DEFINE_ERROR(NoSteadyStateError);

// sim
PSF_DEFINE_ERROR(InitialInfeasibleError);

// cli
PSF_DEFINE_ERROR(ConfigError);

#undef PSF_DEFINE_ERROR

}  // namespace psf
