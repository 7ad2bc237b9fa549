#pragma once

#include <stdexcept>
#include <string>

namespace sves {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidMatrix : Error { using Error::Error; };
struct DimError : Error { using Error::Error; };
struct DegenerateSamples : Error { using Error::Error; };
struct GradientUnavailable : Error { using Error::Error; };
struct DegenerateWeights : Error { using Error::Error; };
struct ScheduleError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct DatasetError : Error { using Error::Error; };
struct InvalidBase : Error { using Error::Error; };
struct SingleSample : Error { using Error::Error; };
struct RunFailed : Error { using Error::Error; };

}  // namespace sves
