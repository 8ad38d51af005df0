#pragma once

#include "geolm/types.hpp"
#include "geolm/problem.hpp"
#include "geolm/linalg.hpp"
#include "geolm/step.hpp"
#include "geolm/trust_region.hpp"
#include "geolm/diagnostics.hpp"
#include "geolm/suite.hpp"
#include "geolm/oracle.hpp"
#include "geolm/report.hpp"
#include "geolm/bench.hpp"
