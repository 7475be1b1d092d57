#pragma once

#include "mcrs/errors.hpp"
#include "mcrs/linalg.hpp"
#include "mcrs/optimize.hpp"
#include "mcrs/margins.hpp"
#include "mcrs/serialcorr.hpp"
#include "mcrs/mcvar.hpp"
#include "mcrs/model.hpp"
#include "mcrs/switchcov.hpp"
#include "mcrs/likelihood.hpp"
#include "mcrs/fbinfer.hpp"
#include "mcrs/estimate.hpp"
#include "mcrs/simulate.hpp"
#include "mcrs/io.hpp"
