#pragma once

// Umbrella header.

#include "advkit/attacks.hpp"
#include "advkit/config.hpp"
#include "advkit/dataset.hpp"
#include "advkit/defenses.hpp"
#include "advkit/errors.hpp"
#include "advkit/layers.hpp"
#include "advkit/metrics.hpp"
#include "advkit/models.hpp"
#include "advkit/net.hpp"
#include "advkit/parallel.hpp"
#include "advkit/pipeline.hpp"
#include "advkit/report.hpp"
#include "advkit/rng.hpp"
#include "advkit/serialize.hpp"
#include "advkit/tensor.hpp"
