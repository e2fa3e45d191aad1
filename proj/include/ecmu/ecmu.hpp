#pragma once

#include "config.hpp"
#include "embedding.hpp"
#include "errors.hpp"
#include "format.hpp"
#include "inference.hpp"
#include "ingestion.hpp"
#include "metrics.hpp"
#include "pipeline_sim.hpp"
#include "protocol.hpp"
#include "rng.hpp"
#include "unlearning.hpp"
#include "vector_store.hpp"
