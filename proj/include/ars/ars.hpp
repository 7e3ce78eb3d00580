#pragma once

#include "ars/cli.hpp"
#include "ars/engine.hpp"
#include "ars/error.hpp"
#include "ars/eval.hpp"
#include "ars/graph.hpp"
#include "ars/ids.hpp"
#include "ars/ingest.hpp"
#include "ars/service.hpp"
