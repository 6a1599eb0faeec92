#pragma once

#include "swbnet/agents.hpp"
#include "swbnet/error.hpp"
#include "swbnet/event_log_io.hpp"
#include "swbnet/game.hpp"
#include "swbnet/graph.hpp"
#include "swbnet/harness.hpp"
#include "swbnet/metrics.hpp"
#include "swbnet/random.hpp"
#include "swbnet/statlab.hpp"
