#pragma once

#include "sway/backends.hpp"
#include "sway/corpus.hpp"
#include "sway/harness.hpp"
#include "sway/hash.hpp"
#include "sway/mitigation.hpp"
#include "sway/prng.hpp"
#include "sway/responses.hpp"
#include "sway/scoring.hpp"
#include "sway/stats.hpp"
#include "sway/taxonomy.hpp"
#include "sway/types.hpp"
