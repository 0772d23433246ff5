#pragma once

// Umbrella header for the ilk isolation-leak testing library.

#include "ilk/analyzer.hpp"
#include "ilk/arch.hpp"
#include "ilk/campaign.hpp"
#include "ilk/config.hpp"
#include "ilk/corpus.hpp"
#include "ilk/executor.hpp"
#include "ilk/generator.hpp"
#include "ilk/harness.hpp"
#include "ilk/isa.hpp"
#include "ilk/macros.hpp"
#include "ilk/model.hpp"
#include "ilk/package.hpp"
#include "ilk/paging.hpp"
#include "ilk/report.hpp"
#include "ilk/rng.hpp"
#include "ilk/template_lang.hpp"
