// Umbrella header for run-directory persistence.
#pragma once

#include "grok/checkpoint.hpp"
#include "grok/io.hpp"
#include "grok/manifest.hpp"
#include "grok/metrics.hpp"
#include "grok/plots.hpp"
