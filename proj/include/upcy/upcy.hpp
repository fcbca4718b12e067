#pragma once

// Umbrella header for the sparse-upcycling laboratory.

#include "upcy/budget.hpp"
#include "upcy/checkpoint.hpp"
#include "upcy/config.hpp"
#include "upcy/core.hpp"
#include "upcy/corpus.hpp"
#include "upcy/evalsuite.hpp"
#include "upcy/kernels.hpp"
#include "upcy/manifest.hpp"
#include "upcy/model.hpp"
#include "upcy/moe.hpp"
#include "upcy/report.hpp"
#include "upcy/servesim.hpp"
#include "upcy/surgeon.hpp"
#include "upcy/trainer.hpp"
