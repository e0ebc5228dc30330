#pragma once

#include "seediff/aggregate.hpp"
#include "seediff/dump.hpp"
#include "seediff/errors.hpp"
#include "seediff/expansion.hpp"
#include "seediff/metrics.hpp"
#include "seediff/refine.hpp"
#include "seediff/seeding.hpp"
#include "seediff/strategies.hpp"
#include "seediff/synth.hpp"
#include "seediff/tensor.hpp"
#include "seediff/tensor_io.hpp"
