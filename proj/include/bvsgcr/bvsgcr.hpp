#pragma once
#include "errors.hpp"
#include "normal.hpp"
#include "marginals.hpp"
#include "truncated_normal.hpp"
#include "graphs.hpp"
#include "model.hpp"
#include "sampler.hpp"
#include "simgen.hpp"
#include "diagnostics.hpp"
#include "io.hpp"
#include "cli.hpp"
