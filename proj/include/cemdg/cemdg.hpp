#pragma once

#include "cemdg/assembly.hpp"
#include "cemdg/basis.hpp"
#include "cemdg/bench.hpp"
#include "cemdg/media.hpp"
#include "cemdg/mesh.hpp"
#include "cemdg/plot.hpp"
#include "cemdg/solver.hpp"
#include "cemdg/spectral.hpp"
