#pragma once

#include "errors.hpp"
#include "sparse.hpp"
#include "laplacian.hpp"
#include "dataset.hpp"
#include "proximity.hpp"
#include "lanczos.hpp"
#include "spectral.hpp"
#include "perturb.hpp"
#include "gcn.hpp"
#include "trainer.hpp"
#include "geometry.hpp"
