// bsnerf — broadband spectral radiance fields for snapshot multispectral light-field data
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bsnerf/common.hpp"
#include "bsnerf/field.hpp"
#include "bsnerf/geometry.hpp"
#include "bsnerf/image.hpp"
#include "bsnerf/losses.hpp"
#include "bsnerf/optim.hpp"
#include "bsnerf/renderer.hpp"
#include "bsnerf/scenedata.hpp"
#include "bsnerf/spectral.hpp"
