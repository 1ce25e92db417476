/*
 * Copyright 2026 The mocap_calib Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include "mocap_calib/camera.hpp"
#include "mocap_calib/chain.hpp"
#include "mocap_calib/commands.hpp"
#include "mocap_calib/error.hpp"
#include "mocap_calib/geometry.hpp"
#include "mocap_calib/homography.hpp"
#include "mocap_calib/io.hpp"
#include "mocap_calib/lm.hpp"
#include "mocap_calib/pnp.hpp"
#include "mocap_calib/solver.hpp"
#include "mocap_calib/synth.hpp"
#include "mocap_calib/verify.hpp"
