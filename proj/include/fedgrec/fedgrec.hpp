/*
 * Copyright 2026 The FedGRec Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDGREC_FEDGREC_HPP_
#define FEDGREC_FEDGREC_HPP_

#include "fedgrec/checkpoint.hpp"
#include "fedgrec/client.hpp"
#include "fedgrec/dataset.hpp"
#include "fedgrec/embedding.hpp"
#include "fedgrec/errors.hpp"
#include "fedgrec/eval.hpp"
#include "fedgrec/protocol.hpp"
#include "fedgrec/reference_oracle.hpp"
#include "fedgrec/secagg.hpp"
#include "fedgrec/server.hpp"
#include "fedgrec/verify.hpp"

#endif  // FEDGREC_FEDGREC_HPP_
