/*
 * Copyright 2026 The ERD Toolkit Authors.
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

#pragma once

#include "erd/bdi.hpp"
#include "erd/common.hpp"
#include "erd/corpus.hpp"
#include "erd/http_api.hpp"
#include "erd/literals.hpp"
#include "erd/llm_client.hpp"
#include "erd/llm_policy.hpp"
#include "erd/metrics.hpp"
#include "erd/prompt_builder.hpp"
#include "erd/response_parser.hpp"
#include "erd/run_service.hpp"
#include "erd/stream_engine.hpp"
