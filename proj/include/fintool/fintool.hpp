#pragma once

#include "fintool/core.hpp"
#include "fintool/io.hpp"
#include "fintool/tool_registry.hpp"
#include "fintool/tool_graph.hpp"
#include "fintool/semantic_index.hpp"
#include "fintool/retrieval.hpp"
#include "fintool/format_codec.hpp"
#include "fintool/sampling.hpp"
#include "fintool/cbhws.hpp"
#include "fintool/llm_gateway.hpp"
#include "fintool/dialogue.hpp"
#include "fintool/llm_agents.hpp"
