#pragma once

#include "agentseval/agents.hpp"
#include "agentseval/cli.hpp"
#include "agentseval/core.hpp"
#include "agentseval/error.hpp"
#include "agentseval/llmclient.hpp"
#include "agentseval/log.hpp"
#include "agentseval/perturb.hpp"
#include "agentseval/pipeline.hpp"
#include "agentseval/prompts.hpp"
#include "agentseval/stats.hpp"
#include "agentseval/text.hpp"
#include "agentseval/textmetrics.hpp"
