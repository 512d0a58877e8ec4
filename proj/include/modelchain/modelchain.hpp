#pragma once

#include "modelchain/bytes.hpp"
#include "modelchain/chain_dump.hpp"
#include "modelchain/digest.hpp"
#include "modelchain/errors.hpp"
#include "modelchain/harness/commands.hpp"
#include "modelchain/harness/config.hpp"
#include "modelchain/harness/dataset.hpp"
#include "modelchain/harness/io.hpp"
#include "modelchain/harness/scenario.hpp"
#include "modelchain/learning.hpp"
#include "modelchain/ledger.hpp"
#include "modelchain/protocol.hpp"
#include "modelchain/simnet.hpp"
#include "modelchain/trace.hpp"
