#pragma once

#include "cps/apdu.hpp"
#include "cps/bytes.hpp"
#include "cps/card.hpp"
#include "cps/classify.hpp"
#include "cps/explorer.hpp"
#include "cps/profile_config.hpp"
#include "cps/profiles.hpp"
#include "cps/program.hpp"
#include "cps/report.hpp"
#include "cps/router.hpp"
#include "cps/scenarios.hpp"
#include "cps/service.hpp"
#include "cps/trace.hpp"
#include "cps/watchdog.hpp"
