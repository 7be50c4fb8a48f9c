#ifndef QAP_QAP_HPP
#define QAP_QAP_HPP

#include "qap/errors.hpp"
#include "qap/grid.hpp"
#include "qap/minimize.hpp"
#include "qap/particle.hpp"
#include "qap/string_action.hpp"
#include "qap/string_spectrum.hpp"
#include "qap/stationarity.hpp"
#include "qap/cli_io.hpp"

#endif  // QAP_QAP_HPP
