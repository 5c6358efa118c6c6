#pragma once

#include <functional>

namespace ibctrl::detail {

void parallel_trials(int n_trials, int threads, const std::function<void(int)>& body);

}  // namespace ibctrl::detail
