#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gridshed/cascade.hpp"

namespace gridshed::report {

struct LabeledRun {
    std::string label;  // e.g. "controller on"
    sim::RunResult const* result = nullptr;
};

/// Markdown summary: shed order (in event-log order), tripped lines, final
/// frequency and the most loaded lines at the end of each run. Two or more
/// runs add a side-by-side comparison table.
void write_report(Network const& network, sim::Scenario const& scenario, std::vector<LabeledRun> const& runs,
                  std::ostream& sink);

/// Final loading rates of in-service lines, largest first.
std::vector<std::pair<int, double>> final_rates(sim::RunResult const& result, std::size_t limit);

}  // namespace gridshed::report
