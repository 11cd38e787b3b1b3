#pragma once

#include <cstdint>
#include <vector>

#include "gridshed/network.hpp"
#include "gridshed/powerflow.hpp"

namespace gridshed {

/// Bus-by-line matrix of flow directions: +1 where a line's active power
/// enters the bus, -1 where it leaves, 0 otherwise.
class OrientedIncidence {
  public:
    OrientedIncidence() = default;
    OrientedIncidence(std::size_t buses, std::size_t lines, double valid_at = 0.0)
        : rows_(buses), cols_(lines), valid_at_(valid_at), entries_(buses * lines, 0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double valid_at() const { return valid_at_; }

    int at(std::size_t bus, std::size_t line) const { return entries_[bus * cols_ + line]; }
    void set(std::size_t bus, std::size_t line, int value) {
        entries_[bus * cols_ + line] = static_cast<std::int8_t>(value);
    }

    friend bool operator==(OrientedIncidence const&, OrientedIncidence const&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    double valid_at_ = 0.0;
    std::vector<std::int8_t> entries_;
};

/// Flows below this magnitude (pu) count as from_bus -> to_bus.
inline constexpr double kFlowDirectionDeadband = 1e-6;

/// Orients every line that carried flow in `flows` by the sign of its
/// sending-end MW; lines without flow get an all-zero column.
OrientedIncidence build_incidence(Network const& network, powerflow::PowerFlowSolution const& flows,
                                  double valid_at = 0.0);

}  // namespace gridshed
