#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddat {

enum class Partition { train, dev, test };
enum class Dimension { arousal, valence };

std::string_view to_string(Partition p);
std::string_view to_string(Dimension d);
Partition parse_partition(std::string_view s);
Dimension parse_dimension(std::string_view s);

/// Error raised while reading or validating an input file. The message
/// carries the file name and, where meaningful, the row and column.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ddat
