#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "strfsed/metrics.hpp"
#include "strfsed/tensor.hpp"

namespace strfsed {

class LabelParseError : public std::runtime_error {
 public:
  LabelParseError(std::size_t line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct SkippedRow {
  std::size_t line = 0;
  std::string reason;
};

struct LabelSet {
  std::map<std::string, EventList> files;  // keyed by filename
  std::vector<std::string> classes;        // sorted vocabulary
  std::vector<SkippedRow> skipped;         // lenient mode only

  std::size_t event_count() const;
};

// Rows: filename,onset,offset,label[,confidence]; comma or tab separated.
// A first line whose onset field is not numeric is taken as a header.
LabelSet parse_labels_text(const std::string& text, bool strict = true);
LabelSet parse_labels(const std::filesystem::path& path, bool strict = true);

// Writes with 6-decimal times; the confidence column is always present.
void write_labels(const std::filesystem::path& path, const EventList& events);

// target[t][c] = max confidence of class-c events overlapping
// [t * period, (t + 1) * period) by a positive length.
Tensor frame_targets(const EventList& events, std::size_t n_frames, double frame_period_s,
                     const std::vector<std::string>& classes, bool strict = true);

struct FoldPlan {
  std::size_t k = 5;
  std::map<std::string, std::size_t> fold_of;

  std::vector<std::string> files_in(std::size_t fold) const;
  std::vector<std::string> files_not_in(std::size_t fold) const;
  std::vector<std::size_t> sizes() const;
};

// Sort, seeded Fisher-Yates shuffle, then round-robin assignment.
FoldPlan make_folds(std::vector<std::string> file_ids, std::size_t k = 5, std::uint64_t seed = 42);

}  // namespace strfsed
