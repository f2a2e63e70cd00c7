#include "strfsed/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace strfsed {

std::size_t LabelSet::event_count() const {
  std::size_t n = 0;
  for (const auto& [file, events] : files) n += events.size();
  return n;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_row(const std::string& line) {
  const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, delim)) out.push_back(trim(field));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

LabelSet parse_labels_text(const std::string& text, bool strict) {
  LabelSet set;
  std::set<std::string> vocab;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  auto reject = [&](const std::string& reason) {
    if (strict) throw LabelParseError(lineno, reason);
    set.skipped.push_back({lineno, reason});
  };
  while (std::getline(is, line)) {
    ++lineno;
    const std::string row = trim(line);
    if (row.empty() || row[0] == '#') continue;
    const auto fields = split_row(row);
    double onset = 0.0, offset = 0.0, conf = 1.0;
    if (lineno == 1 && fields.size() >= 2 && !parse_number(fields[1], onset)) continue;  // header
    if (fields.size() < 4 || fields.size() > 5) {
      reject("expected 4 or 5 fields, got " + std::to_string(fields.size()));
      continue;
    }
    if (fields[0].empty()) {
      reject("empty filename");
      continue;
    }
    if (!parse_number(fields[1], onset) || !parse_number(fields[2], offset)) {
      reject("onset/offset must be numbers");
      continue;
    }
    if (!(onset < offset)) {
      reject("onset " + fields[1] + " is not before offset " + fields[2]);
      continue;
    }
    if (onset < 0.0) {
      reject("negative onset");
      continue;
    }
    if (fields[3].empty()) {
      reject("empty class label");
      continue;
    }
    if (fields.size() == 5 && !fields[4].empty()) {
      if (!parse_number(fields[4], conf) || conf < 0.0 || conf > 1.0) {
        reject("confidence must be a number in [0, 1]");
        continue;
      }
    }
    set.files[fields[0]].push_back({fields[0], onset, offset, fields[3], conf});
    vocab.insert(fields[3]);
  }
  set.classes.assign(vocab.begin(), vocab.end());
  return set;
}

LabelSet parse_labels(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_labels_text(ss.str(), strict);
}

void write_labels(const std::filesystem::path& path, const EventList& events) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write label file " + path.string());
  out << "filename,onset,offset,label,confidence\n";
  char buf[64];
  for (const Event& e : events) {
    out << e.file;
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,", e.onset_s, e.offset_s);
    out << buf << e.label;
    std::snprintf(buf, sizeof buf, ",%.6f\n", e.confidence);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Tensor frame_targets(const EventList& events, std::size_t n_frames, double frame_period_s,
                     const std::vector<std::string>& classes, bool strict) {
  if (!(frame_period_s > 0.0)) throw std::invalid_argument("frame period must be > 0");
  Tensor out({n_frames, classes.size()});
  for (const Event& e : events) {
    const auto it = std::find(classes.begin(), classes.end(), e.label);
    if (it == classes.end()) {
      if (strict) throw std::invalid_argument("unknown class label '" + e.label + "'");
      continue;
    }
    const auto c = static_cast<std::size_t>(it - classes.begin());
    for (std::size_t t = 0; t < n_frames; ++t) {
      const double lo = static_cast<double>(t) * frame_period_s;
      const double hi = lo + frame_period_s;
      if (std::min(hi, e.offset_s) - std::max(lo, e.onset_s) > 1e-9) {
        out.at(t, c) = std::max(out.at(t, c), e.confidence);
      }
    }
  }
  return out;
}

std::vector<std::string> FoldPlan::files_in(std::size_t fold) const {
  std::vector<std::string> out;
  for (const auto& [f, k] : fold_of) {
    if (k == fold) out.push_back(f);
  }
  return out;
}

std::vector<std::string> FoldPlan::files_not_in(std::size_t fold) const {
  std::vector<std::string> out;
  for (const auto& [f, k] : fold_of) {
    if (k != fold) out.push_back(f);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::sizes() const {
  std::vector<std::size_t> out(k, 0);
  for (const auto& [f, fold] : fold_of) ++out[fold];
  return out;
}

FoldPlan make_folds(std::vector<std::string> file_ids, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("make_folds: k must be >= 1");
  std::sort(file_ids.begin(), file_ids.end());
  file_ids.erase(std::unique(file_ids.begin(), file_ids.end()), file_ids.end());
  if (file_ids.size() < k) {
    throw std::invalid_argument("make_folds: " + std::to_string(file_ids.size()) +
                                " files cannot fill " + std::to_string(k) + " folds");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = file_ids.size(); i-- > 1;) std::swap(file_ids[i], file_ids[rng() % (i + 1)]);
  FoldPlan plan;
  plan.k = k;
  for (std::size_t i = 0; i < file_ids.size(); ++i) plan.fold_of[file_ids[i]] = i % k;
  return plan;
}

}  // namespace strfsed
