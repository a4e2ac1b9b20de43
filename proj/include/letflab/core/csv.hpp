#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace letflab::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> comments;  // leading '#' lines, kept verbatim

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.comments.push_back(line);
      continue;
    }
    if (!have_header) {
      t.header = split_line(line);
      have_header = true;
    } else {
      t.rows.push_back(split_line(line));
    }
  }
  if (!have_header) throw std::runtime_error("csv: missing header in " + path);
  return t;
}

inline double to_double(const std::string& s, const std::string& what, std::size_t row) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("csv: row " + std::to_string(row) + ": bad numeric field '" +
                             s + "' for " + what);
  }
}

inline std::optional<double> to_optional_double(const std::string& s, const std::string& what,
                                                std::size_t row) {
  if (s.empty()) return std::nullopt;
  return to_double(s, what, row);
}

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("csv: cannot write " + path);
  }

  void comment(const std::string& text) { out_ << "# " << text << "\n"; }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

/// Shortest round-trip decimal representation.
inline std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace letflab::csv
