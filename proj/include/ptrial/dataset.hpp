#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ptrial/design.hpp"
#include "ptrial/errors.hpp"

namespace ptrial {

// Maps CSV columns onto the roles the loader needs. Parsed from JSON:
//   { "id": col, "arm": col, "outcome": col, "substudy": col?,
//     "z_factors": {factor: col},
//     "covariates": {"numeric": [cols], "categorical": [cols]} }
struct ColumnMap {
  std::string id;
  std::string arm;
  std::string outcome;
  std::optional<std::string> substudy;
  std::vector<std::pair<std::string, std::string>> z_factors;  // factor -> column
  std::vector<std::string> numeric_covariates;
  std::vector<std::string> categorical_covariates;

  static ColumnMap parse(const std::string& text) {
    ordered_json doc;
    try {
      doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("column map: ") + e.what());
    }
    detail::require_keys(doc, "column map", {"id", "arm", "outcome", "z_factors"},
                         {"substudy", "covariates"});
    ColumnMap m;
    auto str_field = [&](const char* key) {
      if (!doc[key].is_string()) {
        throw SchemaError(std::string("column map: '") + key + "' must be a string");
      }
      return doc[key].get<std::string>();
    };
    m.id = str_field("id");
    m.arm = str_field("arm");
    m.outcome = str_field("outcome");
    if (doc.contains("substudy")) m.substudy = str_field("substudy");
    if (!doc["z_factors"].is_object() || doc["z_factors"].empty()) {
      throw SchemaError("column map: 'z_factors' must be a non-empty object");
    }
    for (auto it = doc["z_factors"].begin(); it != doc["z_factors"].end(); ++it) {
      if (!it.value().is_string()) {
        throw SchemaError("column map: z factor columns must be strings");
      }
      m.z_factors.emplace_back(it.key(), it.value().get<std::string>());
    }
    if (doc.contains("covariates")) {
      detail::require_keys(doc["covariates"], "column map covariates", {},
                           {"numeric", "categorical"});
      auto read_list = [&](const char* key, std::vector<std::string>& out) {
        if (!doc["covariates"].contains(key)) return;
        for (const auto& c : doc["covariates"][key]) {
          if (!c.is_string()) {
            throw SchemaError("column map: covariate columns must be strings");
          }
          out.push_back(c.get<std::string>());
        }
      };
      read_list("numeric", m.numeric_covariates);
      read_list("categorical", m.categorical_covariates);
    }
    return m;
  }
};

// One retained participant. Covariate values are aligned with the
// dataset-level covariate registries; arm and sub-study are indices
// into the schedule.
struct ParticipantRecord {
  std::string id;
  ZKey z;
  std::vector<double> numeric_x;
  std::vector<std::string> categorical_x;
  int arm = -1;
  int substudy = -1;  // -1 when absent
  double outcome = 0.0;
  std::size_t schedule_row = 0;
};

// Immutable participant-level data bound to a compiled schedule; every
// record carries its full assignment probability vector via the
// schedule row it matched.
class Dataset {
 public:
  Dataset(AssignmentSchedule schedule, std::vector<ParticipantRecord> records,
          std::vector<std::string> numeric_names,
          std::vector<std::string> categorical_names,
          std::size_t excluded_missing_outcome)
      : schedule_(std::move(schedule)),
        records_(std::move(records)),
        numeric_names_(std::move(numeric_names)),
        categorical_names_(std::move(categorical_names)),
        excluded_missing_outcome_(excluded_missing_outcome) {
    collect_levels();
    validate();
  }

  const AssignmentSchedule& schedule() const { return schedule_; }
  const std::vector<ParticipantRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::size_t excluded_missing_outcome() const { return excluded_missing_outcome_; }

  const std::vector<std::string>& numeric_names() const { return numeric_names_; }
  const std::vector<std::string>& categorical_names() const {
    return categorical_names_;
  }
  // Observed levels of a categorical covariate, sorted; the first level
  // acts as the reference in one-hot expansions.
  const std::vector<std::string>& categorical_levels(std::size_t c) const {
    return categorical_levels_[c];
  }

  int numeric_index(const std::string& name) const {
    auto it = std::find(numeric_names_.begin(), numeric_names_.end(), name);
    return it == numeric_names_.end()
               ? -1
               : static_cast<int>(it - numeric_names_.begin());
  }
  int categorical_index(const std::string& name) const {
    auto it = std::find(categorical_names_.begin(), categorical_names_.end(), name);
    return it == categorical_names_.end()
               ? -1
               : static_cast<int>(it - categorical_names_.begin());
  }

  double pi(std::size_t record, int arm) const {
    return schedule_.rows[records_[record].schedule_row]
        .pi[static_cast<std::size_t>(arm)];
  }

  const std::vector<double>& pi_row(std::size_t record) const {
    return schedule_.rows[records_[record].schedule_row].pi;
  }

 private:
  void collect_levels() {
    categorical_levels_.assign(categorical_names_.size(), {});
    for (std::size_t c = 0; c < categorical_names_.size(); ++c) {
      std::set<std::string> seen;
      for (const auto& r : records_) seen.insert(r.categorical_x[c]);
      categorical_levels_[c].assign(seen.begin(), seen.end());
    }
  }

  void validate() const {
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (r.schedule_row >= schedule_.rows.size()) {
        throw ValueError("record '" + r.id + "': dangling schedule row");
      }
      if (r.arm < 0 || r.arm >= static_cast<int>(schedule_.arms.size())) {
        throw ValueError("record '" + r.id + "': arm index out of range");
      }
      if (pi(i, r.arm) <= 0.0) {
        throw ValueError("record '" + r.id +
                         "': observed arm has zero probability at " + r.z.str());
      }
      if (r.numeric_x.size() != numeric_names_.size() ||
          r.categorical_x.size() != categorical_names_.size()) {
        throw ValueError("record '" + r.id + "': covariate arity mismatch");
      }
      KahanSum total;
      for (double p : pi_row(i)) total.add(p);
      if (std::abs(total.value() - 1.0) > kProbTol) {
        throw ValueError("record '" + r.id + "': probabilities do not sum to 1");
      }
    }
  }

  AssignmentSchedule schedule_;
  std::vector<ParticipantRecord> records_;
  std::vector<std::string> numeric_names_;
  std::vector<std::string> categorical_names_;
  std::vector<std::vector<std::string>> categorical_levels_;
  std::size_t excluded_missing_outcome_ = 0;
};

namespace detail {

// Minimal RFC-4180 CSV reader: comma-delimited, optional quoting with
// doubled-quote escapes, LF or CRLF line ends.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&]() {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&]() {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      end_row();
      ++i;
    } else if (c == '\n') {
      end_row();
    } else {
      field += c;
      field_started = true;
    }
    ++i;
  }
  if (in_quotes) throw ParseError("csv: unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

inline double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + s + "'");
  }
}

}  // namespace detail

// Loads participant records against a design. Rows with a blank outcome
// are excluded and counted; any other missing cell rejects the file.
inline Dataset load_records(const std::string& csv_text, const TrialDesign& design,
                            const ColumnMap& cols) {
  AssignmentSchedule sched = compile_schedule(design);
  auto table = detail::parse_csv(csv_text);
  if (table.empty()) throw ParseError("csv: missing header row");
  const auto& header = table.front();

  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw SchemaError("csv: missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t id_col = column_of(cols.id);
  const std::size_t arm_col = column_of(cols.arm);
  const std::size_t outcome_col = column_of(cols.outcome);
  std::optional<std::size_t> substudy_col;
  if (cols.substudy) {
    if (design.format == DesignFormat::MultiArm) {
      throw ValueError("column map: sub-study column given for a multi-arm design");
    }
    substudy_col = column_of(*cols.substudy);
  }
  std::vector<std::pair<std::string, std::size_t>> z_cols;
  for (const auto& [factor, col] : cols.z_factors) z_cols.emplace_back(factor, column_of(col));
  std::vector<std::size_t> num_cols, cat_cols;
  for (const auto& c : cols.numeric_covariates) num_cols.push_back(column_of(c));
  for (const auto& c : cols.categorical_covariates) cat_cols.push_back(column_of(c));

  std::vector<ParticipantRecord> records;
  std::size_t excluded = 0;
  for (std::size_t rix = 1; rix < table.size(); ++rix) {
    const auto& cells = table[rix];
    if (cells.size() != header.size()) {
      throw ParseError("csv row " + std::to_string(rix + 1) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    }
    const std::string where = "csv row " + std::to_string(rix + 1);
    if (cells[outcome_col].empty()) {
      ++excluded;
      continue;
    }
    ParticipantRecord rec;
    rec.id = cells[id_col];
    rec.outcome = detail::parse_number(cells[outcome_col], where + " outcome");

    std::vector<std::pair<std::string, std::string>> zf;
    for (const auto& [factor, col] : z_cols) {
      if (cells[col].empty()) throw ValueError(where + ": missing level for '" + factor + "'");
      zf.emplace_back(factor, cells[col]);
    }
    rec.z = ZKey::of(std::move(zf));

    const ScheduleRow* srow = sched.find(rec.z);
    if (srow == nullptr) {
      throw ValueError(where + ": no design row for " + rec.z.str());
    }
    rec.schedule_row = static_cast<std::size_t>(srow - sched.rows.data());

    rec.arm = sched.arm_index(cells[arm_col]);
    if (rec.arm < 0) throw ValueError(where + ": unknown arm '" + cells[arm_col] + "'");
    if (srow->pi[static_cast<std::size_t>(rec.arm)] <= 0.0) {
      throw ValueError(where + ": observed arm has zero probability at " +
                       rec.z.str());
    }

    if (substudy_col && !cells[*substudy_col].empty()) {
      rec.substudy = sched.substudy_index(cells[*substudy_col]);
      if (rec.substudy < 0) {
        throw ValueError(where + ": unknown sub-study '" + cells[*substudy_col] + "'");
      }
      if (srow->joint &&
          (*srow->joint)[static_cast<std::size_t>(rec.arm)]
                        [static_cast<std::size_t>(rec.substudy)] <= 0.0) {
        throw ValueError(where + ": observed (arm, sub-study) pair has zero probability");
      }
    }

    for (std::size_t c = 0; c < num_cols.size(); ++c) {
      if (cells[num_cols[c]].empty()) {
        throw ValueError(where + ": missing covariate '" +
                         cols.numeric_covariates[c] + "'");
      }
      rec.numeric_x.push_back(detail::parse_number(
          cells[num_cols[c]], where + " covariate " + cols.numeric_covariates[c]));
    }
    for (std::size_t c = 0; c < cat_cols.size(); ++c) {
      if (cells[cat_cols[c]].empty()) {
        throw ValueError(where + ": missing covariate '" +
                         cols.categorical_covariates[c] + "'");
      }
      rec.categorical_x.push_back(cells[cat_cols[c]]);
    }
    records.push_back(std::move(rec));
  }

  return Dataset(std::move(sched), std::move(records), cols.numeric_covariates,
                 cols.categorical_covariates, excluded);
}

}  // namespace ptrial
