/**
 * @file eval.hpp
 * @brief ROI volumes and agreement reports between segmentation methods.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lfsr/stats.hpp"
#include "lfsr/volume.hpp"

namespace lfsr::eval {

/// ROI formed by summing constituent labels.
struct CompositeRoi {
  std::string name;
  std::vector<std::int32_t> labels;
};

/// Composites for the brain phantom labels: "whole-cerebrum" (cortex, white
/// matter, ventricles) and "cerebral-tissue" (cortex, white matter).
std::vector<CompositeRoi> default_composites();

/// Volume in mm^3 for every table label (by name, background included) and
/// every composite. Throws ConfigError when a composite names a label missing
/// from the table or collides with a label name.
std::map<std::string, double> roi_volumes(const LabelVolume& seg, const std::vector<CompositeRoi>& composites = {});

/// Subjects x ROIs, mm^3, for one method.
struct VolumeTable {
  std::string method;
  std::vector<std::string> subjects;
  std::vector<std::string> rois;
  std::vector<std::vector<double>> values;  // [subject][roi]

  /// Throws InputError on ragged rows, duplicate names or negative volumes.
  void validate() const;
  std::optional<double> find(const std::string& subject, const std::string& roi) const;
  void add(const std::string& subject, const std::map<std::string, double>& volumes);
};

/// Long-format CSV with header subject,roi,volume,method; one table per method
/// in first-appearance order.
std::vector<VolumeTable> read_volume_csv(const std::filesystem::path& path);
std::vector<VolumeTable> parse_volume_csv(const std::string& text);
std::string format_volume_csv(const std::vector<VolumeTable>& tables);

struct MethodStats {
  std::string roi;
  std::string method;
  stats::PearsonResult pearson;
  stats::BlandAltmanResult bland_altman;
  std::vector<double> gold, values;  // paired, in subject order
};

struct SteigerComparison {
  std::string roi;
  std::string method_a, method_b;
  double r_gA = 0.0, r_gB = 0.0, r_AB = 0.0;
  /// Empty when a correlation is +-1 or undefined.
  std::optional<stats::SteigerResult> test;
};

struct AgreementReport {
  std::vector<MethodStats> rows;
  std::vector<SteigerComparison> steiger;
  std::string footer;

  const MethodStats* find(const std::string& roi, const std::string& method) const;
  const SteigerComparison* find_steiger(const std::string& roi, const std::string& a, const std::string& b) const;
};

/// Pearson and Bland-Altman of every method against the gold table per ROI,
/// and Steiger comparisons for every method pair sharing the gold standard.
/// ROIs are those of the gold table. Throws InputError naming subjects or ROIs
/// a method lacks, and StatsError for a constant column.
AgreementReport build_report(const VolumeTable& gold, const std::vector<VolumeTable>& methods);

/// table.csv (roi, method, r, p, flags), bland_altman.csv, steiger.csv,
/// notes.txt and scatter_<roi>.svg / bland_altman_<roi>.svg per ROI. The first
/// method is the reference: another method is flagged "*" when Steiger finds
/// its correlation significantly lower (p < 0.05).
void write_report(const AgreementReport& report, const std::filesystem::path& dir);

// SVG figures.
struct Series {
  std::string label;
  std::vector<double> x, y;
};
std::string scatter_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                        const std::vector<Series>& series, bool identity_line);
std::string bland_altman_svg(const std::string& title, const std::vector<double>& gold,
                             const std::vector<double>& method, const stats::BlandAltmanResult& ba);

}  // namespace lfsr::eval
