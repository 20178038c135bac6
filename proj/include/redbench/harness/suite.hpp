#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "redbench/attacks/attacks.hpp"
#include "redbench/harness/synth.hpp"
#include "redbench/micronet/train.hpp"
#include "redbench/tensor.hpp"

namespace redbench::harness {

struct AttackGroupConfig {
    std::string name;
    int source_count = 1;
    attacks::PatternKind pattern_kind = attacks::PatternKind::kGlobalAlternating;
    double magnitude = attacks::kGlobalMagnitude;
    int poison_per_source = 100;
    int models = 10;
    int patch_size = 6;  // chessboard patch edge, ignored by other kinds
};

struct DetectionParams {
    double pi = 0.9;
    double delta = 1e-4;
    double phi = 0.05;
    int tau_max = 2000;
    int images_per_class = 8;
    int data_limited_images = 2;
};

struct MethodConfig {
    std::string method = "lred";       // lred | ured | pred | lred-data-limited
    std::vector<std::string> groups;   // attacked groups to cover; empty = all
    int images_per_class = -1;         // -1: method default from DetectionParams
    int models_per_group = -1;         // -1: every model in the group
    int clean_models = -1;             // -1: every clean control
};

struct ExperimentSuite {
    std::string name = "suite";
    std::uint64_t seed = 1;
    DatasetConfig dataset;
    std::string arch = "cnn-small";
    micronet::TrainConfig train;
    std::vector<AttackGroupConfig> groups;
    int clean_models = 10;
    DetectionParams detection;
    std::vector<MethodConfig> methods;
    bool emit_timings = true;  // false pins every runtime field to zero
};

ExperimentSuite parse_suite_json(const std::string& text, const std::string& origin);
ExperimentSuite load_suite(const std::filesystem::path& path);

// Standalone section parsers for the dataset and training config files the
// CLI consumes; the same schemas appear nested inside a suite file.
DatasetConfig parse_dataset_json(const std::string& text, const std::string& origin);
micronet::TrainConfig parse_train_json(const std::string& text, const std::string& origin);

struct ModelSummary {
    std::string model_id;
    std::string group;  // attack group name, or "clean"
    bool attacked = false;
    int true_target = -1;
    std::vector<int> source_classes;
    std::string pattern_kind;
    double magnitude = 0.0;
    int poison_per_source = 0;
    double asr = std::numeric_limits<double>::quiet_NaN();
    double cta = std::numeric_limits<double>::quiet_NaN();
    double train_accuracy = std::numeric_limits<double>::quiet_NaN();
    double train_seconds = 0.0;
    bool failed = false;
    std::string diagnostic;
};

struct SuiteRow {
    std::string model_id;
    std::string group;
    std::string method;
    bool attacked = false;
    bool failed = false;
    std::string diagnostic;
    double asr = std::numeric_limits<double>::quiet_NaN();
    double cta = std::numeric_limits<double>::quiet_NaN();
    double pv = std::numeric_limits<double>::quiet_NaN();
    bool underflow = false;
    bool degenerate_fit = false;
    bool attack_detected = false;
    int inferred_target = -1;
    int true_target = -1;
    bool correct = false;
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double scale = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> norms;
    std::vector<double> r;
    std::vector<int> iterations;
    std::vector<std::uint8_t> converged;
    std::vector<double> true_target_weights;  // attacked rows, weights at t = t*
    int screened_out = 0;
    bool invariants_ok = true;
    double detect_seconds = 0.0;
    Tensor inferred_pattern;  // pattern behind r_max
};

struct GroupScore {
    std::string method;
    std::string group;  // includes "clean"
    int successes = 0;
    int models = 0;
};

struct WeightConcentrationEntry {
    std::string model_id;
    double source_mean = 0.0;
    double non_source_mean = 0.0;  // zero when every non-target class is a source
};

struct WeightConcentrationGroup {
    std::string method;
    std::string group;
    std::vector<WeightConcentrationEntry> entries;
    int dominance_count = 0;  // entries with source_mean > non_source_mean
};

struct SuiteReport {
    ExperimentSuite config;
    std::vector<ModelSummary> models;
    std::vector<SuiteRow> rows;
    std::vector<GroupScore> scores;
    std::vector<WeightConcentrationGroup> weight_concentration;
    double clean_cta_mean = std::numeric_limits<double>::quiet_NaN();
    double total_seconds = 0.0;
    std::string digest;  // hash of all seed-derived content, timing excluded
};

SuiteReport run_suite(const ExperimentSuite& suite);

// Writes report.json, rows.csv, and patterns/<model>-<method>.(ppm|pgm).
void emit_report(const SuiteReport& report, const std::filesystem::path& out_dir);

std::string report_json_text(const SuiteReport& report);
std::string report_csv_text(const SuiteReport& report);

}  // namespace redbench::harness
