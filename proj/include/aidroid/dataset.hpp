#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "aidroid/hin.hpp"

namespace aidroid {

enum class Label : std::uint8_t { Benign = 0, Malicious = 1 };

// A HIN plus labels on APP nodes and a disjoint in-sample / out-of-sample split.
struct LabeledDataset {
  Hin hin;
  std::map<NodeId, Label> labels;
  std::vector<NodeId> in_sample;      // sorted
  std::vector<NodeId> out_of_sample;  // sorted

  // Throws InputError if labels sit on non-APP nodes or the split is not a
  // partition of the labeled apps.
  void validate() const;
};

// Deterministic split: shuffles the labeled apps (in NodeId order) with
// `seed` and moves floor(holdout_fraction * n) of them out of sample.
void assign_split(LabeledDataset& ds, double holdout_fraction, std::uint64_t seed);

// Label file: app_key<TAB>label with label in {0, 1}.
std::map<NodeId, Label> read_labels(std::istream& in, const Hin& hin, const std::string& source = "<labels>");
void write_labels(std::ostream& out, const Hin& hin, const std::map<NodeId, Label>& labels);

LabeledDataset load_dataset(const std::string& edge_path, const std::string& label_path,
                            double holdout_fraction, std::uint64_t seed);

struct SynthConfig {
  std::uint32_t n_apps_per_class = 500;
  std::uint32_t n_api = 200;
  std::uint32_t n_imei = 400;
  std::uint32_t n_sig = 100;
  std::uint32_t n_aff = 100;
  double p_intra = 0.9;
  double p_inter = 0.1;
  // Poisson means of the app-incident relations R1..R4.
  double mean_degree_api = 8.0;
  double mean_degree_imei = 3.0;
  double mean_degree_sig = 1.0;
  double mean_degree_aff = 1.0;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

// Two planted app classes. Every entity pool is split into a class-0 half and
// a class-1 half; each app draws Poisson(mean) links per app-incident relation,
// each landing in its own class's half with probability p_intra/(p_intra+p_inter).
// IMEI-SIG and IMEI-AFF edges follow from co-installation.
LabeledDataset synth_hin(const SynthConfig& cfg);

}  // namespace aidroid
