#pragma once

#include "tmu/types.hpp"

#include <string>
#include <vector>

namespace tmu {

// Labeled samples stored one per row, pixel values in [0,1], CHW layout
// (channel-major: flat index = (c*height + y)*width + x). The `index` column
// carries each sample's stable id in its source dataset so that split
// disjointness is testable by identity rather than by pixel comparison.
struct LabeledDataset {
  std::string name;
  int num_classes = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  Matrix images;   // N x (channels*height*width)
  VectorXi labels; // N
  VectorXi index;  // N, stable source ids

  int size() const { return static_cast<int>(images.rows()); }
  int dim() const { return channels * height * width; }
  LabeledDataset take(const std::vector<int>& rows) const;
  void validate() const;
};

struct DatasetPair {
  LabeledDataset train;
  LabeledDataset test;
};

// Immutable removal partition: remain and forget cover the training set and
// are disjoint by index; every forget sample carries the forgetting class.
struct DataSplit {
  LabeledDataset remain;
  LabeledDataset forget;
  LabeledDataset test;
  int forget_class = -1;
  uint64_t seed = 0;

  int train_size() const { return remain.size() + forget.size(); }
};

struct TwinSizing {
  long n_forget = 0;
  long n_remain = 0;
  long n_twin_forget = 0;
  double ratio_original = 0.0;
  double ratio_twin = 0.0;
};

// Registered names: "cifar10", "cifar100", "synthetic-gauss", "synthetic-image".
// Synthetic names accept parameters after a colon, e.g.
//   synthetic-gauss:classes=2,dim=2,train=1200,test=400,sigma=0.25,seed=1234
//   synthetic-image:classes=10,hw=16,train=6000,test=1600,noise=0.16,ambig=0.3,seed=7
// CIFAR names accept "subset=N" to subsample the training portion.
DatasetPair load_dataset(const std::string& name, const std::string& root);

DataSplit make_removal_split(const LabeledDataset& train, int forget_class, int n_forget,
                             uint64_t seed, const LabeledDataset* test = nullptr);

// |D_test,twin| = round(n_forget * (n_remain + n_forget) / n_remain),
// round half to even.
long size_twin_forget_set(long n_remain, long n_forget);
TwinSizing twin_sizing(long n_remain, long n_forget);

// Uniform subsample when n <= |dataset|; otherwise the originals plus
// augmented copies (random horizontal flip + 4-pixel pad-and-crop).
LabeledDataset resize_to(const LabeledDataset& dataset, int n, uint64_t seed, bool augment);

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

std::string dataset_fingerprint(const LabeledDataset& d);

// Plain-text split manifest {seed, forget_class, forget_indices}; splits are
// re-creatable from the manifest without re-running sampling.
void save_split_manifest(const DataSplit& split, const std::string& path);
DataSplit load_split_manifest(const LabeledDataset& train, const std::string& path,
                              const LabeledDataset* test = nullptr);

}  // namespace tmu
