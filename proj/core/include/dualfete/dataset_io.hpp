#pragma once

#include <filesystem>
#include <vector>

#include "dualfete/synthdata.hpp"

namespace dualfete::data {

enum class Split { Labeled, Unlabeled, Test };

struct ExportedSample {
  SegSample sample;
  Split split;
};

// Directory layout: manifest.json
//   {"h": H, "w": W, "classes": C,
//    "samples": [{"id": 0, "image": "img_0.f32", "label": "lbl_0.u8", "split": "labeled"}, ...]}
// plus raw little-endian f32 images and u8 label files.
void export_dataset(const std::filesystem::path& dir, const std::vector<ExportedSample>& samples,
                    std::size_t num_classes);
std::vector<ExportedSample> import_dataset(const std::filesystem::path& dir);

const char* split_name(Split s);

}  // namespace dualfete::data
