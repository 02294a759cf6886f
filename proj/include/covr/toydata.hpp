// Copyright 2026 The covr-forge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>

namespace covr {

struct ToyDatasetOptions {
    std::size_t captions = 500;
    std::size_t videos = 600;
    std::size_t heldout_captions = 120;
    std::size_t heldout_videos = 140;
    std::size_t dim = 64;
    std::size_t frames_per_video = 15;
    double scene_weight = 1.0;   // scene direction added to each video's content
    double frame_noise = 0.3;    // per-frame noise norm relative to the content
    std::uint64_t seed = 0;
};

// Writes a synthetic corpus (corpus.csv, heldout.csv, frames.csv, frames.cvem,
// dictionary.txt, zipf.tsv) and a matching config.json into dir.
//
// Captions follow "{adj} {noun} {verb} in the {place}", plus a handful of
// captions that trip each caption filter. A video's frames are noisy copies
// of toy_embed(caption) mixed with one of two scene directions, so a
// modification text naming the new word is enough to find the target.
void make_toy_dataset(const std::filesystem::path& dir, const ToyDatasetOptions& options = {});

}  // namespace covr
