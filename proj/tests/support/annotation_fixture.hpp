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

#include <string>
#include <vector>

#include "covr/annotate.hpp"

namespace testing_support {

inline std::vector<covr::AnnotationCandidate> make_pool(std::size_t n) {
    std::vector<covr::AnnotationCandidate> pool;
    for (std::size_t i = 0; i < n; ++i) {
        covr::AnnotationCandidate c;
        c.candidate_id = "c" + std::to_string(i);
        c.query_video = "q" + std::to_string(i);
        c.target_video = "t" + std::to_string(i);
        c.texts = {"text " + std::to_string(i) + " a", "text " + std::to_string(i) + " b", "text " + std::to_string(i) + " c"};
        c.query_frames = covr::three_frame_refs(c.query_video, 15);
        c.target_frames = covr::three_frame_refs(c.target_video, 15);
        c.caption_a = "caption q" + std::to_string(i);
        c.caption_b = "caption t" + std::to_string(i);
        c.text_sim = {0.8};
        c.visual_sim = {0.9};
        pool.push_back(c);
    }
    return pool;
}

}  // namespace testing_support
