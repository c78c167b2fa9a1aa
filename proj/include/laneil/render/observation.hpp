#pragma once

#include <cstdint>

#include "laneil/render/preprocess.hpp"
#include "laneil/render/renderer.hpp"

namespace laneil::render {

// preprocess(render_frame(...)) evaluated lazily: only the pixels that the
// resize taps read are rendered. Bit-identical to the full path.
inline InputTensor render_observation(const sim::TrackMap& map, const sim::Pose& pose, const CameraModel& camera,
                                      const DomainConfig& domain, std::uint64_t frame_seed) {
  require(camera.height == preprocess::kFrameHeight && camera.width == preprocess::kFrameWidth,
          ErrorKind::ShapeMismatch, "render_observation expects a 640x480 camera");
  const FrameRenderer fr(map, pose, camera, domain, frame_seed);
  return preprocess::preprocess_from([&fr](int r, int c) { return fr.pixel(r, c); });
}

}  // namespace laneil::render
