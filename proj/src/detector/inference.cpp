#include "tempodet/detector/inference.hpp"

#include <algorithm>
#include <cstdio>

#include "tempodet/errors.hpp"

namespace tempodet::detector {

PreparedSample prepare_sample(const data::FrameSequence& seq, int image_size, int frames) {
  if (seq.length() < frames)
    throw ShapeError("prepare_sample: sequence has " + std::to_string(seq.length()) + " frames, model needs " +
                     std::to_string(frames));
  PreparedSample s;
  for (int t = seq.length() - frames; t < seq.length(); ++t) {
    const auto& f = seq.frames[static_cast<std::size_t>(t)];
    if (f.dim(1) == image_size && f.dim(2) == image_size) {
      s.frames.push_back(f);
      s.transform = {1.0, 0.0, 0.0, f.dim(2), f.dim(1), image_size};
    } else {
      auto [canvas, tr] = geometry::letterbox(f, image_size);
      s.frames.push_back(std::move(canvas));
      s.transform = tr;
    }
  }
  for (const auto& b : seq.target()) {
    NormBox m = s.transform.apply(b);
    if (geometry::clip_to_unit(m)) s.target.push_back(m);
  }
  return s;
}

Tensor<float> stack_batch(const std::vector<PreparedSample>& samples) {
  if (samples.empty()) throw ShapeError("stack_batch: empty batch");
  const auto& first = samples.front().frames.front();
  const int F = static_cast<int>(samples.front().frames.size());
  Tensor<float> out({static_cast<int>(samples.size()) * F, first.dim(0), first.dim(1), first.dim(2)});
  std::size_t off = 0;
  for (const auto& s : samples)
    for (const auto& f : s.frames) {
      if (f.shape() != first.shape()) throw ShapeError("stack_batch: frames differ in shape");
      std::copy(f.data(), f.data() + f.size(), out.data() + off);
      off += f.size();
    }
  return out;
}

std::string image_id(const std::string& video_id, int frame_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "/%05d", frame_index);
  return video_id + buf;
}

std::vector<FramePrediction> predict_frames(const Model<float>& model, const data::VideoRecord& video,
                                            const std::vector<int>& frame_indices, const DecodeOptions& decode,
                                            int batch_size) {
  const auto& cfg = model.config();
  const int F = cfg.frames();
  std::vector<FramePrediction> out;
  for (std::size_t begin = 0; begin < frame_indices.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(frame_indices.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<PreparedSample> batch;
    for (std::size_t i = begin; i < end; ++i) {
      const int idx = frame_indices[i];
      if (idx < 0 || idx >= video.size())
        throw DataError("frame " + std::to_string(idx) + " is outside video " + video.id + " (0-" +
                        std::to_string(video.size() - 1) + ")");
      batch.push_back(prepare_sample(data::context_window(video, idx, F), cfg.image_size, F));
    }
    const auto dets = detector::decode(model.forward(stack_batch(batch)), cfg, decode);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& tr = batch[i - begin].transform;
      FramePrediction p{video.id, frame_indices[i], {}};
      for (const auto& d : dets[i - begin]) {
        PixelBox b = tr.invert(d);
        b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(tr.src_w));
        b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(tr.src_w));
        b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(tr.src_h));
        b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(tr.src_h));
        if (b.width() > 0 && b.height() > 0) p.boxes.push_back(b);
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

EvalResult evaluate_videos(const Model<float>& model, const data::Dataset& dataset,
                           const std::vector<std::string>& video_ids, const EvalSettings& settings) {
  if (video_ids.empty()) throw DataError("evaluation split is empty");
  if (settings.frame_stride < 1) throw ConfigError("eval: frame_stride must be at least 1");
  const int first = settings.first_frame >= 0 ? settings.first_frame : model.config().window - 1;
  EvalResult r;
  for (const auto& id : video_ids) {
    const auto& video = dataset.video(id);
    std::vector<int> idx;
    for (int i = first; i < video.size(); i += settings.frame_stride) idx.push_back(i);
    if (idx.empty()) continue;
    const auto first_frame = video.frame_bytes(idx.front());
    for (auto& p : predict_frames(model, video, idx, settings.decode, settings.batch_size)) {
      const std::string iid = image_id(id, p.frame_index);
      for (const auto& b : p.boxes) r.detections.push_back({iid, b});
      for (const auto& g : video.labels[static_cast<std::size_t>(p.frame_index)])
        r.truths.push_back({iid, geometry::norm_to_pixel(g, first_frame.width, first_frame.height)});
      ++r.frames;
    }
  }
  r.metrics = eval::map_range(r.detections, r.truths, settings.eval);
  return r;
}

}  // namespace tempodet::detector
