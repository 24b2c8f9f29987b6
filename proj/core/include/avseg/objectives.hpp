#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "avseg/config.hpp"
#include "avseg/encoders.hpp"
#include "avseg/query_decoder.hpp"
#include "avseg/tape.hpp"

namespace avseg {

// Which frames the mask losses see: S4 supervises frame 0 only, MS3 all.
inline std::vector<std::uint8_t> supervision_frame_mask(Supervision s, int t_frames) {
  std::vector<std::uint8_t> mask(t_frames, 1);
  if (s == Supervision::S4)
    for (int t = 1; t < t_frames; ++t) mask[t] = 0;
  return mask;
}

namespace detail {

template <typename T>
Var masked_frame_mean(Tape<T>& tape, const std::vector<Var>& per_frame,
                      std::span<const std::uint8_t> frame_mask) {
  Var acc{};
  int count = 0;
  for (std::size_t t = 0; t < per_frame.size(); ++t) {
    if (!frame_mask[t]) continue;
    acc = acc.valid() ? tape.add(acc, per_frame[t]) : per_frame[t];
    ++count;
  }
  if (count == 0) throw ContractError("no supervised frames selected");
  return tape.scale(acc, T(1) / T(count));
}

// Upsamples per-frame probabilities to the ground-truth resolution when the
// sizes differ.
template <typename T>
std::vector<Var> to_gt_resolution(Tape<T>& tape, const std::vector<Var>& probs, int ph, int pw,
                                  int gh, int gw) {
  if (ph == gh && pw == gw) return probs;
  auto plan = std::make_shared<const LinearMapPlan>(make_bilinear_plan(ph, pw, gh, gw));
  std::vector<Var> out;
  out.reserve(probs.size());
  for (Var p : probs) out.push_back(tape.linear_map_rows(p, plan));
  return out;
}

}  // namespace detail

// Mean binary cross-entropy over supervised-frame pixels. `pred` holds
// per-frame probabilities (ph*pw, 1); they are bilinearly upsampled to the
// ground-truth resolution first. Probabilities are clamped to
// [1e-7, 1 - 1e-7]; clamp events are counted into *clamp_count.
template <typename T>
Var bce_loss(Tape<T>& tape, const std::vector<Var>& pred, int ph, int pw,
             const std::vector<Tensor<T>>& gt, int gh, int gw,
             std::span<const std::uint8_t> frame_mask, std::int64_t* clamp_count = nullptr) {
  const auto upsampled = detail::to_gt_resolution(tape, pred, ph, pw, gh, gw);
  std::vector<Var> per_frame(upsampled.size());
  for (std::size_t t = 0; t < upsampled.size(); ++t) {
    if (!frame_mask[t]) { per_frame[t] = Var{}; continue; }
    Var p = tape.clamp(upsampled[t], T(1e-7), T(1) - T(1e-7), clamp_count);
    Var one_minus_p = tape.scale(tape.add_scalar(p, T(-1)), T(-1));
    const Tensor<T>& g = gt[t];
    Tensor<T> one_minus_g(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.numel(); ++i) one_minus_g[i] = T(1) - g[i];
    Var pos = tape.mul(tape.constant(g), tape.log(p));
    Var neg = tape.mul(tape.constant(std::move(one_minus_g)), tape.log(one_minus_p));
    per_frame[t] = tape.scale(tape.mean_all(tape.add(pos, neg)), T(-1));
  }
  return detail::masked_frame_mean(tape, per_frame, frame_mask);
}

// Soft Dice with smoothing s = 1, averaged over supervised frames:
//   1 - (2 sum(p*g) + s) / (sum p + sum g + s)
template <typename T>
Var dice_loss(Tape<T>& tape, const std::vector<Var>& pred, int ph, int pw,
              const std::vector<Tensor<T>>& gt, int gh, int gw,
              std::span<const std::uint8_t> frame_mask) {
  constexpr double kSmooth = 1.0;
  const auto upsampled = detail::to_gt_resolution(tape, pred, ph, pw, gh, gw);
  std::vector<Var> per_frame(upsampled.size());
  for (std::size_t t = 0; t < upsampled.size(); ++t) {
    if (!frame_mask[t]) { per_frame[t] = Var{}; continue; }
    Var p = upsampled[t];
    const Tensor<T>& g = gt[t];
    T gt_sum = T(0);
    for (std::size_t i = 0; i < g.numel(); ++i) gt_sum += g[i];
    Var inter = tape.sum_all(tape.mul(p, tape.constant(g)));
    Var numer = tape.add_scalar(tape.scale(inter, T(2)), T(kSmooth));
    Var denom = tape.add_scalar(tape.sum_all(p), gt_sum + T(kSmooth));
    Var ratio = tape.mul(numer, tape.reciprocal(denom));
    per_frame[t] = tape.add_scalar(tape.scale(ratio, T(-1)), T(1));
  }
  return detail::masked_frame_mean(tape, per_frame, frame_mask);
}

namespace detail {

// Cosine similarity between two (1, C) rows. Zero-norm inputs yield 0: the
// guarded denominator sqrt(|x|^2 |y|^2 + tiny) stays positive while the dot
// product vanishes.
template <typename T>
Var cosine_rows(Tape<T>& tape, Var x, Var y) {
  Var dot = tape.sum_all(tape.mul(x, y));
  Var nx = tape.sum_all(tape.mul(x, x));
  Var ny = tape.sum_all(tape.mul(y, y));
  Var denom = tape.sqrt(tape.add_scalar(tape.mul(nx, ny), T(1e-24)));
  return tape.mul(dot, tape.reciprocal(denom));
}

}  // namespace detail

// Object-level similarity alignment: for every decoder layer l,
//   Z^l_p = Avg(M^l_p * Downsample(Y^l_p)),
//   loss += sum_pq | cos(A^l_p, A^l_q) - cos(Z^l_p, Z^l_q) |.
// The mask is bilinearly resized to the layer's level resolution; gradient
// flow through the mask is blocked when mask_stop_gradient is set.
template <typename T>
Var avsim_loss(Tape<T>& tape, const std::vector<Var>& per_layer_embeddings,
               const std::vector<std::vector<Var>>& per_layer_mask_logits,
               const std::vector<int>& layer_level, const PyramidVars<T>& enhanced, int mask_h,
               int mask_w, bool mask_stop_gradient = true) {
  const std::size_t n_layers = per_layer_embeddings.size();
  if (per_layer_mask_logits.size() != n_layers || layer_level.size() != n_layers)
    throw ContractError("avsim_loss: per-layer lists must have equal length");

  Var total = tape.constant(Tensor<T>::scalar(T(0)));
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& level = enhanced.levels[layer_level[l] - 1];
    const int t_frames = int(level.frames.size());
    auto plan =
        std::make_shared<const LinearMapPlan>(make_bilinear_plan(mask_h, mask_w, level.h, level.w));

    std::vector<Var> pooled(t_frames);  // Z^l_p, each (1, C_f)
    for (int p = 0; p < t_frames; ++p) {
      Var prob = tape.sigmoid(per_layer_mask_logits[l][p]);
      Var mask = (mask_h == level.h && mask_w == level.w) ? prob
                                                          : tape.linear_map_rows(prob, plan);
      if (mask_stop_gradient) mask = tape.stop_gradient(mask);
      pooled[p] = tape.mean_rows(tape.mul_colvec(level.frames[p], mask));
    }
    std::vector<Var> queries(t_frames);
    for (int p = 0; p < t_frames; ++p)
      queries[p] = tape.slice_rows(per_layer_embeddings[l], p, 1);

    for (int p = 0; p < t_frames; ++p) {
      for (int q = 0; q < t_frames; ++q) {
        Var sim_a = detail::cosine_rows(tape, queries[p], queries[q]);
        Var sim_z = detail::cosine_rows(tape, pooled[p], pooled[q]);
        total = tape.add(total, tape.abs(tape.sub(sim_a, sim_z)));
      }
    }
  }
  return total;
}

template <typename T>
struct LossGraph {
  Var total, bce, dice, avsim;
  std::int64_t clamped = 0;
  std::vector<T> per_layer_bce, per_layer_dice;
};

// Deep-supervised objective: BCE and Dice summed over every decoder layer's
// masks, plus the similarity term, combined with the configured weights.
template <typename T>
LossGraph<T> total_loss(Tape<T>& tape, const ModelConfig& cfg, const DecoderRun<T>& run,
                        const PyramidVars<T>& enhanced, const std::vector<Tensor<T>>& gt,
                        Supervision supervision, bool avsim_mask_stop_gradient = true) {
  const auto frame_mask = supervision_frame_mask(supervision, cfg.T);
  const int mask_h = enhanced.levels[3].h, mask_w = enhanced.levels[3].w;

  LossGraph<T> out;
  Var bce_sum{}, dice_sum{};
  for (std::size_t l = 0; l < run.per_layer_mask_logits.size(); ++l) {
    std::vector<Var> probs(run.per_layer_mask_logits[l].size());
    for (std::size_t t = 0; t < probs.size(); ++t)
      probs[t] = tape.sigmoid(run.per_layer_mask_logits[l][t]);
    Var b = bce_loss(tape, probs, mask_h, mask_w, gt, cfg.image_h, cfg.image_w, frame_mask,
                     &out.clamped);
    Var d = dice_loss(tape, probs, mask_h, mask_w, gt, cfg.image_h, cfg.image_w, frame_mask);
    out.per_layer_bce.push_back(tape.value(b)[0]);
    out.per_layer_dice.push_back(tape.value(d)[0]);
    bce_sum = bce_sum.valid() ? tape.add(bce_sum, b) : b;
    dice_sum = dice_sum.valid() ? tape.add(dice_sum, d) : d;
  }
  out.bce = bce_sum;
  out.dice = dice_sum;
  out.avsim = cfg.avsim_enabled
                  ? avsim_loss(tape, run.per_layer_embeddings, run.per_layer_mask_logits,
                               run.layer_level, enhanced, mask_h, mask_w,
                               avsim_mask_stop_gradient)
                  : tape.constant(Tensor<T>::scalar(T(0)));

  Var total = tape.add(tape.scale(out.bce, T(cfg.lambda_bce)),
                       tape.scale(out.dice, T(cfg.lambda_dice)));
  out.total = tape.add(total, tape.scale(out.avsim, T(cfg.lambda_sim)));
  return out;
}

// ---- evaluation metrics (plain tensors, no differentiation) -----------------

struct MaskCounts {
  long long inter = 0, pred = 0, gt = 0;
  long long uni() const { return pred + gt - inter; }
};

inline MaskCounts count_masks(const Tensor<float>& pred_bin, const Tensor<float>& gt) {
  MaskCounts c;
  for (std::size_t i = 0; i < pred_bin.numel(); ++i) {
    const bool p = pred_bin[i] > 0.5f;
    const bool g = gt[i] > 0.5f;
    c.inter += p && g;
    c.pred += p;
    c.gt += g;
  }
  return c;
}

// Per-frame Jaccard index averaged over frames; an empty-vs-empty frame
// counts as 1.
inline double jaccard(const std::vector<Tensor<float>>& pred_bin,
                      const std::vector<Tensor<float>>& gt) {
  double sum = 0.0;
  for (std::size_t t = 0; t < pred_bin.size(); ++t) {
    const MaskCounts c = count_masks(pred_bin[t], gt[t]);
    sum += c.uni() == 0 ? 1.0 : double(c.inter) / double(c.uni());
  }
  return sum / double(pred_bin.size());
}

// Per-frame pixel F-score averaged over frames. Precision/recall terms with
// zero denominators contribute 0; an empty-vs-empty frame counts as 1.
inline double fscore(const std::vector<Tensor<float>>& pred_bin,
                     const std::vector<Tensor<float>>& gt) {
  double sum = 0.0;
  for (std::size_t t = 0; t < pred_bin.size(); ++t) {
    const MaskCounts c = count_masks(pred_bin[t], gt[t]);
    if (c.pred == 0 && c.gt == 0) {
      sum += 1.0;
      continue;
    }
    const double precision = c.pred > 0 ? double(c.inter) / double(c.pred) : 0.0;
    const double recall = c.gt > 0 ? double(c.inter) / double(c.gt) : 0.0;
    sum += (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return sum / double(pred_bin.size());
}

inline std::vector<Tensor<float>> binarize(const std::vector<Tensor<float>>& probs,
                                           float threshold = 0.5f) {
  std::vector<Tensor<float>> out;
  out.reserve(probs.size());
  for (const auto& p : probs) {
    Tensor<float> b(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.numel(); ++i) b[i] = p[i] > threshold ? 1.0f : 0.0f;
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace avseg
