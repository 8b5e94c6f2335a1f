#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lsvt/augment.hpp"
#include "lsvt/manifest.hpp"
#include "lsvt/tensor.hpp"
#include "lsvt/vit.hpp"

namespace lsvt {

enum class EmaGranularity { per_epoch, per_step };

struct DistillConfig {
  double tau_t = 0.04;
  double tau_s = 0.1;
  EmaGranularity ema = EmaGranularity::per_epoch;
  double ema_lambda = 0.9;  // per-step runs conventionally use 0.996
  bool centering = true;
  double center_momentum = 0.9;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double lr_min = 0.0;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double max_grad_norm = 0.0;  // 0 disables clipping
  bool student_sees_globals = false;
  std::uint64_t seed = 0;
  std::size_t base_size = 32;  // standardization size
  ViewSpec global = ViewSpec::global_default();
  ViewSpec local = ViewSpec::local_default();
  PhotometricConfig photo;

  // 0 < tau_t <= tau_s, 0 <= lambda <= 1, center momentum in [0, 1), positive epochs/batch/lr.
  void validate() const;
};

// softmax((logits - center)/tau_t) row-wise. `center` (length K) is ignored when empty.
// The result never carries a tape.
template <typename T>
Tensor<T> teacher_probs(const Tensor<T>& logits, T tau_t, const std::vector<T>& center = {});

// log_softmax(logits/tau_s) row-wise.
template <typename T>
Tensor<T> student_log_probs(const Tensor<T>& logits, T tau_s);

// Mean over (teacher view, student view) pairs of the batch-mean cross-entropy
// -Σ_k P_t·log P_s. Pairs listed in `excluded` (teacher index, student index) are skipped.
// Teacher tensors must not require grad.
template <typename T>
Tensor<T> distill_loss(const std::vector<Tensor<T>>& teacher_probs_per_view,
                       const std::vector<Tensor<T>>& student_log_probs_per_view,
                       const std::vector<std::pair<std::size_t, std::size_t>>& excluded = {});

// p_t <- λ·p_t + (1-λ)·p_s for every parameter.
template <typename T>
void ema_update(ViTModel<T>& teacher, const ViTModel<T>& student, double lambda);

// center <- m·center + (1-m)·row-mean(logits).
template <typename T>
void update_center(std::vector<T>& center, const Tensor<T>& logits, double momentum);

// Mean Shannon entropy (nats) of the rows of a probability matrix.
template <typename T>
double mean_row_entropy(const Tensor<T>& probs);

struct LossRecord {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  bool operator==(const LossRecord&) const = default;
};

struct TrainerState {
  ViTConfig model_config;
  DistillConfig config;
  ChannelStats stats;
  ViTModel<float> student;
  ViTModel<float> teacher;
  std::vector<float> center;
  std::vector<std::vector<float>> velocity;  // SGD momentum buffers, parameter order
  std::uint64_t epoch = 0;                   // completed epochs
  std::uint64_t step = 0;                    // completed optimizer steps
  std::uint64_t steps_per_epoch = 0;
  std::vector<LossRecord> history;

  // Student initialised from derive_seed(config.seed, ...); the teacher starts as its copy.
  TrainerState(const ViTConfig& model, const DistillConfig& cfg, ChannelStats stats);
};

struct EpochStats {
  std::uint64_t epoch = 0;
  double mean_loss = 0.0;
  double teacher_entropy = 0.0;  // mean entropy of teacher rows over the epoch
  std::size_t steps = 0;
  std::size_t images = 0;
  std::size_t skipped = 0;  // undecodable files
};

struct LoadedImages {
  std::vector<Image> images;
  std::vector<std::size_t> kept;  // manifest indices that decoded
  std::size_t skipped = 0;
};

// Decodes every record and resizes/centre-crops it to base×base; undecodable files are
// skipped with a warning. Labels are not consulted.
LoadedImages load_resized(const Manifest& manifest, std::size_t base);
// Applies (v - mean)/std per channel to already-resized images.
LoadedImages standardize_all(LoadedImages loaded, const ChannelStats& stats);

// Sees the step's tape right after backward(); used to audit which leaves were recorded.
using TapeInspector = std::function<void(const Tape<float>&)>;

// One optimizer step on the given images (one batch). Returns the loss.
double train_step(TrainerState& state, const std::vector<const Image*>& batch,
                  const std::vector<std::uint64_t>& image_ids, double* teacher_entropy = nullptr,
                  const TapeInspector& inspect = {});

// One pass in a seed-determined order; per-image views use seeds derived from
// (seed, epoch, image index), so results depend only on the state and the data.
EpochStats train_epoch(TrainerState& state, const std::vector<Image>& images);

// Learning rate at a given step: cosine from lr to lr_min over epochs·steps_per_epoch.
double cosine_lr(const DistillConfig& config, std::uint64_t step, std::uint64_t total_steps);

// "LSVT", u32 version, u32-length config JSON, tensor table, trailer; little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const TrainerState& state, const std::filesystem::path& path);
TrainerState load_checkpoint(const std::filesystem::path& path);

// Teacher only, for downstream stages; cheaper than a full TrainerState.
struct TeacherBundle {
  ViTModel<float> teacher;
  ChannelStats stats;
  DistillConfig config;
};
TeacherBundle load_teacher(const std::filesystem::path& path);

void write_loss_history_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);

}  // namespace lsvt
