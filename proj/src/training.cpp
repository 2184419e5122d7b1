#include "lfsr/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "lfsr/errors.hpp"

namespace lfsr::train {

template <typename T>
Adam<T>::Adam(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, T(0)), v_(n, T(0)) {}

template <typename T>
void Adam<T>::step(std::vector<T>& params, const std::vector<T>& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeError("adam: size mismatch");
  ++t_;
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(beta1_, static_cast<double>(t_))));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(beta2_, static_cast<double>(t_))));
  const T rate = static_cast<T>(lr), eps = static_cast<T>(eps_);
  for (std::size_t n = 0; n < params.size(); ++n) {
    m_[n] = b1 * m_[n] + (T(1) - b1) * grads[n];
    v_[n] = b2 * v_[n] + (T(1) - b2) * grads[n] * grads[n];
    params[n] -= rate * (m_[n] * c1) / (std::sqrt(v_[n] * c2) + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

template <typename T>
LossEval sr_loss(const nn::Tensor<T>& pred, std::span<const T> target, const nn::UNet<T>* segmenter,
                 std::span<const std::int32_t> truth, double lambda, nn::Tensor<T>* grad_pred) {
  if (pred.channels != 1) throw ShapeError("sr loss: prediction must have one channel");
  LossEval out;
  if (grad_pred) *grad_pred = nn::Tensor<T>(1, pred.dims);
  std::span<T> gi = grad_pred ? std::span<T>(grad_pred->data) : std::span<T>();
  out.intensity = static_cast<double>(intensity_loss<T>(pred.data, target, gi));
  out.total = out.intensity;
  if (!segmenter || lambda == 0.0) return out;

  typename nn::UNet<T>::Cache cache;
  const nn::Tensor<T> prob = segmenter->forward(pred, grad_pred ? &cache : nullptr);
  nn::Tensor<T> gprob;
  if (grad_pred) gprob = nn::Tensor<T>(prob.channels, prob.dims);
  const DiceResult d = soft_dice<T>(prob.data, truth, static_cast<std::size_t>(prob.channels),
                                    grad_pred ? std::span<T>(gprob.data) : std::span<T>());
  out.dice = d.mean;
  out.total = out.intensity - lambda * d.mean;
  if (grad_pred) {
    const T scale = static_cast<T>(-lambda);
    for (T& v : gprob.data) v *= scale;
    nn::Tensor<T> gseg;
    segmenter->backward(cache, gprob, nullptr, &gseg);
    for (std::size_t n = 0; n < gseg.data.size(); ++n) grad_pred->data[n] += gseg.data[n];
  }
  return out;
}

template LossEval sr_loss<float>(const nn::Tensor<float>&, std::span<const float>, const nn::UNet<float>*,
                                 std::span<const std::int32_t>, double, nn::Tensor<float>*);
template LossEval sr_loss<double>(const nn::Tensor<double>&, std::span<const double>, const nn::UNet<double>*,
                                  std::span<const std::int32_t>, double, nn::Tensor<double>*);

// ---------------------------------------------------------------------------

namespace {

std::vector<float> to_float(std::span<const double> v) { return std::vector<float>(v.begin(), v.end()); }

int divisor(const nn::UNetSpec& s) { return 1 << (s.levels - 1); }

}  // namespace

nn::Tensor<float> run_padded(const nn::UNet<float>& net, const nn::Tensor<float>& input) {
  const int div = divisor(net.spec());
  Index3 pd;
  for (int a = 0; a < 3; ++a) pd[a] = (input.dims[a] + div - 1) / div * div;
  if (pd == input.dims) return net.forward(input);
  nn::Tensor<float> padded(input.channels, pd);
  for (int c = 0; c < input.channels; ++c)
    for (int k = 0; k < input.dims[2]; ++k)
      for (int j = 0; j < input.dims[1]; ++j) {
        const float* src = input.channel(c) + static_cast<std::size_t>(input.dims[0]) * (j + static_cast<std::size_t>(input.dims[1]) * k);
        float* dst = padded.channel(c) + static_cast<std::size_t>(pd[0]) * (j + static_cast<std::size_t>(pd[1]) * k);
        std::copy(src, src + input.dims[0], dst);
      }
  const nn::Tensor<float> full = net.forward(padded);
  nn::Tensor<float> out(full.channels, input.dims);
  for (int c = 0; c < full.channels; ++c)
    for (int k = 0; k < input.dims[2]; ++k)
      for (int j = 0; j < input.dims[1]; ++j) {
        const float* src = full.channel(c) + static_cast<std::size_t>(pd[0]) * (j + static_cast<std::size_t>(pd[1]) * k);
        float* dst = out.channel(c) + static_cast<std::size_t>(input.dims[0]) * (j + static_cast<std::size_t>(input.dims[1]) * k);
        std::copy(src, src + input.dims[0], dst);
      }
  return out;
}

Volume infer(const nn::UNet<float>& net, const Volume& t1, const Volume& t2) {
  if (net.spec().in_channels != 2 || net.spec().out_channels != 1 || net.spec().head != nn::Head::Linear)
    throw SpecError("infer needs a two-input, one-output synthesis network");
  Volume t2_on_t1 = same_geometry(t1.grid(), t2.grid()) ? t2 : resample_trilinear(t2, t1.grid());
  if (!same_geometry(t1.grid(), t2_on_t1.grid())) throw GeometryError("T1 and T2 grids differ after resampling");
  const Volume a = min_max_normalize(t1), b = min_max_normalize(t2_on_t1);
  const auto x = nn::to_tensor<float>({&a, &b});
  return nn::channel_volume(run_padded(net, x), 0, t1.grid());
}

SoftSegmentation segment(const nn::UNet<float>& net, const LabelTable& labels, const Volume& image) {
  if (net.spec().in_channels != 1 || net.spec().head != nn::Head::Softmax ||
      static_cast<std::size_t>(net.spec().out_channels) != labels.size())
    throw SpecError("segment needs a one-input softmax network with one output per label");
  const auto out = run_padded(net, nn::to_tensor<float>({&image}));
  std::vector<double> prob(out.data.begin(), out.data.end());
  return SoftSegmentation(image.grid(), labels, std::move(prob));
}

double segmenter_dice(const nn::UNet<float>& net, const LabelTable& labels, const Volume& image,
                      const LabelVolume& truth) {
  const auto out = run_padded(net, nn::to_tensor<float>({&image}));
  const auto idx = table_indices(truth, labels);
  return soft_dice<float>(out.data, idx, labels.size()).mean;
}

SegmenterResult pretrain_segmenter(const nn::UNetSpec& spec, const gen::SampleFactory& data,
                                   const gen::SampleFactory& heldout, int heldout_count, const Schedule& sch,
                                   std::uint64_t init_seed, double dice_floor, const Progress& progress) {
  spec.validate();
  if (spec.head != nn::Head::Softmax || spec.in_channels != 1) throw SpecError("segmenter must be 1-in softmax");
  if (sch.batch_size < 1) throw ConfigError("batch size must be >= 1");
  SegmenterResult r;
  r.labels = data.pool().front().seg.table();
  if (r.labels.size() != static_cast<std::size_t>(spec.out_channels))
    throw SpecError("segmenter outputs (" + std::to_string(spec.out_channels) + ") differ from the label count (" +
                    std::to_string(r.labels.size()) + ")");
  Rng init(init_seed);
  r.net = nn::UNet<float>::build(spec, init);
  Adam<float> adam(r.net.params().size(), sch.beta1, sch.beta2, sch.epsilon);

  const std::uint64_t total = sch.iterations * static_cast<std::uint64_t>(sch.batch_size);
  gen::SampleStream stream(data, 0, total, sch.workers, 4, true);
  std::vector<float> grads;
  for (std::uint64_t it = 0; it < sch.iterations; ++it) {
    grads.assign(r.net.params().size(), 0.0f);
    double loss = 0.0;
    for (int b = 0; b < sch.batch_size; ++b) {
      auto s = stream.next();
      if (!s) throw TrainingError("sample stream ended early");
      const auto idx = table_indices(s->seg, r.labels);
      nn::UNet<float>::Cache cache;
      const auto prob = r.net.forward(nn::to_tensor<float>({&s->target}), &cache);
      nn::Tensor<float> g(prob.channels, prob.dims);
      const DiceResult d = soft_dice<float>(prob.data, idx, r.labels.size(), g.data);
      const float scale = -1.0f / static_cast<float>(sch.batch_size);
      for (float& v : g.data) v *= scale;
      r.net.backward(cache, g, &grads, nullptr);
      loss += (1.0 - d.mean) / sch.batch_size;
    }
    if (!std::isfinite(loss))
      throw TrainingError("non-finite segmenter loss at iteration " + std::to_string(it));
    adam.step(r.net.params(), grads, sch.learning_rate);
    r.loss_history.push_back(loss);
    if (progress) progress(it + 1, loss);
  }

  double sum = 0.0;
  for (int h = 0; h < heldout_count; ++h) {
    const auto s = heldout.make_spatial(static_cast<std::uint64_t>(h));
    sum += segmenter_dice(r.net, r.labels, s.target, s.seg);
  }
  r.heldout_dice = heldout_count > 0 ? sum / heldout_count : 0.0;
  r.met_floor = heldout_count > 0 && r.heldout_dice >= dice_floor;
  std::ostringstream rep;
  rep << "segmenter: " << sch.iterations << " iterations, held-out mean soft Dice " << r.heldout_dice << " over "
      << heldout_count << " samples (floor " << dice_floor << ")" << (r.met_floor ? "" : ": below floor");
  r.report = rep.str();
  return r;
}

SrState init_sr(const nn::UNetSpec& spec, std::uint64_t init_seed, const Schedule& sch) {
  spec.validate();
  if (spec.head != nn::Head::Linear || spec.out_channels != 1 || spec.in_channels != 2)
    throw SpecError("synthesis network must be 2-in, 1-out, linear head");
  SrState s;
  Rng init(init_seed);
  s.net = nn::UNet<float>::build(spec, init);
  s.optimizer = Adam<float>(s.net.params().size(), sch.beta1, sch.beta2, sch.epsilon);
  s.learning_rate = sch.learning_rate;
  return s;
}

void train_sr(SrState& st, const gen::SampleFactory& data, const nn::UNet<float>* seg, double lambda,
              const Schedule& sch, const Progress& progress, int hash_every) {
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("lambda must be finite and >= 0");
  if (!(sch.learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (sch.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (seg && (seg->spec().in_channels != 1 || seg->spec().head != nn::Head::Softmax))
    throw SpecError("segmenter must be a one-input softmax network");
  st.learning_rate = sch.learning_rate;
  const std::uint64_t seg_hash = seg ? seg->hash() : 0;
  auto check_hash = [&](std::uint64_t it) {
    if (seg && seg->hash() != seg_hash)
      throw TrainingError("frozen segmenter parameters changed by iteration " + std::to_string(it));
  };
  const LabelTable* labels = seg ? &data.pool().front().seg.table() : nullptr;
  if (labels && labels->size() != static_cast<std::size_t>(seg->spec().out_channels))
    throw SpecError("segmenter outputs differ from the label count");

  const std::uint64_t batch = static_cast<std::uint64_t>(sch.batch_size);
  gen::SampleStream stream(data, st.iteration * batch, sch.iterations * batch, sch.workers);
  std::vector<float> grads;
  for (std::uint64_t n = 0; n < sch.iterations; ++n) {
    grads.assign(st.net.params().size(), 0.0f);
    LossEval mean;
    std::uint64_t last_seed = 0;
    for (std::uint64_t b = 0; b < batch; ++b) {
      auto s = stream.next();
      if (!s) throw TrainingError("sample stream ended early");
      last_seed = s->seed;
      nn::UNet<float>::Cache cache;
      const auto pred = st.net.forward(nn::to_tensor<float>({&s->lf_t1, &s->lf_t2}), &cache);
      const auto target = to_float(s->target.data());
      std::vector<std::int32_t> idx;
      if (labels) idx = table_indices(s->seg, *labels);
      nn::Tensor<float> g;
      const LossEval e = sr_loss<float>(pred, target, seg, idx, lambda, &g);
      if (batch > 1)
        for (float& v : g.data) v /= static_cast<float>(batch);
      st.net.backward(cache, g, &grads, nullptr);
      mean.total += e.total / batch;
      mean.intensity += e.intensity / batch;
      mean.dice += e.dice / batch;
    }
    if (!std::isfinite(mean.total)) {
      double norm = 0.0;
      for (float p : st.net.params()) norm += static_cast<double>(p) * p;
      nlohmann::json snap = {{"iteration", st.iteration},
                             {"sample_seed", last_seed},
                             {"loss", std::isfinite(mean.total) ? mean.total : -1.0},
                             {"intensity_loss_finite", std::isfinite(mean.intensity)},
                             {"dice_finite", std::isfinite(mean.dice)},
                             {"parameter_norm", std::sqrt(norm)},
                             {"learning_rate", sch.learning_rate}};
      throw TrainingError("non-finite loss at iteration " + std::to_string(st.iteration), snap.dump());
    }
    st.optimizer.step(st.net.params(), grads, sch.learning_rate);
    ++st.iteration;
    st.loss_history.push_back(mean.total);
    st.intensity_history.push_back(mean.intensity);
    st.dice_history.push_back(mean.dice);
    if (hash_every > 0 && st.iteration % static_cast<std::uint64_t>(hash_every) == 0) check_hash(st.iteration);
    if (progress) progress(st.iteration, mean.total);
  }
  check_hash(st.iteration);
}

}  // namespace lfsr::train
