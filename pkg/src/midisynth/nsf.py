"""Source-filter waveform model conditioned on frame-rate features.

The excitation signal (sine mixture or noise) passes through a stack of
residual blocks.  Each block projects the running signal to the working
channel width, adds the upsampled condition, refines it with dilated
causal convolutions (dilation 2^j, tanh residuals), and projects back to
one channel which is added to the running signal.  Output is clipped to
[-1, 1].  With all parameters zero the model is the identity on its
excitation, which anchors several tests.

All shapes are (time, channels) with time = n_frames * upsample_factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .dsp import FeatureMatrix, WaveSignal, mr_stft_loss
from .errors import CorruptCheckpoint, DimensionMismatch, LengthMismatch, \
    SampleRateMismatch
from .formats import read_container, write_container
from .params import ModelParams, adam_update, init_params, pack_state_tensors, \
    unpack_state_tensors, validate_state_shapes, zero_params

NSF_MAGIC = b"NSF1"
CONDITION_KINDS = ("mel-fb", "midi-fb", "piano-roll")


@dataclass(frozen=True)
class NsfConfig:
    feature_dim: int
    upsample_factor: int = 288
    n_blocks: int = 2
    convs_per_block: int = 5
    channels: int = 16
    kernel: int = 3

    def __post_init__(self):
        fields = (self.feature_dim, self.upsample_factor, self.n_blocks,
                  self.convs_per_block, self.channels, self.kernel)
        if any(int(f) != f or f <= 0 for f in fields):
            raise ValueError("all config fields must be positive integers")

    def to_fields(self):
        return (self.feature_dim, self.upsample_factor, self.n_blocks,
                self.convs_per_block, self.channels, self.kernel)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 5
    segment_seconds: float = 3.0
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size, epochs must be positive")


def nsf_param_shapes(cfg: NsfConfig) -> dict:
    shapes = {"cond.weight": (cfg.feature_dim, cfg.channels),
              "cond.bias": (cfg.channels,)}
    for b in range(cfg.n_blocks):
        shapes[f"block{b}.in.weight"] = (1, cfg.channels)
        shapes[f"block{b}.in.bias"] = (cfg.channels,)
        for j in range(cfg.convs_per_block):
            shapes[f"block{b}.conv{j}.weight"] = (cfg.kernel, cfg.channels,
                                                  cfg.channels)
            shapes[f"block{b}.conv{j}.bias"] = (cfg.channels,)
        shapes[f"block{b}.out.weight"] = (cfg.channels, 1)
        shapes[f"block{b}.out.bias"] = (1,)
    return shapes


def _fan_ins(cfg: NsfConfig) -> dict:
    return {name: _fan_of(name, cfg) for name in nsf_param_shapes(cfg)}


def _fan_of(name, cfg):
    if name.startswith("cond."):
        return cfg.feature_dim
    if ".in." in name:
        return 1
    if ".conv" in name:
        return cfg.kernel * cfg.channels
    return cfg.channels  # out projections


def nsf_init(cfg: NsfConfig, seed: int = 0) -> ModelParams:
    """Random init; output projections start at zero so the initial model
    passes its excitation through unchanged."""
    shapes = nsf_param_shapes(cfg)
    zero_names = {n for n in shapes if ".out." in n}
    return init_params(shapes, _fan_ins(cfg), seed, zero_names=zero_names)


def nsf_zero(cfg: NsfConfig) -> ModelParams:
    return zero_params(nsf_param_shapes(cfg))


# --- forward graph -----------------------------------------------------------


def _check_inputs(params, features, excitation, cfg):
    if features.dim != cfg.feature_dim:
        raise DimensionMismatch(
            f"features have {features.dim} dims, model wants {cfg.feature_dim}")
    if features.kind not in CONDITION_KINDS:
        raise ValueError(f"cannot condition on features of kind {features.kind!r}")
    expected = features.n_frames * cfg.upsample_factor
    if len(excitation) != expected:
        raise LengthMismatch(
            f"excitation has {len(excitation)} samples, need n_frames * "
            f"upsample_factor = {expected}")
    if excitation.sample_rate != features.sample_rate:
        raise SampleRateMismatch(
            f"excitation at {excitation.sample_rate} Hz, features at "
            f"{features.sample_rate} Hz")
    missing = set(nsf_param_shapes(cfg)) - set(params.tensors)
    if missing:
        raise ValueError(f"params missing tensors: {sorted(missing)}")


def _build_graph(tensors, feat_values, exc_values, cfg):
    t_total = feat_values.shape[0] * cfg.upsample_factor
    frame_cond = ag.add(ag.matmul(ag.Tensor(feat_values), tensors["cond.weight"]),
                        tensors["cond.bias"])
    cond = ag.upsample_linear(frame_cond, t_total)
    x = ag.Tensor(exc_values[:, None])
    for b in range(cfg.n_blocks):
        h = ag.add(ag.add(ag.matmul(x, tensors[f"block{b}.in.weight"]),
                          tensors[f"block{b}.in.bias"]), cond)
        for j in range(cfg.convs_per_block):
            conv = ag.conv1d(h, tensors[f"block{b}.conv{j}.weight"],
                             tensors[f"block{b}.conv{j}.bias"],
                             dilation=2 ** j, causal=True)
            h = ag.add(h, ag.tanh(conv))
        x = ag.add(x, ag.add(ag.matmul(h, tensors[f"block{b}.out.weight"]),
                             tensors[f"block{b}.out.bias"]))
    return ag.hard_clip(x, -1.0, 1.0)


def condition_upsample(params: ModelParams, features: FeatureMatrix,
                       cfg: NsfConfig) -> np.ndarray:
    """Frame features through the condition affine, stretched to sample rate.

    Returns a (n_frames * upsample_factor, channels) array; sample t
    interpolates frames at position t * (N - 1) / (T - 1) with endpoints
    held.
    """
    if features.dim != cfg.feature_dim:
        raise DimensionMismatch(
            f"features have {features.dim} dims, model wants {cfg.feature_dim}")
    if features.n_frames == 0:
        return np.zeros((0, cfg.channels))
    with ag.no_grad():
        frame = ag.add(ag.matmul(ag.Tensor(features.values),
                                 ag.Tensor(params.tensors["cond.weight"])),
                       ag.Tensor(params.tensors["cond.bias"]))
        out = ag.upsample_linear(frame, features.n_frames * cfg.upsample_factor)
    return out.value


def nsf_forward(params: ModelParams, features: FeatureMatrix,
                excitation: WaveSignal, cfg: NsfConfig) -> WaveSignal:
    """Synthesize a waveform; length is exactly n_frames * upsample_factor."""
    _check_inputs(params, features, excitation, cfg)
    if features.n_frames == 0:
        return WaveSignal(np.zeros(0), excitation.sample_rate)
    with ag.no_grad():
        tensors = {k: ag.Tensor(v) for k, v in params.tensors.items()}
        out = _build_graph(tensors, features.values, excitation.samples, cfg)
    return WaveSignal(out.value[:, 0], excitation.sample_rate)


def nsf_backward(params: ModelParams, features: FeatureMatrix,
                 excitation: WaveSignal, target: WaveSignal,
                 cfg: NsfConfig, resolutions=None):
    """Loss and parameter gradients for one aligned example.

    The spectral loss gradient with respect to the predicted samples is
    computed in closed form and pushed through the recorded graph.
    Returns (loss, dict of gradients matching params.tensors).
    """
    _check_inputs(params, features, excitation, cfg)
    if len(target) != len(excitation):
        raise LengthMismatch(
            f"target has {len(target)} samples, excitation {len(excitation)}")
    if target.sample_rate != excitation.sample_rate:
        raise SampleRateMismatch(
            f"target at {target.sample_rate} Hz, excitation at "
            f"{excitation.sample_rate} Hz")
    tensors = {k: ag.Tensor(v) for k, v in params.tensors.items()}
    out = _build_graph(tensors, features.values, excitation.samples, cfg)
    pred = WaveSignal(out.value[:, 0], excitation.sample_rate)
    loss, grad_pred = mr_stft_loss(pred, target, resolutions)
    ag.backward(out, seed=grad_pred[:, None])
    grads = {name: (t.grad if t.grad is not None else np.zeros_like(t.value))
             for name, t in tensors.items()}
    return loss, grads


def nsf_train(params: ModelParams, dataset, train_cfg: TrainConfig,
              cfg: NsfConfig, resolutions=None, on_epoch_end=None):
    """Adam training over (features, excitation, target) triples.

    Items are visited in a seeded shuffle each epoch; batch gradients are
    averaged.  Returns (updated params copy, [(step, batch loss), ...]).
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("training dataset is empty")
    params = params.copy()
    rng = np.random.default_rng(train_cfg.seed)
    history = []
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(dataset))
        for lo in range(0, len(order), train_cfg.batch_size):
            batch = order[lo : lo + train_cfg.batch_size]
            total = {name: np.zeros_like(v) for name, v in params.tensors.items()}
            loss_sum = 0.0
            for idx in batch:
                features, excitation, target = dataset[idx]
                loss, grads = nsf_backward(params, features, excitation,
                                           target, cfg, resolutions)
                loss_sum += loss
                for name in total:
                    total[name] += grads[name]
            n = len(batch)
            adam_update(params, {k: v / n for k, v in total.items()},
                        train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2)
            history.append((params.step, loss_sum / n))
        if on_epoch_end is not None:
            on_epoch_end(epoch, params)
    return params, history


# --- checkpoints -------------------------------------------------------------


def save_checkpoint(path, params: ModelParams, cfg: NsfConfig) -> None:
    write_container(path, NSF_MAGIC, cfg.to_fields(), pack_state_tensors(params))


def load_checkpoint(path, expected_cfg: NsfConfig | None = None):
    """Read a checkpoint, returning (params, config).

    The tensor table must match the config's shapes exactly; a checkpoint
    whose stored config disagrees with expected_cfg is rejected.
    """
    fields, tensors = read_container(path, NSF_MAGIC, 6)
    cfg = NsfConfig(*(int(f) for f in fields))
    if expected_cfg is not None and cfg != expected_cfg:
        raise CorruptCheckpoint(
            f"{path}: checkpoint config {cfg} does not match expected {expected_cfg}")
    params = unpack_state_tensors(tensors)
    validate_state_shapes(path, params, nsf_param_shapes(cfg), CorruptCheckpoint)
    return params, cfg
