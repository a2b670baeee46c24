"""Named parameter collections, initialization, and the Adam update."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ADAM_PREFIX_M = "adam.m."
ADAM_PREFIX_V = "adam.v."
STEP_TENSOR = "adam.step"


@dataclass
class ModelParams:
    """Named float64 tensors plus optional Adam moments and step count."""

    tensors: dict
    step: int = 0
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            step=self.step,
            adam_m={k: v.copy() for k, v in self.adam_m.items()},
            adam_v={k: v.copy() for k, v in self.adam_v.items()},
        )


def init_tensor(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform init on [-sqrt(1/fan_in), sqrt(1/fan_in)]."""
    bound = (1.0 / max(fan_in, 1)) ** 0.5
    return rng.uniform(-bound, bound, size=shape)


def init_params(shapes: dict, fan_ins: dict, seed: int,
                zero_names=()) -> ModelParams:
    """Initialize tensors in sorted name order for seed-stable layouts."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name in sorted(shapes):
        if name in zero_names:
            tensors[name] = np.zeros(shapes[name])
        else:
            tensors[name] = init_tensor(rng, shapes[name], fan_ins[name])
    return ModelParams(tensors=tensors)


def zero_params(shapes: dict) -> ModelParams:
    return ModelParams(tensors={k: np.zeros(v) for k, v in sorted(shapes.items())})


def adam_update(params: ModelParams, grads: dict, lr: float,
                beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> None:
    """One Adam step in place, with bias correction, over params.tensors."""
    params.step += 1
    t = params.step
    for name, tensor in params.tensors.items():
        g = grads[name]
        m = params.adam_m.get(name)
        v = params.adam_v.get(name)
        if m is None:
            m = np.zeros_like(tensor)
            v = np.zeros_like(tensor)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        params.adam_m[name] = m
        params.adam_v[name] = v
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        tensor -= lr * m_hat / (np.sqrt(v_hat) + eps)


def pack_state_tensors(params: ModelParams) -> dict:
    """Flatten parameters and optimizer state into one name->tensor dict."""
    out = dict(params.tensors)
    for name, m in params.adam_m.items():
        out[ADAM_PREFIX_M + name] = m
    for name, v in params.adam_v.items():
        out[ADAM_PREFIX_V + name] = v
    out[STEP_TENSOR] = np.array([float(params.step)])
    return out


def validate_state_shapes(path, params: "ModelParams", shapes: dict,
                          error_cls: type) -> None:
    """Check a loaded parameter set against the shapes a config implies."""
    missing = set(shapes) - set(params.tensors)
    extra = set(params.tensors) - set(shapes)
    if missing or extra:
        raise error_cls(
            f"{path}: tensor names disagree with config "
            f"(missing {sorted(missing)}, unexpected {sorted(extra)})")
    for name, shape in shapes.items():
        if params.tensors[name].shape != tuple(shape):
            raise error_cls(
                f"{path}: tensor {name!r} has shape {params.tensors[name].shape}, "
                f"config implies {tuple(shape)}")
    for state in (params.adam_m, params.adam_v):
        for name, value in state.items():
            if name not in shapes:
                raise error_cls(f"{path}: optimizer state for unknown "
                                f"tensor {name!r}")
            if value.shape != tuple(shapes[name]):
                raise error_cls(f"{path}: optimizer state shape mismatch "
                                f"for {name!r}")


def unpack_state_tensors(tensors: dict) -> ModelParams:
    """Inverse of pack_state_tensors; unknown names stay in tensors."""
    params = ModelParams(tensors={})
    for name, value in tensors.items():
        if name == STEP_TENSOR:
            params.step = int(round(float(value.reshape(-1)[0])))
        elif name.startswith(ADAM_PREFIX_M):
            params.adam_m[name[len(ADAM_PREFIX_M):]] = value
        elif name.startswith(ADAM_PREFIX_V):
            params.adam_v[name[len(ADAM_PREFIX_V):]] = value
        else:
            params.tensors[name] = value
    return params
