"""Named parameter arrays with freeze flags, optimizer state, and checkpoints."""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor, leaf
from .rng import RngStream

CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ParameterSet:
    """A flat collection of dense arrays addressed by name.

    Shapes are fixed at registration; a frozen array is never touched by
    `optimizer_step`, whatever gradients are supplied.
    """

    def __init__(self):
        self.arrays: dict[str, np.ndarray] = {}
        self.frozen: dict[str, bool] = {}
        self.opt_state: dict[str, dict] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.arrays:
            raise ValueError(f"duplicate parameter {name!r}")
        self.arrays[name] = np.asarray(value, dtype=np.float64)
        self.frozen[name] = False
        self.opt_state[name] = {"m": np.zeros_like(self.arrays[name]),
                                "v": np.zeros_like(self.arrays[name]),
                                "t": 0}

    def add_affine(self, name: str, fan_in: int, fan_out: int, rng: RngStream) -> None:
        """Weight uniform in [-a, a] with a = sqrt(6/(fan_in+fan_out)); zero bias."""
        a = np.sqrt(6.0 / (fan_in + fan_out))
        self.add(name + ".w", rng.uniform(-a, a, (fan_in, fan_out)))
        self.add(name + ".b", np.zeros((1, fan_out)))

    def add_embedding(self, name: str, vocab: int, dim: int, rng: RngStream) -> None:
        a = np.sqrt(6.0 / (vocab + dim))
        self.add(name, rng.uniform(-a, a, (vocab, dim)))

    def set_frozen(self, frozen: bool, prefix: str = "") -> None:
        for name in self.arrays:
            if name.startswith(prefix):
                self.frozen[name] = frozen

    def leaves(self) -> dict[str, Tensor]:
        """Fresh tape leaves for one forward/backward pass."""
        return {name: leaf(arr) for name, arr in self.arrays.items()}

    def leaves_const(self) -> dict[str, Tensor]:
        """Gradient-free tensors for evaluation forwards."""
        return {name: Tensor(arr) for name, arr in self.arrays.items()}

    def copy(self) -> "ParameterSet":
        out = ParameterSet()
        out.arrays = {k: v.copy() for k, v in self.arrays.items()}
        out.frozen = dict(self.frozen)
        out.opt_state = {k: {"m": s["m"].copy(), "v": s["v"].copy(), "t": s["t"]}
                         for k, s in self.opt_state.items()}
        return out

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays.values())


def optimizer_step(params: ParameterSet, grads: dict[str, np.ndarray],
                   learning_rate: float, rule: str = "adam") -> None:
    """Apply one SGD or Adam update in place; frozen arrays are skipped."""
    for name, arr in params.arrays.items():
        if params.frozen[name]:
            continue
        if name not in grads or grads[name] is None:
            raise KeyError(f"missing gradient for unfrozen parameter {name!r}")
        g = grads[name]
        if rule == "sgd":
            arr -= learning_rate * g
        elif rule == "adam":
            st = params.opt_state[name]
            st["t"] += 1
            st["m"] = ADAM_BETA1 * st["m"] + (1 - ADAM_BETA1) * g
            st["v"] = ADAM_BETA2 * st["v"] + (1 - ADAM_BETA2) * g * g
            m_hat = st["m"] / (1 - ADAM_BETA1 ** st["t"])
            v_hat = st["v"] / (1 - ADAM_BETA2 ** st["t"])
            arr -= learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        else:
            raise ValueError(f"unknown optimizer rule {rule!r}")


def collect_grads(leaves: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in leaves.items()}


# -- checkpoint container ----------------------------------------------------
# JSON file: {"version": 1, "arrays": {name: {"shape": [...], "data": b64 of
# row-major float64 bytes}}, "frozen": {...}, "opt_state": {...}, "extra": {...}}


def _enc(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape),
            "data": base64.b64encode(np.ascontiguousarray(arr, dtype=np.float64).tobytes()).decode()}


def _dec(obj: dict) -> np.ndarray:
    return np.frombuffer(base64.b64decode(obj["data"]), dtype=np.float64).reshape(obj["shape"]).copy()


def save_checkpoint(path: str | Path, params: ParameterSet, extra: dict | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "arrays": {k: _enc(v) for k, v in params.arrays.items()},
        "frozen": params.frozen,
        "opt_state": {k: {"m": _enc(s["m"]), "v": _enc(s["v"]), "t": s["t"]}
                      for k, s in params.opt_state.items()},
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> tuple[ParameterSet, dict]:
    doc = json.loads(Path(path).read_text())
    if doc["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc['version']}")
    params = ParameterSet()
    for name, obj in doc["arrays"].items():
        params.add(name, _dec(obj))
    for name, flag in doc["frozen"].items():
        params.frozen[name] = bool(flag)
    for name, st in doc["opt_state"].items():
        params.opt_state[name] = {"m": _dec(st["m"]), "v": _dec(st["v"]), "t": st["t"]}
    return params, doc["extra"]
