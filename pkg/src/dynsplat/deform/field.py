"""Time-conditioned rigid-transform field over control points.

A small ReLU MLP maps (encoded position, encoded time) to 7 numbers: a raw
quaternion increment and a translation. The quaternion head outputs
identity + raw, normalized, and the final layer starts at zero so a fresh
field is exactly the identity motion. Forward and reverse passes are
written out by hand; parameters live in one flat vector so the optimizer
and serializer can treat the field opaquely.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..core import quaternion as quat
from ..errors import InvalidInputError


def encode(x: np.ndarray, n_freq: int) -> np.ndarray:
    """Positional encoding: raw value plus sin/cos at octave frequencies.

    x: (..., d) -> (..., d * (1 + 2 n_freq)), layout [x, sin f0 x, cos f0 x,
    sin f1 x, ...] per input dimension.
    """
    parts = [x]
    for k in range(n_freq):
        f = (2.0**k) * np.pi
        parts.append(np.sin(f * x))
        parts.append(np.cos(f * x))
    return np.concatenate(parts, axis=-1)


def encode_backward(x: np.ndarray, n_freq: int, grad: np.ndarray) -> np.ndarray:
    """Pull a gradient on encode(x) back to x."""
    d = x.shape[-1]
    out = grad[..., :d].copy()
    for k in range(n_freq):
        f = (2.0**k) * np.pi
        g_sin = grad[..., d * (1 + 2 * k) : d * (2 + 2 * k)]
        g_cos = grad[..., d * (2 + 2 * k) : d * (3 + 2 * k)]
        out += f * np.cos(f * x) * g_sin - f * np.sin(f * x) * g_cos
    return out


@dataclass
class DeformationField:
    """MLP-backed motion field with its encoding and normalization state.

    `params` is the flat parameter vector (all layer weights and biases
    concatenated). `center`/`scale` map world positions into [-1, 1]^3
    before encoding.
    """

    params: np.ndarray
    l_x: int = 6
    l_t: int = 6
    width: int = 128
    depth: int = 6
    center: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float).reshape(-1)
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        expected = sum(w * h + h for w, h in zip(self._dims[:-1], self._dims[1:]))
        if self.params.size != expected:
            raise ValueError(
                f"parameter vector has {self.params.size} entries, expected {expected}"
            )

    @property
    def _dims(self):
        in_dim = 3 * (1 + 2 * self.l_x) + (1 + 2 * self.l_t)
        return [in_dim] + [self.width] * self.depth + [7]

    @classmethod
    def create(cls, seed: int = 0, center=(0.0, 0.0, 0.0), scale: float = 1.0,
               l_x: int = 6, l_t: int = 6, width: int = 128, depth: int = 6):
        """He-initialized hidden layers, zero final layer (identity motion)."""
        rng = np.random.default_rng(seed)
        in_dim = 3 * (1 + 2 * l_x) + (1 + 2 * l_t)
        dims = [in_dim] + [width] * depth + [7]
        chunks = []
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            if i == len(dims) - 2:
                w = np.zeros((d_out, d_in))
            else:
                w = rng.normal(scale=np.sqrt(2.0 / d_in), size=(d_out, d_in))
            chunks.append(w.reshape(-1))
            chunks.append(np.zeros(d_out))
        return cls(params=np.concatenate(chunks), l_x=l_x, l_t=l_t,
                   width=width, depth=depth,
                   center=np.asarray(center, dtype=float), scale=float(scale))

    def _layers(self, params=None):
        params = self.params if params is None else params
        dims = self._dims
        layers = []
        off = 0
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            w = params[off : off + d_in * d_out].reshape(d_out, d_in)
            off += d_in * d_out
            b = params[off : off + d_out]
            off += d_out
            layers.append((w, b))
        return layers

    def forward(self, ps: np.ndarray, ts: np.ndarray):
        """Raw 7-vector head outputs for positions ps (N, 3), times ts (N,).

        Returns (raw, cache); cache feeds `backward`.
        """
        ps = np.atleast_2d(np.asarray(ps, dtype=float))
        ts = np.broadcast_to(np.asarray(ts, dtype=float).reshape(-1, 1) if np.ndim(ts)
                             else np.full((ps.shape[0], 1), float(ts)),
                             (ps.shape[0], 1))
        p_norm = (ps - self.center) / self.scale
        x = np.concatenate([encode(p_norm, self.l_x), encode(ts, self.l_t)], axis=-1)
        layers = self._layers()
        h = x
        pre = []
        acts = [x]
        for w, b in layers[:-1]:
            z = h @ w.T + b
            pre.append(z)
            h = np.maximum(z, 0.0)
            acts.append(h)
        w, b = layers[-1]
        raw = h @ w.T + b
        cache = {"p_norm": p_norm, "ts": ts, "pre": pre, "acts": acts}
        return raw, cache

    def backward(self, cache: dict, grad_raw: np.ndarray):
        """Gradients of a scalar loss through `forward`.

        Returns (grad_params flat, grad_ps (N, 3)); time is treated as data.
        """
        layers = self._layers()
        grads = [None] * len(layers)
        w_f, _ = layers[-1]
        h_last = cache["acts"][-1]
        grads[-1] = (grad_raw.T @ h_last, grad_raw.sum(axis=0))
        d_h = grad_raw @ w_f
        for i in range(len(layers) - 2, -1, -1):
            d_z = d_h * (cache["pre"][i] > 0.0)
            w_i, _ = layers[i]
            grads[i] = (d_z.T @ cache["acts"][i], d_z.sum(axis=0))
            d_h = d_z @ w_i
        d_x = d_h
        d_enc_p = d_x[:, : 3 * (1 + 2 * self.l_x)]
        d_p_norm = encode_backward(cache["p_norm"], self.l_x, d_enc_p)
        grad_ps = d_p_norm / self.scale
        flat = np.concatenate([np.concatenate([gw.reshape(-1), gb]) for gw, gb in grads])
        return flat, grad_ps

    def query(self, ps: np.ndarray, t: float):
        """Unit quaternions and translations at positions ps and time t.

        Returns (r (N, 4) unit, trans (N, 3), cache). The quaternion head is
        identity + raw, normalized, so a zero head yields the identity.
        """
        if not 0.0 <= float(t) <= 1.0:
            raise InvalidInputError("query time must lie in [0, 1]")
        raw, cache = self.forward(ps, t)
        q_raw = raw[:, :4] + np.array([1.0, 0.0, 0.0, 0.0])
        r = q_raw / np.linalg.norm(q_raw, axis=-1, keepdims=True)
        cache["q_raw"] = q_raw
        return r, raw[:, 4:7].copy(), cache

    def query_backward(self, cache: dict, grad_r: np.ndarray, grad_trans: np.ndarray):
        """Gradients through `query`: returns (grad_params, grad_ps)."""
        grad_raw = np.empty((grad_r.shape[0], 7))
        grad_raw[:, :4] = quat.normalize_backward(cache["q_raw"], grad_r)
        grad_raw[:, 4:7] = grad_trans
        return self.backward(cache, grad_raw)


@dataclass
class NodeTransform:
    """Unit-quaternion rotation and translation of one control point."""

    r: np.ndarray  # (4,) unit quaternion
    t: np.ndarray  # (3,) translation, world units


def field_query(field: DeformationField, p, t: float) -> NodeTransform:
    """Single-point query of the motion field."""
    r, trans, _ = field.query(np.asarray(p, dtype=float).reshape(1, 3), float(t))
    return NodeTransform(r=r[0], t=trans[0])
