"""Dense tanh MLPs with manual backprop, Adam and a binary weight format.

Everything is float64.  Inputs are batches of row vectors: ``x`` has shape
``(n, in_dim)`` and outputs have shape ``(n, out_dim)``.  Gradients returned by
:func:`backward` are summed over the batch.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class WeightFileError(ValueError):
    pass


class ArchitectureError(ValueError):
    pass


class Mlp:
    """Affine layers with tanh between them.

    The head is the identity unless ``bounds`` is given.  With bounds, every
    output whose interval is finite maps through
    ``low + (tanh(z) + 1) / 2 * (high - low)``; infinite intervals stay linear.
    """

    def __init__(self, sizes: Sequence[int], bounds: tuple[Sequence[float], Sequence[float]] | None = None,
                 seed: int | None = 0, weights: list[np.ndarray] | None = None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ArchitectureError(f"bad layer sizes {self.sizes}")
        out = self.sizes[-1]
        if bounds is None:
            self.low = np.full(out, -np.inf)
            self.high = np.full(out, np.inf)
        else:
            self.low = np.asarray(bounds[0], dtype=float).reshape(out)
            self.high = np.asarray(bounds[1], dtype=float).reshape(out)
            if np.any(self.low > self.high):
                raise ArchitectureError("head bounds have low > high")
        self.squashed = np.isfinite(self.low) & np.isfinite(self.high)
        lo, hi = np.where(self.squashed, self.low, 0.0), np.where(self.squashed, self.high, 0.0)
        self._mid = (lo + hi) / 2
        self._half = np.where(self.squashed, (hi - lo) / 2, 1.0)
        if weights is not None:
            self.params = [np.array(w, dtype=float) for w in weights]
            self._check_shapes(self.params)
        else:
            rng = np.random.default_rng(seed)
            self.params = []
            for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
                limit = np.sqrt(6.0 / (fan_in + fan_out))  # Xavier-uniform
                self.params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
                self.params.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def has_head(self) -> bool:
        return bool(self.squashed.any())

    def _check_shapes(self, params):
        expect = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            expect += [(fan_in, fan_out), (fan_out,)]
        got = [p.shape for p in params]
        if got != expect:
            raise ArchitectureError(f"parameter shapes {got} do not match sizes {self.sizes}")

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, (self.low, self.high), weights=[p.copy() for p in self.params])

    def same_architecture(self, other: "Mlp") -> bool:
        return (self.sizes == other.sizes and np.array_equal(self.low, other.low)
                and np.array_equal(self.high, other.high))

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)[0]


def forward(net: Mlp, x) -> tuple[np.ndarray, list]:
    """Return outputs and the cache needed by :func:`backward`."""
    h = np.asarray(x, dtype=float)
    single = h.ndim == 1
    if single:
        h = h[None, :]
    if h.shape[1] != net.sizes[0]:
        raise ArchitectureError(f"input dim {h.shape[1]} != {net.sizes[0]}")
    acts = [h]
    p = net.params
    last = net.n_layers - 1
    for i in range(net.n_layers):
        z = h @ p[2 * i] + p[2 * i + 1]
        h = np.tanh(z) if i < last else z
        acts.append(h)
    if net.has_head:
        squashed = np.where(net.squashed, net._mid + net._half * np.tanh(h), h)
        acts.append(squashed)
        h = squashed
    return (h[0] if single else h), acts


def backward(net: Mlp, cache: list, grad_out) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse pass: parameter gradients (same order as ``net.params``) and input gradient."""
    g = np.asarray(grad_out, dtype=float)
    single = g.ndim == 1
    if single:
        g = g[None, :]
    acts = cache
    if net.has_head:
        z = acts[-2]
        t = np.tanh(z)
        g = np.where(net.squashed, g * net._half * (1.0 - t * t), g)
        acts = acts[:-1]
    grads: list[np.ndarray] = [None] * len(net.params)  # type: ignore[list-item]
    p = net.params
    for i in range(net.n_layers - 1, -1, -1):
        if i < net.n_layers - 1:
            g = g * (1.0 - acts[i + 1] ** 2)
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ p[2 * i].T
    return grads, (g[0] if single else g)


def gradient_check(net: Mlp, x, seed: int = 0, h: float = 1e-5) -> float:
    """Max relative error between :func:`backward` and central differences.

    The scalar probed is ``sum(r * net(x))`` for a random ``r``.
    """
    rng = np.random.default_rng(seed)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y, cache = forward(net, x)
    r = rng.normal(size=y.shape)
    grads, gx = backward(net, cache, r)

    def loss():
        return float(np.sum(r * forward(net, x)[0]))

    worst = 0.0
    for p, g in zip(net.params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = loss()
            flat[k] = old - h
            down = loss()
            flat[k] = old
            num = (up - down) / (2 * h)
            worst = max(worst, abs(num - gflat[k]) / max(abs(num) + abs(gflat[k]), 1e-5))
    xf = x.reshape(-1)
    gxf = gx.reshape(-1)
    for k in range(xf.size):
        old = xf[k]
        xf[k] = old + h
        up = loss()
        xf[k] = old - h
        down = loss()
        xf[k] = old
        num = (up - down) / (2 * h)
        worst = max(worst, abs(num - gxf[k]) / max(abs(num) + abs(gxf[k]), 1e-5))
    return worst


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam descent step, in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(grads) != len(params):
        raise ArchitectureError("gradient list does not match parameters")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    step = state.lr / c1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ArchitectureError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= step * m / (np.sqrt(v / c2) + state.eps)


def soft_update(target: Mlp, source: Mlp, tau: float) -> Mlp:
    """``target <- tau * source + (1 - tau) * target``, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if not target.same_architecture(source):
        raise ArchitectureError("soft_update between different architectures")
    for t, s in zip(target.params, source.params):
        t *= 1.0 - tau
        t += tau * s
    return target


# weight file: magic, version, n_sizes, head flag, sizes, [low, high], params, crc32
MAGIC = b"LTLMLP\x00\x01"
VERSION = 1
_HEADER = struct.Struct("<8sIII")


def dumps_weights(net: Mlp) -> bytes:
    head = 1 if net.has_head else 0
    parts = [_HEADER.pack(MAGIC, VERSION, len(net.sizes), head),
             np.asarray(net.sizes, dtype="<u4").tobytes()]
    if head:
        parts += [net.low.astype("<f8").tobytes(), net.high.astype("<f8").tobytes()]
    parts += [np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.params]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads_weights(data: bytes) -> Mlp:
    if len(data) < _HEADER.size + 4:
        raise WeightFileError("weight file truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    magic, version, n_sizes, head = _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise WeightFileError("not a weight file (bad magic)")
    if version != VERSION:
        raise WeightFileError(f"unsupported weight file version {version} (expected {VERSION})")
    off = _HEADER.size
    need = off + 4 * n_sizes
    if len(body) < need:
        raise WeightFileError("weight file truncated")
    sizes = np.frombuffer(body, dtype="<u4", count=n_sizes, offset=off).astype(int)
    off = need
    out = int(sizes[-1])
    n_params = sum(int(a) * int(b) + int(b) for a, b in zip(sizes[:-1], sizes[1:]))
    expected = off + 8 * (2 * out * head + n_params)
    if len(body) != expected:
        raise WeightFileError(f"weight file truncated or padded ({len(body)} bytes, expected {expected})")
    if zlib.crc32(body) != crc:
        raise WeightFileError("weight file checksum mismatch")
    bounds = None
    if head:
        low = np.frombuffer(body, dtype="<f8", count=out, offset=off)
        high = np.frombuffer(body, dtype="<f8", count=out, offset=off + 8 * out)
        bounds = (low.copy(), high.copy())
        off += 16 * out
    weights = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        a, b = int(a), int(b)
        weights.append(np.frombuffer(body, dtype="<f8", count=a * b, offset=off).reshape(a, b).copy())
        off += 8 * a * b
        weights.append(np.frombuffer(body, dtype="<f8", count=b, offset=off).copy())
        off += 8 * b
    return Mlp(sizes.tolist(), bounds, weights=weights)


def save_weights(net: Mlp, path: str | Path) -> None:
    Path(path).write_bytes(dumps_weights(net))


def load_weights(path: str | Path, into: Mlp | None = None) -> Mlp:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise WeightFileError(f"missing weight file {path}") from exc
    net = loads_weights(data)
    if into is not None:
        if not into.same_architecture(net):
            raise ArchitectureError(f"{path}: architecture {net.sizes} does not match {into.sizes}")
        for dst, src in zip(into.params, net.params):
            dst[...] = src
        return into
    return net
