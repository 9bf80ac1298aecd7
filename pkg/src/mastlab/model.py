"""Encoder, Gaussian projector with generalized-mean pooled heads, and the
learnable nonnegative mask bank that induces per-augmentation subspaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError

SIGMA_FLOOR = 1e-6  # keeps every covariance entry strictly positive
GEM_INPUT_FLOOR = 1e-6  # pow/log need a strictly positive base


def _he_normal(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Conv:
    def __init__(self, rng, c_in, c_out, k=3, stride=2):
        self.stride = stride
        self.w = Tensor(_he_normal(rng, (c_out, c_in, k, k), c_in * k * k), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)

    def __call__(self, x):
        return ad.conv2d(x, self.w, self.b, stride=self.stride)


class Linear:
    def __init__(self, rng, n_in, n_out):
        self.w = Tensor(_he_normal(rng, (n_in, n_out), n_in), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x):
        return ad.add(ad.matmul(x, self.w), ad.expand_rows(self.b, x.shape[0]))


class Encoder:
    """Three stride-2 valid convolutions with ReLU; the representation is the
    spatial average of the last feature map and is all that downstream probes
    ever see."""

    def __init__(self, rng, channels=(16, 32, 64)):
        c_prev = 3
        self.convs = []
        for c in channels:
            self.convs.append(Conv(rng, c_prev, c))
            c_prev = c
        self.out_channels = c_prev

    def min_extent(self) -> int:
        n = 1
        for _ in self.convs:
            n = (n - 1) * 2 + 3
        return n

    def __call__(self, x: Tensor):
        if x.ndim != 4:
            raise DimensionError(f"encoder expects (n,3,h,w), got {x.shape}")
        need = self.min_extent()
        if x.shape[2] < need or x.shape[3] < need:
            raise DimensionError(
                f"image extents {x.shape[2]}x{x.shape[3]} too small for "
                f"{len(self.convs)} stride-2 convolutions (need >= {need})"
            )
        h = x
        for conv in self.convs:
            h = ad.relu(conv(h))
        y = ad.mean(h, axis=(2, 3))
        return h, y

    def params(self, prefix="encoder"):
        out = {}
        for i, conv in enumerate(self.convs, start=1):
            out[f"{prefix}.conv{i}.w"] = conv.w
            out[f"{prefix}.conv{i}.b"] = conv.b
        return out


class GeMPool:
    """Generalized-mean pooling (mean of x**p)**(1/p) with a learnable
    exponent; p=1 is average pooling, large p approaches max pooling."""

    def __init__(self, init_p=3.0):
        self.p = Tensor(float(init_p), requires_grad=True)

    def __call__(self, spatial: Tensor) -> Tensor:
        x = ad.maximum(spatial, GEM_INPUT_FLOOR)
        pooled = ad.mean(ad.power(x, self.p), axis=(2, 3))
        return ad.power(pooled, ad.div(Tensor(1.0), self.p))


class GaussianProjector:
    """Maps the encoder's spatial map to a diagonal Gaussian (mu, sigma^2).

    Each head pools the spatial map with its own learnable exponent; both
    pooled vectors pass through a shared two-layer ReLU trunk, then separate
    linears produce the mean and the (ReLU + floor) positive variance.
    """

    def __init__(self, rng, in_channels, hidden=256, d=128):
        self.d = d
        self.gem_mu = GeMPool()
        self.gem_sigma = GeMPool()
        self.fc1 = Linear(rng, in_channels, hidden)
        self.fc2 = Linear(rng, hidden, hidden)
        self.head_mu = Linear(rng, hidden, d)
        self.head_sigma = Linear(rng, hidden, d)

    def _trunk(self, v: Tensor) -> Tensor:
        return ad.relu(self.fc2(ad.relu(self.fc1(v))))

    def __call__(self, spatial: Tensor):
        mu = self.head_mu(self._trunk(self.gem_mu(spatial)))
        raw = self.head_sigma(self._trunk(self.gem_sigma(spatial)))
        sigma2 = ad.add(ad.relu(raw), Tensor(SIGMA_FLOOR))
        return mu, sigma2

    def params(self, prefix="projector"):
        return {
            f"{prefix}.p_mu": self.gem_mu.p,
            f"{prefix}.p_sigma": self.gem_sigma.p,
            f"{prefix}.fc1.w": self.fc1.w,
            f"{prefix}.fc1.b": self.fc1.b,
            f"{prefix}.fc2.w": self.fc2.w,
            f"{prefix}.fc2.b": self.fc2.b,
            f"{prefix}.head_mu.w": self.head_mu.w,
            f"{prefix}.head_mu.b": self.head_mu.b,
            f"{prefix}.head_sigma.w": self.head_sigma.w,
            f"{prefix}.head_sigma.b": self.head_sigma.b,
        }


@dataclass
class GaussianBatch:
    """A batch of diagonal Gaussian embeddings."""

    mu: Tensor
    sigma2: Tensor


def init_mask_matrix(rng: np.random.Generator, d: int, K: int) -> np.ndarray:
    """Pre-activation mask init: every entry gets N(0.2, 0.01) noise, and
    column k's designated block of floor(d/K) rows additionally follows a
    N(1.0, 0.1^2) prior so each subspace starts near a handcrafted block."""
    if K > d:
        raise ContractError(f"need at least one dimension per mask, got d={d}, K={K}")
    u = rng.normal(0.2, 0.1, size=(d, K))
    block = d // K
    for k in range(K):
        u[k * block : (k + 1) * block, k] += rng.normal(1.0, 0.1, size=block)
    return u


class MaskBank:
    """d x K nonnegative masks, parameterized as max(0, U); column k is
    permanently tied to augmentation operator op_ids[k]."""

    def __init__(self, rng, d: int, op_ids: list[str]):
        self.op_ids = list(op_ids)
        self.d = d
        self.U = Tensor(init_mask_matrix(rng, d, len(op_ids)), requires_grad=True)

    @property
    def K(self) -> int:
        return len(self.op_ids)

    def masks(self) -> Tensor:
        return ad.relu(self.U)

    def column_index(self, op_id: str) -> int:
        try:
            return self.op_ids.index(op_id)
        except ValueError:
            raise ContractError(f"operator {op_id!r} has no mask column") from None

    def mask_embed(self, emb: GaussianBatch, k: int) -> GaussianBatch:
        if not 0 <= k < self.K:
            raise ContractError(f"mask column {k} out of range [0, {self.K})")
        col = ad.column(self.masks(), k)
        n = emb.mu.shape[0]
        m = ad.expand_rows(col, n)
        return GaussianBatch(mu=ad.mul(emb.mu, m), sigma2=ad.mul(emb.sigma2, m))

    def params(self, prefix="masks"):
        return {f"{prefix}.U": self.U}


class MastModel:
    """Encoder + projector (+ mask bank unless running the unfactorized
    baseline).  Weight decay skips U and the pooling exponents; the exponents
    are projected back to >= 1 after every update."""

    def __init__(self, rng, d=128, hidden=256, channels=(16, 32, 64), op_ids=None):
        self.encoder = Encoder(rng, channels)
        self.projector = GaussianProjector(rng, self.encoder.out_channels, hidden, d)
        self.bank = MaskBank(rng, d, op_ids) if op_ids else None
        self.d = d

    def forward(self, images: Tensor):
        spatial, y = self.encoder(images)
        mu, sigma2 = self.projector(spatial)
        return spatial, y, GaussianBatch(mu=mu, sigma2=sigma2)

    def representation(self, images: Tensor) -> Tensor:
        _, y = self.encoder(images)
        return y

    def params(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.encoder.params())
        out.update(self.projector.params())
        if self.bank is not None:
            out.update(self.bank.params())
        return out

    def no_decay_names(self):
        names = {"projector.p_mu", "projector.p_sigma"}
        if self.bank is not None:
            names.add("masks.U")
        return names

    def min_constraints(self):
        return {"projector.p_mu": 1.0, "projector.p_sigma": 1.0}

    def zero_grad(self):
        for p in self.params().values():
            p.zero_grad()
