"""Synthetic point clouds used as stand-in data sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import PointCloud, Sphere
from .samplers import child_rng

KINDS = ("grid", "gaussian-blobs", "circle-samples", "sphere-samples", "two-clusters")


@dataclass(frozen=True)
class DatasetGenSpec:
    kind: str
    n: int
    m: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; choose from {KINDS}")
        if self.n < 1 or self.m < 1:
            raise ValueError("need n >= 1 and m >= 1")


def generate(spec: DatasetGenSpec) -> PointCloud:
    n, m, p = spec.n, spec.m, spec.params
    rng = child_rng(spec.seed)
    if spec.kind == "grid":
        side = round(m ** (1.0 / n))
        if side ** n != m:
            raise ValueError(f"grid needs m to be a perfect n-th power, got m={m}, n={n}")
        spacing = float(p.get("spacing", 1.0))
        axes = [np.arange(side) * spacing] * n
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    elif spec.kind == "circle-samples":
        r = float(p.get("radius", 1.0))
        theta = rng.uniform(0.0, 2.0 * np.pi, m)
        pts = np.zeros((m, n))
        pts[:, 0] = r * np.cos(theta)
        pts[:, 1] = r * np.sin(theta)
    elif spec.kind == "sphere-samples":
        d = int(p.get("d", n - 1))
        S = Sphere.coordinate(n, d, float(p.get("radius", 1.0)))
        pts = S.sample(m, rng)
    elif spec.kind == "gaussian-blobs":
        k = int(p.get("centers", 4))
        spread = float(p.get("spread", 0.1))
        c = rng.standard_normal((k, n))
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        c *= float(p.get("scale", 1.0))
        pts = c[np.arange(m) % k] + spread * rng.standard_normal((m, n))
    else:  # two-clusters
        sep = float(p.get("separation", 2.0))
        spread = float(p.get("spread", 0.1))
        pts = spread * rng.standard_normal((m, n))
        pts[: m // 2, 0] -= sep / 2
        pts[m // 2 :, 0] += sep / 2
    return PointCloud(pts)
