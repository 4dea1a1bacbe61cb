"""Reproducible Brownian increments.

A replica's noise is drawn from its own Philox stream (see
``core.seeding``), chunk by chunk. Each step carries ``m + 1`` channels per
coordinate: channels ``0..m-1`` drive the auxiliary modes, channel ``m`` is
an extra independent channel used by the exact Gaussian update of the
splitting scheme. All channels have variance ``dt``.
"""

import hashlib
from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from ..core.errors import ValidationError
from ..core.seeding import Stream, rng_for

DEFAULT_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Increments for one replica on a uniform grid.

    ``increments`` has shape (n_steps, n_channels, d) and variance dt per entry.
    """

    increments: np.ndarray
    dt: float
    seed: int
    replica_id: int
    stream_id: int = int(Stream.BROWNIAN)
    # Channel count of the drawn stream when this path is a combination of it
    source_channels: int | None = None

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def n_channels(self) -> int:
        return self.increments.shape[1]

    @property
    def d(self) -> int:
        return self.increments.shape[2]

    @property
    def fingerprint(self) -> str:
        return noise_fingerprint(
            self.seed, [self.replica_id], self.stream_id, self.dt, self.n_steps,
            self.source_channels or self.n_channels,
        )

    def combine(self, weights: np.ndarray) -> "NoisePath":
        """One-channel path sum_i w_i dW_i / |w| over channels 0..len(w)-1.

        The result is again a standard Brownian path and keeps the
        fingerprint of the stream it was built from.
        """
        weights = np.asarray(weights, dtype=float)
        norm = float(np.linalg.norm(weights))
        if weights.ndim != 1 or not norm > 0:
            raise ValidationError("combination weights must be a nonzero vector")
        combined = np.einsum("i,nid->nd", weights / norm, self.modes(len(weights)))
        return NoisePath(
            increments=combined[:, None, :],
            dt=self.dt,
            seed=self.seed,
            replica_id=self.replica_id,
            stream_id=self.stream_id,
            source_channels=self.source_channels or self.n_channels,
        )

    def chunks(self, chunk: int = DEFAULT_CHUNK) -> Iterator[np.ndarray]:
        for start in range(0, self.n_steps, chunk):
            yield self.increments[start : start + chunk]

    def modes(self, m: int) -> np.ndarray:
        """Per-mode increments dW_j, shape (n_steps, m, d)."""
        if self.increments.shape[1] < m:
            raise ValidationError(
                f"noise path has {self.increments.shape[1]} channels, need {m}",
                code="dimension_mismatch",
            )
        return self.increments[:, :m]


def noise_fingerprint(
    seed: int, replica_ids, stream_id: int, dt: float, n_steps: int, n_channels: int = 0
) -> str:
    """Identifier shared by path sets driven by the same Brownian motions."""
    ids = ",".join(str(int(r)) for r in replica_ids)
    blob = f"{int(seed)}|{ids}|{int(stream_id)}|{float(dt)!r}|{int(n_steps)}|{int(n_channels)}"
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def iter_normals(
    seed: int,
    replica_id: int,
    n_steps: int,
    n_channels: int,
    d: int,
    chunk: int = DEFAULT_CHUNK,
    stream: int | Stream = Stream.BROWNIAN,
) -> Iterator[np.ndarray]:
    """Yield standard normals of shape (k, n_channels, d), k <= chunk, n_steps in total.

    Chunked draws reproduce the unchunked stream exactly.
    """
    if n_steps < 0 or chunk < 1:
        raise ValidationError(f"invalid noise request (n_steps={n_steps}, chunk={chunk})")
    rng = rng_for(seed, replica_id, stream)
    done = 0
    while done < n_steps:
        k = min(chunk, n_steps - done)
        yield rng.standard_normal((k, n_channels, d))
        done += k


def brownian_path(
    seed: int,
    replica_id: int,
    n_steps: int,
    m: int,
    d: int,
    dt: float,
    stream: int | Stream = Stream.BROWNIAN,
) -> NoisePath:
    """Materialize the full noise path of one replica."""
    if not dt > 0:
        raise ValidationError(f"dt must be > 0 (got {dt})")
    parts = list(iter_normals(seed, replica_id, n_steps, m + 1, d, stream=stream))
    normals = np.concatenate(parts) if parts else np.zeros((0, m + 1, d))
    return NoisePath(
        increments=np.sqrt(dt) * normals,
        dt=float(dt),
        seed=int(seed),
        replica_id=int(replica_id),
        stream_id=int(stream),
    )


def brownian_paths(
    seed: int, replica_ids, n_steps: int, m: int, d: int, dt: float
) -> list[NoisePath]:
    """Noise paths of several replicas, identical to what ``simulate_paths`` draws for them."""
    return [brownian_path(seed, int(r), n_steps, m, d, dt) for r in replica_ids]


def paths_fingerprint(paths: Sequence[NoisePath]) -> str:
    """Fingerprint of a replica set driven by ``paths``.

    Raises:
        ValidationError: Paths from different seeds, streams or grids
    """
    if not paths:
        raise ValidationError("no noise paths given")
    first = paths[0]
    for path in paths[1:]:
        if (path.seed, path.stream_id, path.dt, path.n_steps, path.increments.shape[1:]) != (
            first.seed, first.stream_id, first.dt, first.n_steps, first.increments.shape[1:]
        ):
            raise ValidationError(
                "noise paths differ in seed, stream, step or shape", code="dimension_mismatch"
            )
    return noise_fingerprint(
        first.seed,
        [p.replica_id for p in paths],
        first.stream_id,
        first.dt,
        first.n_steps,
        first.source_channels or first.n_channels,
    )
