# services/channel_service.py
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Tuple

import numpy as np

from exceptions import DimMismatch
from models.channel import (
    STREAM_G1,
    STREAM_G2,
    STREAM_G3,
    STREAM_H1,
    STREAM_H2,
    STREAM_H3,
    ChannelTriple,
    SeedSpec,
)
from models.power import RateEstimate
from services.correlation_service import hermitian_sqrt

logger = logging.getLogger(__name__)

# trials are drawn in fixed-size blocks; block boundaries never depend on the
# worker count, so results are a pure function of the master seed
BLOCK_SIZE = 4096


def _stream_generator(master_seed: int, block_index: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([master_seed, block_index, stream])))


def cn01_block(dim: int, master_seed: int, block_index: int, stream: int, size: int) -> np.ndarray:
    """``size`` rows of i.i.d. CN(0, 1) entries for one (block, stream) pair.

    Box-Muller on the uniform stream: |z|^2 = -ln(1 - u1) is Exp(1) and the
    angle 2*pi*u2 is uniform. A shorter ``size`` yields a prefix of the
    longer draw.
    """
    u = _stream_generator(master_seed, block_index, stream).random((size, dim, 2))
    radius = np.sqrt(-np.log1p(-u[..., 0]))
    return radius * np.exp(2j * np.pi * u[..., 1])


def sample_cn01(dim: int, seed: SeedSpec, stream: int) -> np.ndarray:
    block, offset = divmod(seed.trial_index, BLOCK_SIZE)
    return cn01_block(dim, seed.master_seed, block, stream, offset + 1)[offset]


def _check_roots(sqrtA: np.ndarray, sqrtB: np.ndarray) -> int:
    if sqrtA.ndim != 2 or sqrtA.shape[0] != sqrtA.shape[1] or sqrtA.shape != sqrtB.shape:
        raise DimMismatch(f"covariance roots must be equal square matrices, got {sqrtA.shape} and {sqrtB.shape}")
    return sqrtA.shape[0]


def sample_triple(sqrtA: np.ndarray, sqrtB: np.ndarray, seed: SeedSpec) -> ChannelTriple:
    M = _check_roots(sqrtA, sqrtB)
    white = {s: sample_cn01(M, seed, s) for s in range(6)}
    return ChannelTriple(
        h1=sqrtA @ white[STREAM_H1],
        h2=sqrtA @ white[STREAM_H2],
        h3=sqrtA @ white[STREAM_H3],
        g1=sqrtB @ white[STREAM_G1],
        g2=sqrtB @ white[STREAM_G2],
        g3=sqrtB @ white[STREAM_G3],
    )


def sample_triple_block(
    sqrtA: np.ndarray, sqrtB: np.ndarray, master_seed: int, block_index: int, size: int
) -> ChannelTriple:
    """Trials ``block_index * BLOCK_SIZE`` onward, one trial per row."""
    M = _check_roots(sqrtA, sqrtB)

    def draw(root, stream):
        return cn01_block(M, master_seed, block_index, stream, size) @ root.T

    return ChannelTriple(
        h1=draw(sqrtA, STREAM_H1),
        h2=draw(sqrtA, STREAM_H2),
        h3=draw(sqrtA, STREAM_H3),
        g1=draw(sqrtB, STREAM_G1),
        g2=draw(sqrtB, STREAM_G2),
        g3=draw(sqrtB, STREAM_G3),
    )


def block_layout(trials: int) -> List[Tuple[int, int]]:
    """(block_index, size) pairs covering ``trials`` trials."""
    full, rest = divmod(trials, BLOCK_SIZE)
    layout = [(b, BLOCK_SIZE) for b in range(full)]
    if rest:
        layout.append((full, rest))
    return layout


def sample_channels(sqrtR: np.ndarray, trials: int, master_seed: int, stream: int = STREAM_H1) -> np.ndarray:
    """``trials`` draws of h = sqrtR w stacked as rows."""
    M = sqrtR.shape[0]
    blocks = [cn01_block(M, master_seed, b, stream, size) for b, size in block_layout(trials)]
    return np.concatenate(blocks, axis=0) @ sqrtR.T


def run_monte_carlo(
    sample_fn: Callable[[ChannelTriple], np.ndarray],
    sqrtA: np.ndarray,
    sqrtB: np.ndarray,
    trials: int,
    master_seed: int,
    workers: int = 1,
) -> RateEstimate:
    """Average ``sample_fn`` over ``trials`` channel triples.

    ``sample_fn`` maps a block of triples to one value per trial. Blocks may
    run on several threads; samples are concatenated in block order.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    _check_roots(sqrtA, sqrtB)
    layout = block_layout(trials)

    def run_block(item):
        block_index, size = item
        return np.asarray(sample_fn(sample_triple_block(sqrtA, sqrtB, master_seed, block_index, size)), dtype=float)

    if workers > 1 and len(layout) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_block, layout))
    else:
        parts = [run_block(item) for item in layout]
    estimate = RateEstimate.from_samples(np.concatenate(parts), master_seed)
    logger.debug("monte carlo: %d trials, mean %.6f, stderr %.2e", trials, estimate.mean_bits, estimate.stderr)
    return estimate


def hermitian_sqrt_pair(R_A, R_B) -> Tuple[np.ndarray, np.ndarray]:
    sqrtA, sqrtB = hermitian_sqrt(R_A), hermitian_sqrt(R_B)
    _check_roots(sqrtA, sqrtB)
    return sqrtA, sqrtB


def log2det_eye_plus(G: np.ndarray) -> np.ndarray:
    """Batched log2 det(I + G) for Hermitian PSD G of shape (n, k, k)."""
    k = G.shape[-1]
    _, logdet = np.linalg.slogdet(np.eye(k)[None, :, :] + G)
    return np.real(logdet) / np.log(2.0)
