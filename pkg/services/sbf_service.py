# services/sbf_service.py
import numpy as np

from models.precoder import SbfPrecoders
from models.power import RateEstimate
from services.channel_service import hermitian_sqrt_pair, run_monte_carlo
from services.correlation_service import eig_hermitian, generalized_max_eigvec, quadratic_form


def we_precoders(R_A, R_B) -> SbfPrecoders:
    """Weakest-eigenvector precoders: each user's beam avoids the other's strongest directions."""
    return SbfPrecoders(w=eig_hermitian(R_B).u_min, q=eig_hermitian(R_A).u_min)


def ge_precoders(R_A, R_B) -> SbfPrecoders:
    """Generalized-eigenvector precoders maximizing the high-SNR lower bound."""
    return SbfPrecoders(w=generalized_max_eigvec(R_A, R_B), q=generalized_max_eigvec(R_B, R_A))


def sum_rate_lower_bound(R_A, R_B, pre: SbfPrecoders) -> float:
    """log2 of (w^H R_A w / w^H R_B w) * (q^H R_B q / q^H R_A q)."""
    ratio_w = quadratic_form(R_A, pre.w) / quadratic_form(R_B, pre.w)
    ratio_q = quadratic_form(R_B, pre.q) / quadratic_form(R_A, pre.q)
    return float(np.log2(ratio_w * ratio_q))


def sbf_rate_samples(triple, pre: SbfPrecoders, rho: float) -> np.ndarray:
    """Per-trial sum of both users' log2(1 + SINR) on the slot-1 channels."""
    hw = np.abs(triple.h1.conj() @ pre.w) ** 2
    hq = np.abs(triple.h1.conj() @ pre.q) ** 2
    gq = np.abs(triple.g1.conj() @ pre.q) ** 2
    gw = np.abs(triple.g1.conj() @ pre.w) ** 2
    rate_A = np.log2(1.0 + rho * hw / (1.0 + rho * hq))
    rate_B = np.log2(1.0 + rho * gq / (1.0 + rho * gw))
    return rate_A + rate_B


def mc_rate_sbf(R_A, R_B, pre: SbfPrecoders, P: float, trials: int, seed: int, workers: int = 1) -> RateEstimate:
    if P <= 0:
        raise ValueError("P must be positive")
    rho = P / 2.0
    sqrtA, sqrtB = hermitian_sqrt_pair(R_A, R_B)
    return run_monte_carlo(lambda t: sbf_rate_samples(t, pre, rho), sqrtA, sqrtB, trials, seed, workers)
