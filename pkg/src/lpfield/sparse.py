"""LASSO sparse coding and dictionary learning.

Objective per signal: ``|V - D a|^2 + lam * |a|_1`` with unit-norm atoms
(the columns of ``D``). Codes are computed by coordinate descent and
certified with the subgradient optimality conditions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

CERT_TOL = 1e-6


def default_lambda(d: int) -> float:
    return 0.2 if d >= 32 else 0.05


def soft_threshold(x, thr):
    return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)


def objective_terms(signals, dictionary, codes):
    """Per-signal ``(l2, l1)`` terms of the coding objective."""
    resid = signals - codes @ dictionary.T
    return np.einsum("ij,ij->i", resid, resid), np.abs(codes).sum(axis=1)


def objective(signals, dictionary, codes, lam) -> float:
    l2, l1 = objective_terms(signals, dictionary, codes)
    return float(l2.sum() + lam * l1.sum())


def certificate_violation(signals, dictionary, codes, lam) -> np.ndarray:
    """Largest violation of the LASSO optimality conditions, per signal.

    For active coefficients ``|2 d_k^T r - lam sign(a_k)|`` must vanish; for
    zero coefficients ``|2 d_k^T r|`` must not exceed ``lam``.
    """
    grad = 2.0 * (signals - codes @ dictionary.T) @ dictionary
    active = codes != 0
    viol = np.where(active, np.abs(grad - lam * np.sign(codes)), np.maximum(np.abs(grad) - lam, 0.0))
    return viol.max(axis=1) if viol.size else np.zeros(len(signals))


def _polish(signals, dictionary, codes, lam, gram):
    """Solve each row exactly on its current support and sign pattern."""
    out = codes.copy()
    for j in range(len(codes)):
        supp = np.flatnonzero(codes[j])
        if len(supp) == 0:
            continue
        rhs = dictionary[:, supp].T @ signals[j] - 0.5 * lam * np.sign(codes[j, supp])
        try:
            sol = np.linalg.solve(gram[np.ix_(supp, supp)], rhs)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.sign(sol) == np.sign(codes[j, supp])):
            out[j, supp] = sol
    return out


def lasso_batch(signals, dictionary, lam, init=None, max_sweeps=5000, tol=CERT_TOL * 0.1):
    """Code every row of ``signals`` over ``dictionary``.

    Coordinate descent on the Gram matrix, warm-started from ``init``. A row
    is never returned with a higher objective than its warm start.
    """
    signals = np.asarray(signals, dtype=np.float64)
    dictionary = np.asarray(dictionary, dtype=np.float64)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if not (np.all(np.isfinite(signals)) and np.all(np.isfinite(dictionary))):
        raise ValueError("non-finite input to sparse coding")
    n, d = len(signals), dictionary.shape[1]
    if signals.shape[1] != dictionary.shape[0]:
        raise ValueError("signal length does not match dictionary atoms")
    gram = dictionary.T @ dictionary
    corr = signals @ dictionary
    codes = np.zeros((n, d)) if init is None else np.array(init, dtype=np.float64)
    start = codes.copy()
    diag = np.diag(gram)
    half = 0.5 * lam
    for _ in range(max_sweeps):
        delta = 0.0
        for k in range(d):
            if diag[k] <= 0:
                continue
            c = corr[:, k] - codes @ gram[:, k] + codes[:, k] * diag[k]
            new = soft_threshold(c, half) / diag[k]
            delta = max(delta, float(np.abs(new - codes[:, k]).max(initial=0.0)))
            codes[:, k] = new
        if delta <= tol * 1e-2:
            break
        if delta <= tol and certificate_violation(signals, dictionary, codes, lam).max(initial=0.0) <= tol:
            break
    bad = certificate_violation(signals, dictionary, codes, lam) > tol
    if bad.any():
        polished = codes.copy()
        polished[bad] = _polish(signals[bad], dictionary, codes[bad], lam, gram)
        codes = polished
    # monotone safeguard against round-off
    l2n, l1n = objective_terms(signals, dictionary, codes)
    l2o, l1o = objective_terms(signals, dictionary, start)
    worse = l2n + lam * l1n > l2o + lam * l1o
    codes[worse] = start[worse]
    return codes


@dataclass
class SparseCode:
    alpha: np.ndarray

    @property
    def nonzeros(self) -> int:
        return int(np.count_nonzero(self.alpha))


def lasso_code(signal, dictionary, lam: float, init=None) -> SparseCode:
    """Sparse code of a single signal minimising ``|V - D a|^2 + lam |a|_1``."""
    signal = np.asarray(signal, dtype=np.float64).ravel()
    init = None if init is None else np.asarray(init, dtype=np.float64)[None]
    return SparseCode(lasso_batch(signal[None], dictionary, lam, init)[0])


@dataclass
class Dictionary:
    atoms: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        if self.atoms.ndim != 2 or self.atoms.shape[1] < 1:
            raise ValueError("dictionary must be a (length, d) array with d >= 1")

    @property
    def d(self) -> int:
        return self.atoms.shape[1]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.atoms, axis=0)


def _unit(vec):
    nrm = np.linalg.norm(vec)
    return vec / nrm if nrm > 0 else None


def dictionary_update(signals, codes, dictionary, lam: float = 0.0, rng=None):
    """One block-coordinate pass over the atoms.

    Each used atom becomes the unit vector best fitting its partial residual
    (the exact minimiser under the unit-norm constraint), after which that
    atom's coefficients are refit by soft thresholding. Atoms no signal uses
    are re-seeded with the signal of largest residual. Returns the new
    ``(dictionary, codes)``; the objective never increases.
    """
    signals = np.asarray(signals, dtype=np.float64)
    if len(signals) == 0:
        raise ValueError("need at least one signal")
    atoms = np.array(dictionary, dtype=np.float64)
    codes = np.array(codes, dtype=np.float64)
    resid = signals - codes @ atoms.T
    for k in range(atoms.shape[1]):
        a = codes[:, k]
        used = np.flatnonzero(a)
        if len(used) == 0:
            continue
        part = resid[used] + np.outer(a[used], atoms[:, k])
        new = _unit(part.T @ a[used])
        if new is None:
            continue
        old_obj = np.sum(resid[used] ** 2) + lam * np.abs(a[used]).sum()
        coef = soft_threshold(part @ new, 0.5 * lam)
        r_new = part - np.outer(coef, new)
        if np.sum(r_new ** 2) + lam * np.abs(coef).sum() > old_obj:
            continue
        atoms[:, k] = new
        codes[used, k] = coef
        resid[used] = r_new
    dead = np.flatnonzero(~codes.any(axis=0))
    if len(dead):
        energy = np.einsum("ij,ij->i", resid, resid)
        for k, j in zip(dead, np.argsort(-energy, kind="stable")):
            new = _unit(signals[j]) if energy[j] > 0 else None
            if new is None:
                new = _random_unit(atoms.shape[0], rng)
            atoms[:, k] = new
    return atoms, codes


def _random_unit(length, rng):
    rng = np.random.default_rng(rng)
    g = rng.normal(size=length)
    return g / np.linalg.norm(g)


def init_dictionary(signals, d, rng) -> np.ndarray:
    """``d`` distinct signals drawn at random, normalised to unit length."""
    rng = np.random.default_rng(rng)
    n = len(signals)
    if d > n:
        raise ValueError(f"dictionary size d={d} exceeds the number of signals N={n}")
    pick = rng.choice(n, size=d, replace=False)
    atoms = np.empty((signals.shape[1], d))
    for col, j in enumerate(pick):
        vec = _unit(signals[j])
        atoms[:, col] = vec if vec is not None else _random_unit(signals.shape[1], rng)
    return atoms


@dataclass
class LearnResult:
    dictionary: np.ndarray
    codes: np.ndarray
    history: list = field(default_factory=list)


def learn_dictionary(signals, d: int, lam: float, iters: int = 10, rng_seed=None,
                     init_dictionary_atoms=None, init_codes=None) -> LearnResult:
    """Alternate sparse coding and dictionary updates.

    Starts from ``d`` random signals unless a warm start is given. The
    recorded objective is non-increasing; the returned codes are optimal for
    the returned dictionary.
    """
    signals = np.asarray(signals, dtype=np.float64)
    rng = np.random.default_rng(rng_seed)
    if d > len(signals):
        raise ValueError(f"dictionary size d={d} exceeds the number of signals N={len(signals)}")
    atoms = init_dictionary(signals, d, rng) if init_dictionary_atoms is None else np.array(init_dictionary_atoms)
    codes = np.zeros((len(signals), d)) if init_codes is None else np.array(init_codes, dtype=np.float64)
    history = [objective(signals, atoms, codes, lam)]
    for _ in range(iters):
        codes = lasso_batch(signals, atoms, lam, codes)
        history.append(objective(signals, atoms, codes, lam))
        atoms, codes = dictionary_update(signals, codes, atoms, lam, rng)
        history.append(objective(signals, atoms, codes, lam))
    codes = lasso_batch(signals, atoms, lam, codes)
    history.append(objective(signals, atoms, codes, lam))
    log.debug("dictionary learning objective %.6g -> %.6g", history[0], history[-1])
    return LearnResult(atoms, codes, history)
