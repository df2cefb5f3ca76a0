"""PLDA parameters, length normalisation and simultaneous diagonalisation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite, ParseError, ZeroVector

__all__ = [
    "PldaParams",
    "length_normalize",
    "simultaneous_diagonalize",
    "project",
    "read_plda",
    "write_plda",
]

_MIN_WC_EIG = 1e-10


def length_normalize(v):
    """Scale ``v`` (or every row of a 2-D array) to unit Euclidean norm.

    Raises :class:`ZeroVector` when a norm is below 1e-12.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ZeroVector("cannot length-normalize a (near) zero vector")
    return v / norm


def _fix_row_signs(U, tol=1e-12):
    for row in U:
        nz = np.flatnonzero(np.abs(row) > tol)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return U


def simultaneous_diagonalize(sigma_wc, sigma_ac):
    """Find ``U`` with ``U sigma_wc U.T = I`` and ``U sigma_ac U.T = diag(psi)``.

    ``psi`` comes back sorted in descending order and each row of ``U`` has
    its first nonzero entry positive, so the result is deterministic.

    Returns
    -------
    (U, psi)
    """
    wc = np.asarray(sigma_wc, dtype=np.float64)
    ac = np.asarray(sigma_ac, dtype=np.float64)
    if wc.ndim != 2 or wc.shape[0] != wc.shape[1] or wc.shape != ac.shape:
        raise DimensionMismatch(
            f"covariances must be square and equal-sized, got {wc.shape} and {ac.shape}")
    wc = 0.5 * (wc + wc.T)
    ac = 0.5 * (ac + ac.T)
    min_eig = np.linalg.eigvalsh(wc)[0]
    if not min_eig >= _MIN_WC_EIG:
        raise NotPositiveDefinite(
            f"within-class covariance smallest eigenvalue {min_eig:.3g} < {_MIN_WC_EIG:g}")
    try:
        L = np.linalg.cholesky(wc)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    # whitened across-class: L^-1 ac L^-T
    Linv_ac = solve_triangular(L, ac, lower=True)
    A = solve_triangular(L, Linv_ac.T, lower=True)
    A = 0.5 * (A + A.T)
    eigval, V = np.linalg.eigh(A)
    order = np.argsort(eigval)[::-1]
    eigval, V = eigval[order], V[:, order]
    Linv = solve_triangular(L, np.eye(L.shape[0]), lower=True)
    U = _fix_row_signs(V.T @ Linv)
    psi = np.clip(eigval, 0.0, None)
    return U, psi


@dataclass(frozen=True)
class PldaParams:
    sigma_wc: np.ndarray
    sigma_ac: np.ndarray
    transform: np.ndarray
    psi: np.ndarray

    @classmethod
    def from_covariances(cls, sigma_wc, sigma_ac) -> "PldaParams":
        U, psi = simultaneous_diagonalize(sigma_wc, sigma_ac)
        return cls(np.asarray(sigma_wc, dtype=np.float64),
                   np.asarray(sigma_ac, dtype=np.float64), U, psi)

    @property
    def dim(self) -> int:
        return self.psi.shape[0]


def project(params: PldaParams, z):
    """Map embeddings (vector or rows of a matrix) into the diagonalised space."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != params.dim:
        raise DimensionMismatch(f"embedding dim {z.shape[-1]} != PLDA dim {params.dim}")
    return z @ params.transform.T


def read_plda(path) -> PldaParams:
    """Read ``D`` then D rows of sigma_wc then D rows of sigma_ac."""
    path = Path(path)
    lines = [(i, ln.split()) for i, ln in enumerate(path.read_text().splitlines(), 1)]
    lines = [(i, toks) for i, toks in lines if toks]
    if not lines:
        raise ParseError("empty PLDA file", path)
    lineno, head = lines[0]
    try:
        (dim,) = head
        dim = int(dim)
    except ValueError:
        raise ParseError("first line must hold the dimension D", path, lineno) from None
    if dim < 1:
        raise ParseError(f"dimension must be positive, got {dim}", path, lineno)
    body = lines[1:]
    if len(body) != 2 * dim:
        raise ParseError(f"expected {2 * dim} matrix rows, found {len(body)}", path)
    rows = []
    for lineno, toks in body:
        if len(toks) != dim:
            raise ParseError(f"expected {dim} values, found {len(toks)}", path, lineno)
        try:
            rows.append([float(t) for t in toks])
        except ValueError:
            raise ParseError("non-numeric matrix entry", path, lineno) from None
    mat = np.array(rows)
    return PldaParams.from_covariances(mat[:dim], mat[dim:])


def write_plda(path, sigma_wc, sigma_ac) -> None:
    sigma_wc = np.atleast_2d(sigma_wc)
    sigma_ac = np.atleast_2d(sigma_ac)
    out = [str(sigma_wc.shape[0])]
    for mat in (sigma_wc, sigma_ac):
        out.extend(" ".join(f"{v:.17g}" for v in row) for row in mat)
    Path(path).write_text("\n".join(out) + "\n")
