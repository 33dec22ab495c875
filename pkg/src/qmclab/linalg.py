"""Dense complex matrix kernel for multipartite operators.

Conventions used throughout the package:

* Subsystems are ordered left to right and the composite basis index is
  big-endian in that order, i.e. the first subsystem is the most
  significant index (matching ``numpy.kron``).
* Matrix functions (square roots, entropies, inverse square roots) go
  through a Hermitian eigendecomposition of the hermitized input
  ``(a + a^H) / 2``.
* Eigenvalues that are slightly negative are clipped to zero before a
  matrix function is applied; substantially negative spectra raise.
* Entropic quantities are reported in bits (base-2 logarithms).
"""

from __future__ import annotations

import math
import os
import string
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    InvalidExponentError,
    NotHermitianError,
    NotPSDError,
    TraceError,
)

__all__ = [
    "SystemLayout",
    "HermitianSpectrum",
    "max_total_dim",
    "hermitianize",
    "kron",
    "partial_trace",
    "herm_eig",
    "herm_sqrt",
    "pinv_sqrt",
    "support_projector",
    "schatten_norm",
    "trace_distance",
    "fidelity",
    "vn_entropy",
    "relative_entropy",
]

DEFAULT_MAX_TOTAL_DIM = 4096

# Relative tolerances of the numerical policy.  Negative eigenvalues in
# [-PSD_CLIP_REL * scale, 0) are treated as rounding noise; anything
# below -PSD_ERROR_REL * scale is a genuine violation.
HERMITICITY_REL = 1e-10
PSD_ERROR_REL = 1e-8
DENSITY_EIG_TOL = 1e-10
DENSITY_TRACE_TOL = 1e-10


def max_total_dim() -> int:
    """Composite-dimension cap; override with env var QMCLAB_MAX_DIM."""
    raw = os.environ.get("QMCLAB_MAX_DIM")
    if raw is None:
        return DEFAULT_MAX_TOTAL_DIM
    try:
        value = int(raw)
    except ValueError as exc:
        raise DimensionError(f"QMCLAB_MAX_DIM is not an integer: {raw!r}") from exc
    if value < 1:
        raise DimensionError(f"QMCLAB_MAX_DIM must be positive, got {value}")
    return value


@dataclass(frozen=True)
class SystemLayout:
    """Ordered subsystem dimensions of a composite Hilbert space.

    Args:
        dims: per-subsystem dimensions, first subsystem most significant.
        labels: optional per-subsystem names (same length as dims).
    """

    dims: tuple[int, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) < 1:
            raise DimensionError("layout needs at least one subsystem")
        for i, d in enumerate(dims):
            if d < 1:
                raise DimensionError(f"subsystem {i} has dimension {d} < 1")
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            object.__setattr__(self, "labels", labels)
            if len(labels) != len(dims):
                raise DimensionError(
                    f"{len(labels)} labels for {len(dims)} subsystems"
                )
        total = math.prod(dims)
        if total > max_total_dim():
            raise DimensionError(
                f"total dimension {total} exceeds cap {max_total_dim()}"
            )

    @property
    def dim(self) -> int:
        """Total dimension (product of subsystem dimensions)."""
        return math.prod(self.dims)

    @property
    def num_subsystems(self) -> int:
        return len(self.dims)

    def restrict(self, keep) -> "SystemLayout":
        """Layout of the subsystems listed in ``keep`` (original order)."""
        keep = tuple(keep)
        labels = None
        if self.labels is not None:
            labels = tuple(self.labels[i] for i in keep)
        return SystemLayout(tuple(self.dims[i] for i in keep), labels)


@dataclass(frozen=True)
class HermitianSpectrum:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_matrix(x, name: str = "input") -> np.ndarray:
    m = np.asarray(x, dtype=complex)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m.view(float))):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _as_square(x, name: str = "input") -> np.ndarray:
    m = _as_matrix(x, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def hermitianize(a) -> np.ndarray:
    """(a + a^H) / 2."""
    m = _as_square(a)
    return (m + m.conj().T) / 2


def kron(a, b) -> np.ndarray:
    """Kronecker product; the first factor is the most significant index."""
    ma = _as_matrix(a, "first factor")
    mb = _as_matrix(b, "second factor")
    rows = ma.shape[0] * mb.shape[0]
    cols = ma.shape[1] * mb.shape[1]
    cap = max_total_dim()
    if max(rows, cols) > cap:
        raise DimensionError(
            f"kron result {rows}x{cols} exceeds dimension cap {cap}"
        )
    return np.kron(ma, mb)


def partial_trace(x, layout: SystemLayout, traced) -> np.ndarray:
    """Trace out the subsystems listed in ``traced``.

    Args:
        x: square operator on the composite space described by layout.
        layout: subsystem structure of x.
        traced: iterable of subsystem indices to remove.

    Returns:
        Operator on the remaining subsystems, in their original order.
    """
    m = _as_square(x, "operator")
    if m.shape[0] != layout.dim:
        raise DimensionError(
            f"operator dimension {m.shape[0]} does not match layout total {layout.dim}"
        )
    traced = tuple(int(i) for i in traced)
    n = layout.num_subsystems
    for i in traced:
        if not 0 <= i < n:
            raise DimensionError(f"traced subsystem {i} outside 0..{n - 1}")
    if len(set(traced)) != len(traced):
        raise DimensionError(f"duplicate traced subsystem in {traced}")
    if not traced:
        return m.copy()
    if 2 * n > len(string.ascii_lowercase):
        raise DimensionError(f"partial trace supports at most 13 subsystems, got {n}")

    letters = list(string.ascii_lowercase[: 2 * n])
    for i in traced:
        letters[n + i] = letters[i]
    keep = [i for i in range(n) if i not in traced]
    out = [letters[i] for i in keep] + [letters[n + i] for i in keep]
    tensor = m.reshape(*layout.dims, *layout.dims)
    reduced = np.einsum("".join(letters) + "->" + "".join(out), tensor)
    kept_dim = math.prod(layout.dims[i] for i in keep) if keep else 1
    return reduced.reshape(kept_dim, kept_dim)


def _check_hermitian(m: np.ndarray, rel_tol: float = HERMITICITY_REL) -> float:
    deviation = float(np.abs(m - m.conj().T).max()) if m.size else 0.0
    scale = float(np.abs(m).max()) if m.size else 0.0
    if deviation > rel_tol * max(scale, 1e-300):
        raise NotHermitianError(
            f"matrix deviates from Hermitian by {deviation:.3e} "
            f"(tolerance {rel_tol:.1e} * {scale:.3e})",
            violation=deviation,
        )
    return deviation


def herm_eig(p) -> HermitianSpectrum:
    """Spectral decomposition of a Hermitian matrix, eigenvalues descending."""
    m = _as_square(p, "matrix")
    _check_hermitian(m)
    w, v = np.linalg.eigh(hermitianize(m))
    order = np.argsort(w)[::-1]
    return HermitianSpectrum(w[order], v[:, order])


def _psd_eig(p, name: str) -> tuple[np.ndarray, np.ndarray]:
    """eigh of the hermitized input with the PSD clipping policy applied."""
    m = _as_square(p, name)
    _check_hermitian(m)
    w, v = np.linalg.eigh(hermitianize(m))
    scale = float(np.abs(w).max()) if w.size else 0.0
    wmin = float(w.min()) if w.size else 0.0
    if wmin < -PSD_ERROR_REL * max(scale, 1e-300):
        raise NotPSDError(
            f"{name} has eigenvalue {wmin:.3e}, below -{PSD_ERROR_REL:.0e} * {scale:.3e}",
            violation=wmin,
        )
    return np.clip(w, 0.0, None), v


def herm_sqrt(p) -> np.ndarray:
    """Positive-semidefinite square root via eigendecomposition."""
    w, v = _psd_eig(p, "herm_sqrt input")
    return hermitianize((v * np.sqrt(w)) @ v.conj().T)


def _support_cutoff(w: np.ndarray, tol: float | None) -> float:
    if tol is not None:
        return float(tol)
    top = float(w.max()) if w.size else 0.0
    return len(w) * np.finfo(float).eps * top


def pinv_sqrt(p, tol: float | None = None) -> np.ndarray:
    """Pseudo-inverse square root; eigenvalues at or below the support
    cutoff (default dim * machine-eps * lambda_max) map to zero."""
    w, v = _psd_eig(p, "pinv_sqrt input")
    cutoff = _support_cutoff(w, tol)
    inv = np.where(w > cutoff, 1.0 / np.sqrt(np.where(w > cutoff, w, 1.0)), 0.0)
    return hermitianize((v * inv) @ v.conj().T)


def support_projector(p, tol: float | None = None) -> np.ndarray:
    """Projector onto the support (eigenvalues above the cutoff) of p."""
    w, v = _psd_eig(p, "support_projector input")
    cutoff = _support_cutoff(w, tol)
    ind = np.where(w > cutoff, 1.0, 0.0)
    return hermitianize((v * ind) @ v.conj().T)


def schatten_norm(x, p) -> float:
    """Schatten p-norm (sum of singular values to the p-th power, root p).

    p may be any real >= 1 or math.inf.  p=1 is the trace norm, p=2 the
    Frobenius norm, p=inf the operator norm.
    """
    m = _as_matrix(x, "operator")
    pf = float(p)
    if math.isnan(pf) or pf < 1:
        raise InvalidExponentError(f"Schatten exponent must be >= 1, got {p}")
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0:
        return 0.0
    if math.isinf(pf):
        return float(s.max())
    if pf == 1:
        return float(s.sum())
    top = float(s.max())
    if top == 0.0:
        return 0.0
    return float(top * np.sum((s / top) ** pf) ** (1.0 / pf))


def trace_distance(rho, sigma) -> float:
    """Full trace norm ||rho - sigma||_1 (not halved)."""
    a = _as_square(rho, "rho")
    b = _as_square(sigma, "sigma")
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return schatten_norm(a - b, 1)


def check_density_matrix(
    m,
    *,
    herm_tol: float = HERMITICITY_REL,
    eig_tol: float = DENSITY_EIG_TOL,
    trace_tol: float = DENSITY_TRACE_TOL,
) -> np.ndarray:
    """Validate a density matrix; raises with the measured violation.

    Checks, in order: hermiticity relative to the largest entry, minimum
    eigenvalue >= -eig_tol, and |trace - 1| <= trace_tol.  Returns the
    validated array unchanged (never normalizes).
    """
    a = _as_square(m, "density matrix")
    _check_hermitian(a, herm_tol)
    w = np.linalg.eigvalsh(hermitianize(a))
    wmin = float(w.min())
    if wmin < -eig_tol:
        raise NotPSDError(
            f"density matrix has eigenvalue {wmin:.3e} < -{eig_tol:.1e}",
            violation=wmin,
        )
    tr = complex(np.trace(a))
    deviation = abs(tr - 1.0)
    if deviation > trace_tol:
        raise TraceError(
            f"density matrix has trace {tr:.12g}, |trace - 1| = {deviation:.3e}",
            violation=deviation,
        )
    return a


def fidelity(rho, sigma, *, check: bool = True) -> float:
    """Square-root fidelity tr |rho^{1/2} sigma^{1/2}|.

    With check=True (default) both inputs must be valid density matrices.
    check=False skips density validation so positive operators of
    near-unit trace can be compared.
    """
    a = _as_square(rho, "rho")
    b = _as_square(sigma, "sigma")
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    if check:
        check_density_matrix(a)
        check_density_matrix(b)
    s = np.linalg.svd(herm_sqrt(a) @ herm_sqrt(b), compute_uv=False)
    return float(s.sum())


def vn_entropy(rho, *, check: bool = True) -> float:
    """Von Neumann entropy in bits."""
    a = _as_square(rho, "rho")
    if check:
        check_density_matrix(a)
    w = np.clip(np.linalg.eigvalsh(hermitianize(a)), 0.0, None)
    w = w[w > 0.0]
    if w.size == 0:
        return 0.0
    return float(-(w * np.log2(w)).sum())


def relative_entropy(rho, sigma, *, check: bool = True, tol: float | None = None) -> float:
    """Relative entropy S(rho || sigma) in bits.

    Returns math.inf when rho has weight outside the support of sigma
    (support determined by the spectral cutoff ``tol``, defaulting to
    dim * machine-eps * lambda_max).
    """
    a = _as_square(rho, "rho")
    b = _as_square(sigma, "sigma")
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    if check:
        check_density_matrix(a)
        check_density_matrix(b)
    wr, vr = _psd_eig(a, "rho")
    ws, vs = _psd_eig(b, "sigma")
    cutoff = _support_cutoff(ws, tol)
    overlap = np.abs(vs.conj().T @ vr) ** 2  # overlap[j, i] = |<s_j | r_i>|^2
    weight_on = overlap @ wr  # weight of rho on each sigma eigenvector
    leak = float(weight_on[ws <= cutoff].sum())
    if leak > 1e-10:
        return math.inf

    wr_pos = wr[wr > 0.0]
    s_rho = float((wr_pos * np.log2(wr_pos)).sum())
    on = ws > cutoff
    cross = float((weight_on[on] * np.log2(ws[on])).sum())
    return s_rho - cross
