"""Density operators and randomized state generators.

Includes generic random states, exactly-recoverable tripartite states
built from a direct-sum factorization of the middle system, chain states
whose conditional mutual information vanishes across every adjacent cut,
and controlled perturbations that hit a requested discrepancy target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DimensionError, InfeasibleTargetError, TraceError
from .linalg import SystemLayout

# Targets below this cannot be resolved by the measured-discrepancy
# bisection; callers get the input state back unchanged.
PERTURB_RESOLUTION = 1e-9
_BISECT_REL_TOL = 1e-5
_MIN_BLOCK_WEIGHT = 1e-4


@dataclass(frozen=True)
class DensityOperator:
    """A density matrix together with its subsystem layout."""

    matrix: np.ndarray
    layout: SystemLayout

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"density operator must be square, got {m.shape}")
        if m.shape[0] != self.layout.dim:
            raise DimensionError(
                f"matrix dimension {m.shape[0]} does not match layout total {self.layout.dim}"
            )
        if not np.all(np.isfinite(m.view(float))):
            raise ValueError("density operator contains non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.layout.dim


def validate_density(matrix, layout: SystemLayout | tuple, **tolerances) -> DensityOperator:
    """Checked constructor: hermiticity, positivity, unit trace.

    Raises NotHermitianError / NotPSDError / TraceError carrying the
    measured violation.  Never normalizes the input.
    """
    if not isinstance(layout, SystemLayout):
        layout = SystemLayout(tuple(layout))
    checked = linalg.check_density_matrix(matrix, **tolerances)
    return DensityOperator(checked, layout)


def marginal(state: DensityOperator, keep) -> DensityOperator:
    """Reduced state on the subsystems listed in ``keep``."""
    keep = tuple(sorted(int(i) for i in keep))
    traced = tuple(i for i in range(state.layout.num_subsystems) if i not in keep)
    reduced = linalg.partial_trace(state.matrix, state.layout, traced)
    return DensityOperator(linalg.hermitianize(reduced), state.layout.restrict(keep))


def _complex_gaussian(rng: np.random.Generator, *shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_pure(d: int, rng: np.random.Generator) -> DensityOperator:
    """Haar-random pure state on a d-dimensional space."""
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    v = _complex_gaussian(rng, d)
    v /= np.linalg.norm(v)
    return DensityOperator(np.outer(v, v.conj()), SystemLayout((d,)))


def random_density(d: int, rank: int | None, rng: np.random.Generator) -> DensityOperator:
    """Random density matrix of the given rank (default full rank).

    Drawn by tracing the second factor out of a Haar-random pure state on
    a d x rank space, i.e. normalized Wishart.
    """
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    rank = d if rank is None else int(rank)
    if not 1 <= rank <= d:
        raise DimensionError(f"rank must be in 1..{d}, got {rank}")
    g = _complex_gaussian(rng, d, rank)
    m = g @ g.conj().T
    m /= np.trace(m).real
    return DensityOperator(linalg.hermitianize(m), SystemLayout((d,)))


def mix(state: DensityOperator, toward: DensityOperator, t: float) -> DensityOperator:
    """Convex combination (1 - t) * state + t * toward."""
    if state.dim != toward.dim:
        raise DimensionError(f"dimension mismatch {state.dim} vs {toward.dim}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"mixing weight must be in [0, 1], got {t}")
    return DensityOperator((1.0 - t) * state.matrix + t * toward.matrix, state.layout)


# ---------------------------------------------------------------------------
# Exactly recoverable tripartite states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkovBlock:
    """One direct-sum block: weight * (left on A x B_left) (x) (right on B_right x C)."""

    weight: float
    left: np.ndarray
    right: np.ndarray
    b_left: int
    b_right: int

    def __post_init__(self):
        left = np.array(self.left, dtype=complex)
        right = np.array(self.right, dtype=complex)
        left.setflags(write=False)
        right.setflags(write=False)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        if self.weight < 0:
            raise ValueError(f"block weight must be >= 0, got {self.weight}")
        if self.b_left < 1 or self.b_right < 1:
            raise DimensionError("block factors need positive dimensions")


@dataclass(frozen=True)
class MarkovStructure:
    """Direct-sum factorization of the middle system of a tripartite state."""

    blocks: tuple[MarkovBlock, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise DimensionError("structure needs at least one block")
        total = sum(b.weight for b in self.blocks)
        if abs(total - 1.0) > 1e-9:
            raise TraceError(
                f"block weights sum to {total:.12g}", violation=abs(total - 1.0)
            )

    @property
    def middle_dim(self) -> int:
        return sum(b.b_left * b.b_right for b in self.blocks)


def _random_splits(d_b: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Random ordered list of (b_left, b_right) pairs with sum of products d_b."""
    splits: list[tuple[int, int]] = []
    remaining = d_b
    while remaining > 0:
        options = [
            (l, r)
            for l in range(1, remaining + 1)
            for r in range(1, remaining + 1)
            if l * r <= remaining
        ]
        choice = options[int(rng.integers(len(options)))]
        splits.append(choice)
        remaining -= choice[0] * choice[1]
    return splits


def _dirichlet_floored(k: int, rng: np.random.Generator) -> np.ndarray:
    """Flat Dirichlet weights, resampled until none is vanishingly small.

    The floor keeps block supports numerically resolvable so that exact
    reconstruction identities hold to tight tolerances.
    """
    if k == 1:
        return np.ones(1)
    for _ in range(1000):
        w = rng.dirichlet(np.ones(k))
        if w.min() >= _MIN_BLOCK_WEIGHT:
            return w
    raise InfeasibleTargetError(f"could not draw {k} non-degenerate weights")


def random_structure(
    d_a: int, d_b: int, d_c: int, rng: np.random.Generator
) -> MarkovStructure:
    """Random block structure with full-rank factors and Dirichlet weights."""
    splits = _random_splits(d_b, rng)
    weights = _dirichlet_floored(len(splits), rng)
    blocks = []
    for (b_l, b_r), w in zip(splits, weights):
        left = random_density(d_a * b_l, None, rng).matrix
        right = random_density(b_r * d_c, None, rng).matrix
        blocks.append(MarkovBlock(float(w), left, right, b_l, b_r))
    return MarkovStructure(tuple(blocks))


def assemble_qmc(structure: MarkovStructure, layout: SystemLayout | tuple) -> DensityOperator:
    """Assemble the tripartite state encoded by a block structure.

    Each block contributes weight * left (x) right on A x (B_left x
    B_right) x C; the middle factors are embedded into consecutive basis
    vectors of the middle system.
    """
    if not isinstance(layout, SystemLayout):
        layout = SystemLayout(tuple(layout))
    if layout.num_subsystems != 3:
        raise DimensionError(f"need a 3-part layout, got {layout.dims}")
    d_a, d_b, d_c = layout.dims
    if structure.middle_dim != d_b:
        raise DimensionError(
            f"structure fills middle dimension {structure.middle_dim}, layout has {d_b}"
        )
    out = np.zeros((layout.dim, layout.dim), dtype=complex)
    offset = 0
    eye_a = np.eye(d_a)
    eye_c = np.eye(d_c)
    for block in structure.blocks:
        size = block.b_left * block.b_right
        if block.left.shape[0] != d_a * block.b_left:
            raise DimensionError(
                f"left factor dimension {block.left.shape[0]} != {d_a * block.b_left}"
            )
        if block.right.shape[0] != block.b_right * d_c:
            raise DimensionError(
                f"right factor dimension {block.right.shape[0]} != {block.b_right * d_c}"
            )
        embed = np.zeros((d_b, size))
        embed[offset : offset + size, :] = np.eye(size)
        lift = np.kron(np.kron(eye_a, embed), eye_c)
        out += block.weight * (lift @ np.kron(block.left, block.right) @ lift.conj().T)
        offset += size
    return DensityOperator(linalg.hermitianize(out), layout)


def random_qmc(
    layout: SystemLayout | tuple,
    rng: np.random.Generator,
    structure: MarkovStructure | None = None,
) -> DensityOperator:
    """Random tripartite state that is exactly recoverable from its
    two-body reduced states (zero conditional mutual information)."""
    if not isinstance(layout, SystemLayout):
        layout = SystemLayout(tuple(layout))
    if layout.num_subsystems != 3:
        raise DimensionError(f"need a 3-part layout, got {layout.dims}")
    if structure is None:
        d_a, d_b, d_c = layout.dims
        structure = random_structure(d_a, d_b, d_c, rng)
    state = assemble_qmc(structure, layout)
    return validate_density(state.matrix, layout)


def structure_directions(
    structure: MarkovStructure, rng: np.random.Generator
) -> MarkovStructure:
    """Independent random factors with the same splits and weights,
    usable as a fixed perturbation direction for mix_structure."""
    blocks = []
    for b in structure.blocks:
        left = random_density(b.left.shape[0], None, rng).matrix
        right = random_density(b.right.shape[0], None, rng).matrix
        blocks.append(MarkovBlock(b.weight, left, right, b.b_left, b.b_right))
    return MarkovStructure(tuple(blocks))


def mix_structure(
    structure: MarkovStructure, direction: MarkovStructure, t: float
) -> MarkovStructure:
    """Mix every block factor toward the direction's factor by weight t.

    The result keeps the splits and weights, so it stays within the
    exactly-recoverable family.
    """
    if len(structure.blocks) != len(direction.blocks):
        raise DimensionError("structures have different block counts")
    blocks = []
    for b, d in zip(structure.blocks, direction.blocks):
        if b.left.shape != d.left.shape or b.right.shape != d.right.shape:
            raise DimensionError("block shapes differ between structures")
        blocks.append(
            MarkovBlock(
                b.weight,
                (1 - t) * b.left + t * d.left,
                (1 - t) * b.right + t * d.right,
                b.b_left,
                b.b_right,
            )
        )
    return MarkovStructure(tuple(blocks))


# ---------------------------------------------------------------------------
# Chain states with vanishing conditional mutual information on every cut
# ---------------------------------------------------------------------------


def _floored_probabilities(k: int, rng: np.random.Generator) -> np.ndarray:
    if k == 1:
        return np.ones(1)
    for _ in range(1000):
        p = rng.dirichlet(np.ones(k))
        if p.min() >= 1e-3:
            return p
    raise InfeasibleTargetError("could not draw non-degenerate probabilities")


def random_chain_qmc(dims, rng: np.random.Generator) -> DensityOperator:
    """Random chain state: classical middle registers with a Markov
    transition structure, end systems quantum conditioned on the adjacent
    register.  Every grouping (1..i-1 : i+1..m | i) over a middle system
    has zero conditional mutual information.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) < 3:
        raise DimensionError(f"chain needs at least 3 systems, got {len(dims)}")
    layout = SystemLayout(dims)
    m = len(dims)
    mid = dims[1:-1]

    initial = _floored_probabilities(mid[0], rng)
    transitions = [
        np.column_stack([_floored_probabilities(mid[i + 1], rng) for _ in range(mid[i])])
        for i in range(len(mid) - 1)
    ]
    left_states = [random_density(dims[0], None, rng).matrix for _ in range(mid[0])]
    right_states = [random_density(dims[-1], None, rng).matrix for _ in range(mid[-1])]

    out = np.zeros((layout.dim, layout.dim), dtype=complex)
    for symbols in np.ndindex(*mid):
        p = initial[symbols[0]]
        for i in range(len(mid) - 1):
            p *= transitions[i][symbols[i + 1], symbols[i]]
        term = left_states[symbols[0]]
        for i, s in enumerate(symbols):
            unit = np.zeros((mid[i], mid[i]))
            unit[s, s] = 1.0
            term = np.kron(term, unit)
        term = np.kron(term, right_states[symbols[-1]])
        out += p * term
    return validate_density(linalg.hermitianize(out), layout)


# ---------------------------------------------------------------------------
# Embeddings and controlled perturbations
# ---------------------------------------------------------------------------


def embed_with_max_mixed(state: DensityOperator, side: str, d: int) -> DensityOperator:
    """Tensor a maximally mixed d-dimensional factor on the given side."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    if d == 1:
        return state
    eye = np.eye(d) / d
    if side == "left":
        matrix = linalg.kron(eye, state.matrix)
        dims = (d,) + state.layout.dims
    else:
        matrix = linalg.kron(state.matrix, eye)
        dims = state.layout.dims + (d,)
    return DensityOperator(matrix, SystemLayout(dims))


def _bisect_target(measure, target: float, *, rel_tol: float = _BISECT_REL_TOL,
                   max_iter: int = 200) -> float:
    """Find t in (0, 1] with measure(t) ~ target.

    Assumes measure(0) = 0 and measure(1) >= target.  Returns the best t
    found; raises InfeasibleTargetError if bisection cannot settle.
    """
    lo, hi = 0.0, 1.0
    best_t, best_gap = 1.0, abs(measure(1.0) - target)
    for _ in range(max_iter):
        mid = (lo + hi) / 2
        value = measure(mid)
        gap = abs(value - target)
        if gap < best_gap:
            best_t, best_gap = mid, gap
        if gap <= rel_tol * target:
            return mid
        if value < target:
            lo = mid
        else:
            hi = mid
    if best_gap <= 10 * rel_tol * target:
        return best_t
    raise InfeasibleTargetError(
        f"bisection stalled: target {target:.3e}, best gap {best_gap:.3e}"
    )


def perturb_away(
    state: DensityOperator,
    rng: np.random.Generator,
    *,
    infidelity: float | None = None,
    trace: float | None = None,
    toward: DensityOperator | None = None,
    attempts: int = 8,
) -> DensityOperator:
    """Perturbed copy of ``state`` at a requested discrepancy.

    Exactly one of ``infidelity`` (1 - F) or ``trace`` (full trace norm)
    must be given.  The output lies on a mixing path (1 - t) * state +
    t * W for a random density W (or ``toward`` when supplied); t is
    found by bisection on the measured discrepancy, relative tolerance
    about 1e-5.  Targets below the perturbation resolution return the
    input unchanged.  Raises InfeasibleTargetError when no candidate W
    brackets the target.
    """
    if (infidelity is None) == (trace is None):
        raise ValueError("specify exactly one of infidelity= or trace=")
    target = infidelity if infidelity is not None else trace
    if target < 0:
        raise ValueError(f"target must be >= 0, got {target}")
    if target <= PERTURB_RESOLUTION:
        return state

    if infidelity is not None:
        def discrepancy(candidate: DensityOperator) -> float:
            return max(0.0, 1.0 - linalg.fidelity(state.matrix, candidate.matrix, check=False))
        limit = 1.0
    else:
        def discrepancy(candidate: DensityOperator) -> float:
            return linalg.trace_distance(state.matrix, candidate.matrix)
        limit = 2.0
    if target > limit:
        raise InfeasibleTargetError(f"target {target} above the metric maximum {limit}")

    candidates = []
    if toward is not None:
        candidates.append(toward)
    else:
        for i in range(attempts):
            if i % 2 == 0:
                candidates.append(random_density(state.dim, None, rng))
            else:
                candidates.append(random_pure(state.dim, rng))

    margin = 1.0 + 1e-6
    for w in candidates:
        w = DensityOperator(w.matrix, state.layout)
        if discrepancy(w) < target * margin:
            continue
        t = _bisect_target(lambda t: discrepancy(mix(state, w, t)), target)
        return mix(state, w, t)
    raise InfeasibleTargetError(
        f"no perturbation direction reaches target {target:.3e} from this state"
    )


def perturbed_qmc(
    structure: MarkovStructure,
    layout: SystemLayout | tuple,
    rng: np.random.Generator,
    *,
    infidelity: float,
    attempts: int = 8,
) -> DensityOperator:
    """A state in the exactly-recoverable family at a requested
    infidelity from assemble_qmc(structure).

    Block factors are mixed toward a random direction structure; the mix
    weight is bisected on the measured infidelity.
    """
    if infidelity <= PERTURB_RESOLUTION:
        return assemble_qmc(structure, layout)
    base = assemble_qmc(structure, layout)
    for _ in range(attempts):
        direction = structure_directions(structure, rng)

        def discrepancy(t: float) -> float:
            candidate = assemble_qmc(mix_structure(structure, direction, t), layout)
            return max(0.0, 1.0 - linalg.fidelity(base.matrix, candidate.matrix, check=False))

        if discrepancy(1.0) < infidelity * (1.0 + 1e-6):
            continue
        t = _bisect_target(discrepancy, infidelity)
        return assemble_qmc(mix_structure(structure, direction, t), layout)
    raise InfeasibleTargetError(
        f"block perturbations do not reach infidelity {infidelity:.3e}"
    )
