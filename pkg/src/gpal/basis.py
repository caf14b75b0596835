"""Candidate basis libraries and their evaluation.

An *atom* is one of: the coordinate ``x_s``, the state ``u_r``, or a spatial
derivative of ``u_r`` described by a multi-index ``alpha`` (per-coordinate
derivative orders).  A *term* is a multiset of atoms; the empty multiset is
the constant ``1``.  Terms render as ASCII names such as ``u*u_x1`` or
``x1*u_x1x2`` (coordinates and derivative indices are 1-based in names).
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gpal.core import DimensionError, Observation, as_points

MAX_SURROGATE_ORDER = 2


class CapabilityError(ValueError):
    """Requested derivative order is beyond what the surrogate provides."""


@dataclass(frozen=True, order=True)
class Atom:
    """``kind`` is ``"x"`` (coordinate ``index``) or ``"u"`` (state ``index``)."""

    kind: str
    index: int
    alpha: tuple[int, ...] = ()

    @property
    def order(self) -> int:
        return sum(self.alpha)

    def sort_key(self):
        if self.kind == "x":
            return (0, 0, 0, (self.index,), 0)
        dims = tuple(s for s, a in enumerate(self.alpha) for _ in range(a))
        return (1, self.order, len(set(dims)), dims, self.index)

    def name(self, d: int) -> str:
        if self.kind == "x":
            return f"x{self.index + 1}"
        base = "u" if d == 1 else f"u{self.index + 1}"
        if self.order == 0:
            return base
        dims = "".join(f"x{s + 1}" * a for s, a in enumerate(self.alpha))
        return f"{base}_{dims}"


@dataclass(frozen=True)
class BasisTerm:
    factors: tuple[Atom, ...]
    display_name: str

    @property
    def degree(self) -> int:
        return len(self.factors)

    @property
    def is_constant(self) -> bool:
        return not self.factors


def _term_key(factors: Sequence[Atom]):
    return (len(factors), tuple(a.sort_key() for a in factors))


def _make_term(factors, d: int) -> BasisTerm:
    factors = tuple(sorted(factors, key=Atom.sort_key))
    name = "*".join(a.name(d) for a in factors) if factors else "1"
    return BasisTerm(factors, name)


class BasisLibrary:
    """Ordered, deduplicated list of basis terms."""

    def __init__(self, terms: Sequence[BasisTerm], p: int, d: int):
        seen = set()
        for t in terms:
            key = tuple(sorted(t.factors, key=Atom.sort_key))
            if key in seen:
                raise ValueError(f"duplicate basis term {t.display_name}")
            seen.add(key)
            for a in t.factors:
                if a.kind == "x" and not 0 <= a.index < p:
                    raise DimensionError(f"coordinate atom {a} outside p={p}")
                if a.kind == "u" and (not 0 <= a.index < d or (a.alpha and len(a.alpha) != p)):
                    raise DimensionError(f"state atom {a} inconsistent with p={p}, d={d}")
        self.terms = tuple(terms)
        self.p = p
        self.d = d

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    @property
    def names(self) -> list[str]:
        return [t.display_name for t in self.terms]

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def atoms(self) -> list[Atom]:
        return sorted({a for t in self.terms for a in t.factors}, key=Atom.sort_key)

    @property
    def max_derivative_order(self) -> int:
        return max((a.order for a in self.atoms), default=0)

    def coefficient_vector(self, mapping: dict[str, float]) -> np.ndarray:
        """Coefficient vector from a ``{term name: value}`` mapping."""
        beta = np.zeros(len(self))
        for name, val in mapping.items():
            beta[self.index(name)] = val
        return beta

    def evaluate_atoms(self, atom_values: dict[Atom, np.ndarray]) -> np.ndarray:
        """Model matrix ``(m, k)`` from per-atom value arrays of length ``m``."""
        m = len(next(iter(atom_values.values()))) if atom_values else 1
        M = np.ones((m, len(self)))
        for c, term in enumerate(self.terms):
            for a in term.factors:
                M[:, c] *= atom_values[a]
        return M


def _multi_indices(p: int, order: int) -> list[tuple[int, ...]]:
    out = []
    for dims in itertools.combinations_with_replacement(range(p), order):
        out.append(tuple(dims.count(s) for s in range(p)))
    return out


def build_library(p: int, d: int, k1: int, k2: int, include_coords: bool = True) -> BasisLibrary:
    """Tensor-product library of degree ``k1`` over coordinates, states and
    state derivatives up to order ``k2``."""
    if k1 < 1 or k2 < 0:
        raise ValueError("need k1 >= 1 and k2 >= 0")
    atoms = []
    if include_coords:
        atoms += [Atom("x", s) for s in range(p)]
    for r in range(d):
        atoms.append(Atom("u", r, (0,) * p))
        for order in range(1, k2 + 1):
            atoms += [Atom("u", r, alpha) for alpha in _multi_indices(p, order)]
    atoms.sort(key=Atom.sort_key)
    factor_sets = set()
    for degree in range(0, k1 + 1):
        for combo in itertools.combinations_with_replacement(atoms, degree):
            factor_sets.add(tuple(sorted(combo, key=Atom.sort_key)))
    ordered = sorted(factor_sets, key=_term_key)
    return BasisLibrary([_make_term(f, d) for f in ordered], p, d)


def build_monomial_library(d: int, max_degree: int) -> BasisLibrary:
    """All monomials in ``d`` states of total degree at most ``max_degree``."""
    if max_degree < 1:
        raise ValueError("max_degree must be at least 1")
    return build_library(1, d, max_degree, 0, include_coords=False)


_ATOM_RE = re.compile(r"^(x(\d+)|u(\d*)(?:_((?:x\d+)+))?)$")


def parse_atom(token: str, p: int, d: int) -> Atom:
    m = _ATOM_RE.match(token)
    if not m:
        raise ValueError(f"cannot parse atom {token!r}")
    if m.group(2):
        return Atom("x", int(m.group(2)) - 1)
    r = int(m.group(3)) - 1 if m.group(3) else 0
    alpha = [0] * p
    if m.group(4):
        for s in re.findall(r"x(\d+)", m.group(4)):
            alpha[int(s) - 1] += 1
    return Atom("u", r, tuple(alpha))


def library_from_names(names: Sequence[str], p: int, d: int) -> BasisLibrary:
    """Library with terms in exactly the given order, e.g. ``["1", "u*u_x1"]``."""
    terms = []
    for name in names:
        factors = [] if name == "1" else [parse_atom(tok, p, d) for tok in name.split("*")]
        terms.append(_make_term(factors, d))
    return BasisLibrary(terms, p, d)


BURGERS_TERM_NAMES = (
    "1", "u", "u*u", "u*u*u", "u_x1", "u_x1*u_x1", "u_x1*u_x1*u_x1", "u*u_x1",
    "u*u*u_x1", "u*u_x1*u_x1", "u_x1x1", "u_x1x1*u_x1x1", "u_x1x1*u_x1x1*u_x1x1",
    "u*u_x1x1", "u*u*u_x1x1", "u*u_x1x1*u_x1x1", "u_x1*u_x1x1", "u_x1*u_x1*u_x1x1",
    "u_x1*u_x1x1*u_x1x1", "u*u_x1*u_x1x1",
)


def burgers_library() -> BasisLibrary:
    """The fixed 20-term Burgers candidate set, in its published order."""
    return library_from_names(BURGERS_TERM_NAMES, p=1, d=1)


def _observation_atom_value(atom: Atom, obs: Observation) -> float:
    if atom.kind == "x":
        return float(obs.point[atom.index])
    if atom.order == 0:
        return float(obs.state[atom.index])
    try:
        return float(obs.spatial_derivatives[atom.alpha][atom.index])
    except KeyError:
        raise KeyError(f"observation lacks derivative atom {atom.name(obs.d)}") from None


def eval_from_observation(lib: BasisLibrary, obs: Observation) -> np.ndarray:
    """Model-matrix row for one observation."""
    values = {a: np.array([_observation_atom_value(a, obs)]) for a in lib.atoms}
    return lib.evaluate_atoms(values)[0]


def model_matrix(lib: BasisLibrary, observations: Sequence[Observation]) -> np.ndarray:
    values = {
        a: np.array([_observation_atom_value(a, o) for o in observations]) for a in lib.atoms
    }
    if not observations:
        return np.empty((0, len(lib)))
    return lib.evaluate_atoms(values)


def eval_from_surrogate(lib: BasisLibrary, models, query) -> np.ndarray:
    """Model-matrix rows with states and derivatives taken from GP surrogates.

    ``models`` holds one fitted :class:`~gpal.gp.GpModel` per state dimension.
    ``query`` may be a single point or an ``(m, p)`` array; the result is
    ``(k,)`` or ``(m, k)`` accordingly.
    """
    if lib.max_derivative_order > MAX_SURROGATE_ORDER:
        raise CapabilityError(
            f"library needs derivatives of order {lib.max_derivative_order}; "
            f"surrogates provide up to {MAX_SURROGATE_ORDER}"
        )
    if len(models) != lib.d:
        raise DimensionError(f"{len(models)} surrogate models for d={lib.d} states")
    ndim = np.asarray(query).ndim
    single = ndim == 0 or (ndim == 1 and lib.p > 1)
    Q = as_points(query, lib.p)
    needed = {a.index for a in lib.atoms if a.kind == "u"}
    cache = {r: models[r].derivatives(Q) for r in needed}
    values = {}
    for a in lib.atoms:
        if a.kind == "x":
            values[a] = Q[:, a.index]
            continue
        val, grad, hess = cache[a.index]
        if a.order == 0:
            values[a] = val
        elif a.order == 1:
            values[a] = grad[:, a.alpha.index(1)]
        else:
            dims = [s for s, k in enumerate(a.alpha) for _ in range(k)]
            values[a] = hess[:, dims[0], dims[1]]
    M = lib.evaluate_atoms(values) if values else np.ones((Q.shape[0], len(lib)))
    return M[0] if single else M
