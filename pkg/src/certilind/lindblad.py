"""Lindblad model definition and application on truncated spaces.

A model is shape-independent: Hamiltonian terms (time-dependent scalar
coefficient times an operator expression) plus a list of jump-operator
expressions.  Expressions are polynomial words, GKP-type composites
A*exp(i eta q)(Id - eps p) - Id conjugated by Fock rotations, or cosines
of linear q/p combinations.  Truncations are always exact: polynomial
content goes through ``materialize_poly`` and unitary content through
the displacement closed form, so applying the truncated generator on an
adequately grown shape reproduces the untruncated action on states
supported in the original shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np
from scipy import sparse

from .fockspace import (
    DenseOperator,
    TruncationShape,
    basis_map,
    dimension,
    embed,
    grow,
)
from .operators import (
    PolyOperator,
    _grow_by_margin,
    cosine_of,
    displacement_block,
    materialize_poly,
)

__all__ = [
    "CoefficientFn",
    "PolyExpr",
    "GkpDissipator",
    "CosineExpr",
    "OperatorExpr",
    "LindbladModel",
    "DensityState",
    "ModelError",
    "growth_margin",
    "grown_shape",
    "apply_truncated",
    "apply_exact_embedded",
    "tensor_assemble",
    "truncated_expr",
    "lindblad_superoperator",
    "validate_state",
]

SPARSE_DIM_THRESHOLD = 64


class ModelError(ValueError):
    """Model construction or validation failure."""


@dataclass(frozen=True, eq=False)
class CoefficientFn:
    """Time-dependent scalar coefficient with optional regularity bounds.

    ``sup`` and ``dsup`` dominate |u| and |u'| over the run interval;
    they unlock the explicit-Euler time certificate and are never
    estimated by sampling.
    """

    fn: Callable[[float], float]
    sup: float | None = None
    dsup: float | None = None
    const_value: float | None = None
    label: str = "u(t)"

    def __call__(self, t: float) -> float:
        if self.const_value is not None:
            return self.const_value
        return float(self.fn(t))

    @property
    def is_constant(self) -> bool:
        return self.const_value is not None

    @classmethod
    def constant(cls, value: float) -> "CoefficientFn":
        value = float(value)
        return cls(
            fn=lambda t: value,
            sup=abs(value),
            dsup=0.0,
            const_value=value,
            label=repr(value),
        )


@dataclass(frozen=True)
class PolyExpr:
    poly: PolyOperator


@dataclass(frozen=True)
class GkpDissipator:
    """A * exp(i eta q) (Id - eps p) - Id, conjugated by R^sector."""

    amplitude: float
    eta: float
    eps: float
    sector: int = 0

    def __post_init__(self):
        if self.sector not in (0, 1, 2, 3):
            raise ModelError("GKP sector must be 0..3")


@dataclass(frozen=True)
class CosineExpr:
    """cos(O) with O a real linear combination of q and p operators."""

    arg: PolyOperator


OperatorExpr = Union[PolyExpr, GkpDissipator, CosineExpr]


@dataclass(frozen=True, eq=False)
class LindbladModel:
    mode_count: int
    hamiltonian: tuple[tuple[CoefficientFn, OperatorExpr], ...] = ()
    dissipators: tuple[OperatorExpr, ...] = ()
    parameters: tuple[tuple[str, float], ...] = ()

    def __init__(self, mode_count, hamiltonian=(), dissipators=(), parameters=()):
        object.__setattr__(self, "mode_count", int(mode_count))
        object.__setattr__(self, "hamiltonian", tuple(hamiltonian))
        object.__setattr__(self, "dissipators", tuple(dissipators))
        object.__setattr__(self, "parameters", tuple(parameters))
        object.__setattr__(self, "kind", self._classify())

    def _classify(self) -> str:
        exprs = [expr for _, expr in self.hamiltonian] + list(self.dissipators)
        for coeff, _ in self.hamiltonian:
            if not isinstance(coeff, CoefficientFn):
                raise ModelError("Hamiltonian coefficients must be CoefficientFn")
        if any(isinstance(e, GkpDissipator) for e in exprs):
            if self.hamiltonian or not all(
                isinstance(e, GkpDissipator) for e in self.dissipators
            ):
                raise ModelError(
                    "GKP jump operators cannot be mixed with the generic path"
                )
            if self.mode_count != 1:
                raise ModelError("GKP models are single-mode")
            return "gkp"
        if any(isinstance(e, CosineExpr) for e in exprs):
            if self.dissipators or not all(
                isinstance(e, CosineExpr) for _, e in self.hamiltonian
            ):
                raise ModelError(
                    "cosine terms cannot be mixed with the generic path; "
                    "cosine jump operators are unsupported"
                )
            return "cosine"
        for e in exprs:
            if not isinstance(e, PolyExpr):
                raise ModelError(f"unknown operator expression {e!r}")
            if e.poly.mode_count != self.mode_count:
                raise ModelError("operator mode count does not match model")
        return "poly"

    @property
    def is_time_invariant(self) -> bool:
        return all(c.is_constant for c, _ in self.hamiltonian)


@dataclass(frozen=True, eq=False)
class DensityState:
    rho: DenseOperator
    time: float = 0.0


def validate_state(state: DensityState, certified_trace: float = 1.0) -> list[str]:
    """Soft invariant checks; returns warning strings, never mutates."""
    msgs = []
    mat = state.rho.matrix
    scale = max(float(np.linalg.norm(mat)), 1e-30)
    herm_defect = float(np.linalg.norm(mat - mat.conj().T)) / scale
    if herm_defect > 1e-10:
        msgs.append(f"hermiticity defect {herm_defect:.2e} at t={state.time}")
    tr = float(np.trace(mat).real)
    if abs(tr - certified_trace) > 1e-8:
        msgs.append(
            f"trace {tr!r} deviates from certified value {certified_trace!r}"
        )
    eigmin = float(np.linalg.eigvalsh(0.5 * (mat + mat.conj().T)).min())
    if eigmin < -1e-8:
        msgs.append(f"negative eigenvalue {eigmin:.2e} at t={state.time}")
    return msgs


# ---------------------------------------------------------------------------
# growth margins
# ---------------------------------------------------------------------------


def growth_margin(model: LindbladModel) -> tuple[int, ...]:
    """Per-mode margin d with L(rho_N) = L_{N+d}(rho_N) for polynomial models.

    Hamiltonian terms contribute their per-mode word degree, jump
    operators twice theirs; jump operators whose defect vanishes
    identically (pure lowering structure) contribute nothing.
    """
    if model.kind != "poly":
        raise ModelError(
            "growth margin is defined for polynomial models only; GKP and "
            "cosine content uses its dedicated estimator path"
        )
    margin = [0] * model.mode_count
    for _, expr in model.hamiltonian:
        for j, d in enumerate(expr.poly.per_mode_degree()):
            margin[j] = max(margin[j], d)
    for expr in model.dissipators:
        if expr.poly.is_lowering_exact():
            continue
        for j, d in enumerate(expr.poly.per_mode_degree()):
            margin[j] = max(margin[j], 2 * d)
    return tuple(margin)


def grown_shape(model: LindbladModel, shape: TruncationShape, factor: int = 1) -> TruncationShape:
    """Shape enlarged by ``factor`` growth margins (weighted shapes grow
    their cap by the weighted margin)."""
    margin = growth_margin(model)
    return _grow_by_margin(shape, tuple(factor * m for m in margin))


# ---------------------------------------------------------------------------
# exact truncation of operator expressions
# ---------------------------------------------------------------------------


def _gkp_q_poly(amplitude: float, eps: float) -> PolyOperator:
    return amplitude * (
        PolyOperator.identity(1) - eps * PolyOperator.momentum(1, 0)
    )


def _single_mode_caps(shape: TruncationShape) -> np.ndarray:
    if shape.mode_count != 1:
        raise ModelError("GKP expressions require a single-mode shape")
    return basis_map(shape).occupations(0)


def _displacement_rows_cols(
    occ_rows: np.ndarray, occ_cols: np.ndarray, eta: float
) -> np.ndarray:
    kr, kc = int(occ_rows.max()), int(occ_cols.max())
    table = displacement_block(kr + 1, kc + 1, 1j * eta / math.sqrt(2.0))
    return table[np.ix_(occ_rows, occ_cols)]


@lru_cache(maxsize=256)
def _gkp_truncated_gamma(
    amplitude: float, eta: float, eps: float, sector: int, shape: TruncationShape
) -> DenseOperator:
    """Exact P (R^k Gamma_0 R^-k) P via a one-step margin for the degree-1
    polynomial factor."""
    occ = _single_mode_caps(shape)
    big = grow(shape, 1)
    occ_big = basis_map(big).occupations(0)
    u_block = _displacement_rows_cols(occ, occ_big, eta)  # P U P_(N+1)
    q_big = materialize_poly(_gkp_q_poly(amplitude, eps), big).matrix
    idx = [basis_map(big).index[s] for s in basis_map(shape).states]
    uq = u_block @ q_big[:, idx]  # P U Q P, exact
    gamma0 = uq - np.eye(len(occ))
    if sector % 4:
        r = np.power(1j, (sector * occ) % 4)
        gamma0 = (r[:, None] * gamma0) * r.conj()[None, :]
    return DenseOperator(shape, gamma0)


def truncated_expr(expr: OperatorExpr, shape: TruncationShape) -> DenseOperator:
    """Exact truncation of an operator expression to a shape."""
    if isinstance(expr, PolyExpr):
        return materialize_poly(expr.poly, shape)
    if isinstance(expr, GkpDissipator):
        return _gkp_truncated_gamma(
            expr.amplitude, expr.eta, expr.eps, expr.sector, shape
        )
    if isinstance(expr, CosineExpr):
        return cosine_of(expr.arg, shape)
    raise ModelError(f"unknown operator expression {expr!r}")


# ---------------------------------------------------------------------------
# fast application of the truncated generator
# ---------------------------------------------------------------------------


def _diagonal_of(mat: np.ndarray) -> np.ndarray | None:
    diag = np.diagonal(mat)
    if np.count_nonzero(mat - np.diag(diag)) == 0:
        return diag.copy()
    return None


class _ShapedGenerator:
    """Materialized truncated operators of a model on one shape.

    Above a dimension threshold left factors are CSR, right factors CSC
    (both keep scipy on its fast multiplication path), and diagonal
    operators collapse to fused broadcast updates.  Ladder-polynomial
    operators are banded, so this cuts the cost of one generator
    application by an order of magnitude at reference sizes.
    """

    def __init__(self, model: LindbladModel, shape: TruncationShape):
        self.model = model
        self.shape = shape
        self.dim = dimension(shape)
        self.use_sparse = self.dim >= SPARSE_DIM_THRESHOLD

        def left(mat):
            return sparse.csr_matrix(mat) if self.use_sparse else mat

        def right(mat):
            return sparse.csc_matrix(mat) if self.use_sparse else mat

        self.h_diag = []  # (coeff, d_i - d_j grid) for diagonal H terms
        self.h_terms = []
        self.d_terms = []
        self.k_grids = []  # fused -(gdg_i + gdg_j)/2 grids for diagonal gdg
        for coeff, expr in model.hamiltonian:
            h = truncated_expr(expr, shape).matrix
            diag = _diagonal_of(h)
            if diag is not None:
                self.h_diag.append((coeff, diag[:, None] - diag[None, :]))
            else:
                self.h_terms.append((coeff, left(h), right(h)))
        for expr in model.dissipators:
            g = truncated_expr(expr, shape).matrix
            gdg = g.conj().T @ g
            kdiag = _diagonal_of(gdg)
            if kdiag is not None:
                self.k_grids.append(-0.5 * (kdiag[:, None] + kdiag[None, :]))
                self.d_terms.append((left(g), right(g.conj().T), None))
            else:
                self.d_terms.append(
                    (left(g), right(g.conj().T), (left(gdg), right(gdg)))
                )

    def apply(self, t: float, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho)
        for coeff, grid in self.h_diag:
            u = coeff(t)
            if u == 0.0:
                continue
            hr = grid * rho
            hr *= -1j * u
            out += hr
        for coeff, h_left, h_right in self.h_terms:
            u = coeff(t)
            if u == 0.0:
                continue
            hr = h_left @ rho
            hr *= -1j * u
            out += hr
            rh = rho @ h_right
            rh *= 1j * u
            out += rh
        for g_left, gd_right, gdg_pair in self.d_terms:
            out += (g_left @ rho) @ gd_right
            if gdg_pair is not None:
                gdg_left, gdg_right = gdg_pair
                k1 = gdg_left @ rho
                k1 *= -0.5
                out += k1
                k2 = rho @ gdg_right
                k2 *= -0.5
                out += k2
        for grid in self.k_grids:
            out += grid * rho
        return out


@lru_cache(maxsize=64)
def shaped_generator(model: LindbladModel, shape: TruncationShape) -> _ShapedGenerator:
    return _ShapedGenerator(model, shape)


def apply_truncated(
    model: LindbladModel, t: float, rho: DenseOperator
) -> DenseOperator:
    """L_N(rho): commutator plus dissipators built from exactly-truncated
    operators on rho's shape."""
    gen = shaped_generator(model, rho.shape)
    return DenseOperator(rho.shape, gen.apply(t, np.asarray(rho.matrix)))


def apply_exact_embedded(
    model: LindbladModel, t: float, rho: DenseOperator
) -> DenseOperator:
    """L(rho) represented exactly on the margin-grown shape."""
    big = grown_shape(model, rho.shape)
    return apply_truncated(model, t, embed(rho, big))


def tensor_assemble(models: Sequence[LindbladModel]) -> LindbladModel:
    """Concatenate models over disjoint mode blocks into one multi-mode model.

    Polynomial letters are re-indexed by the cumulative mode offset;
    Hamiltonian terms and jump operators are concatenated in order.
    """
    models = list(models)
    if not models:
        raise ModelError("nothing to assemble")
    if len(models) == 1:
        return models[0]
    total = sum(m.mode_count for m in models)
    ham = []
    diss = []
    params = []
    offset = 0
    for m in models:
        if m.kind != "poly":
            raise ModelError("tensor_assemble supports polynomial models only")
        for coeff, expr in m.hamiltonian:
            ham.append((coeff, PolyExpr(expr.poly.shift_modes(offset, total))))
        for expr in m.dissipators:
            diss.append(PolyExpr(expr.poly.shift_modes(offset, total)))
        params.extend(m.parameters)
        offset += m.mode_count
    return LindbladModel(total, ham, diss, tuple(params))


def lindblad_superoperator(
    model: LindbladModel, t: float, shape: TruncationShape
) -> np.ndarray:
    """Dense superoperator matrix of L_N for row-major vectorization.

    Desk-scale only; used by oracles and the contraction checks.
    """
    d = dimension(shape)
    eye = np.eye(d)
    sup = np.zeros((d * d, d * d), dtype=np.complex128)
    for coeff, expr in model.hamiltonian:
        h = truncated_expr(expr, shape).matrix
        u = coeff(t)
        sup += -1j * u * (np.kron(h, eye) - np.kron(eye, h.T))
    for expr in model.dissipators:
        g = truncated_expr(expr, shape).matrix
        gdg = g.conj().T @ g
        sup += np.kron(g, g.conj())
        sup -= 0.5 * (np.kron(gdg, eye) + np.kron(eye, gdg.T))
    return sup
