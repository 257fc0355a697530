"""Polynomial feedback extraction from the occupation-measure moments of a relaxation."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .poly import Monomial, monomial_basis, polynomial_from_coefficients
from .relax import basis_index
from .sim import ControlWindow, PolynomialControl

logger = logging.getLogger(__name__)

EIGEN_CUTOFF = 1e-8
ZERO_MASS = 1e-12


class SynthesisError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModeMoments:
    mode: int
    n_states: int
    n_inputs: int
    degree: int
    values: np.ndarray
    scaling: object
    min_eigenvalues: tuple[float, ...] = ()

    def moment(self, mono):
        return self.values[basis_index(self.n_states + self.n_inputs, self.degree)[mono]]

    def matrix(self, d):
        """M_d over the state monomials (clock included) in scaled coordinates."""
        basis = monomial_basis(self.n_states, d)
        return np.array([[self.moment(a * b) for b in basis] for a in basis])

    def input_moments(self, d, k):
        basis = monomial_basis(self.n_states, d)
        u = Monomial.variable(self.n_states + k)
        return np.array([self.moment(a * u) for a in basis])


@dataclass
class MomentData:
    modes: dict = field(default_factory=dict)
    horizon: tuple[float, float] = (0.0, 1.0)
    bounds: object = None

    @classmethod
    def from_moments(cls, relaxation, y):
        y = np.asarray(y, dtype=float)
        m = relaxation.system.n_inputs
        modes = {}
        for mode in relaxation.system.modes:
            measure = relaxation.layout.occupation(mode.index)
            values = y[measure.offset : measure.offset + measure.size]
            entry = ModeMoments(
                mode=mode.index,
                n_states=mode.dim,
                n_inputs=m,
                degree=measure.degree,
                values=values,
                scaling=relaxation.scalings[mode.index],
            )
            eigenvalues = tuple(
                float(np.linalg.eigvalsh(entry.matrix(d))[0])
                for d in range(relaxation.order + 1)
            )
            modes[mode.index] = ModeMoments(**{**entry.__dict__, "min_eigenvalues": eigenvalues})
        return cls(modes=modes, horizon=relaxation.horizon, bounds=relaxation.system.inputs)

    @classmethod
    def from_solution(cls, relaxation, solution):
        return cls.from_moments(relaxation, relaxation.moments(solution))


def _pseudo_solve(matrix, rhs, mode):
    eigenvalues, vectors = np.linalg.eigh(matrix)
    top = eigenvalues[-1]
    if top <= ZERO_MASS:
        raise SynthesisError(
            f"mode {mode}: moment matrix is numerically zero "
            f"(largest eigenvalue {top:.3g}, condition number inf)"
        )
    keep = eigenvalues > EIGEN_CUTOFF * top
    if not keep.any():
        condition = top / max(abs(eigenvalues[0]), np.finfo(float).tiny)
        raise SynthesisError(
            f"mode {mode}: moment matrix singular (condition number {condition:.3g})"
        )
    projected = vectors[:, keep].T @ rhs
    return vectors[:, keep] @ (projected / eigenvalues[keep])


def scaled_law(entry, d_u):
    """Coefficient vectors (one per input) over the scaled state basis of degree d_u."""
    matrix = entry.matrix(d_u)
    return [
        _pseudo_solve(matrix, entry.input_moments(d_u, k), entry.mode)
        for k in range(entry.n_inputs)
    ]


def residual(entry, d_u):
    """Relative ||M c - w|| of the extraction at degree d_u, worst over inputs."""
    matrix = entry.matrix(d_u)
    worst = 0.0
    for k, coefficients in enumerate(scaled_law(entry, d_u)):
        rhs = entry.input_moments(d_u, k)
        scale = max(np.linalg.norm(rhs), ZERO_MASS)
        worst = max(worst, np.linalg.norm(matrix @ coefficients - rhs) / scale)
    return worst


def descale(entry, d_u, coefficients):
    scaling = entry.scaling
    basis = monomial_basis(entry.n_states, d_u)
    scaled = polynomial_from_coefficients(basis, coefficients, entry.n_states)
    return scaling.unscale_state_polynomial(scaled) * scaling.zeta


def extract_control(data, d_u):
    """Per-mode polynomial feedback of degree ``d_u`` over the window of ``data``."""
    if d_u < 0:
        raise ValueError(f"control degree must be non-negative, got {d_u}")
    laws = {}
    for index, entry in sorted(data.modes.items()):
        if 2 * d_u > entry.degree:
            raise ValueError(
                f"control degree {d_u} needs moments of degree {2 * d_u}, "
                f"only {entry.degree} available"
            )
        coefficients = scaled_law(entry, d_u)
        laws[index] = tuple(descale(entry, d_u, c) for c in coefficients)
        logger.debug("mode %d: degree %d control extracted", index, d_u)
    return PolynomialControl([ControlWindow(*data.horizon, laws)], data.bounds)
